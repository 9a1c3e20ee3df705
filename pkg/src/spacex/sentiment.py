"""Commit-message sentiment behind a small classifier contract.

The default classifier counts whole-word hits against two bundled word
lists.  ``ExternalClassifier`` shells out to any program that reads one
message per line and answers ``positive``, ``negative`` or ``neutral``
per line, which is how a transformer model can be plugged in.
"""

from __future__ import annotations

import re
import shlex
import subprocess
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .errors import EmptyInput, SpacexError


class SentimentLabel(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class SentimentClassifier(Protocol):
    model_id: str

    def classify(self, message: str) -> SentimentLabel: ...

    def classify_many(self, messages: Sequence[str]) -> list[SentimentLabel]: ...


def read_lexicon(path_or_text: str | Path, is_text: bool = False) -> frozenset[str]:
    text = path_or_text if is_text else Path(path_or_text).read_text(encoding="utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


def _bundled(name: str) -> frozenset[str]:
    return read_lexicon(resources.files("spacex.lexicon").joinpath(name).read_text(encoding="utf-8"), is_text=True)


_APOSTROPHES = re.compile(r"['\u2019]")
_WORD = re.compile(r"[^\W_]+")


def tokenize(message: str) -> list[str]:
    return _WORD.findall(_APOSTROPHES.sub("", message.lower()))


class LexiconClassifier:
    """Score = positive hits - negative hits; the sign picks the label."""

    def __init__(self, positive: Iterable[str] | None = None, negative: Iterable[str] | None = None,
                 model_id: str = "lexicon-default-v1"):
        self.positive = frozenset(positive) if positive is not None else _bundled("positive.txt")
        self.negative = frozenset(negative) if negative is not None else _bundled("negative.txt")
        self.model_id = model_id

    def score(self, message: str) -> int:
        tokens = tokenize(message)
        return sum(t in self.positive for t in tokens) - sum(t in self.negative for t in tokens)

    def classify(self, message: str) -> SentimentLabel:
        s = self.score(message)
        if s > 0:
            return SentimentLabel.POSITIVE
        if s < 0:
            return SentimentLabel.NEGATIVE
        return SentimentLabel.NEUTRAL

    def classify_many(self, messages: Sequence[str]) -> list[SentimentLabel]:
        return [self.classify(m) for m in messages]


class ExternalClassifierError(SpacexError):
    pass


def escape_message(message: str) -> str:
    return message.replace("\r\n", "\\n").replace("\n", "\\n").replace("\r", "\\n")


class ExternalClassifier:
    """Line-in/label-out adapter around an external program."""

    def __init__(self, command: str | Sequence[str], timeout: float | None = 600):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.model_id = "external:" + " ".join(self.argv)
        self.timeout = timeout

    def classify_many(self, messages: Sequence[str]) -> list[SentimentLabel]:
        if not messages:
            return []
        stdin = "".join(escape_message(m) + "\n" for m in messages)
        try:
            result = subprocess.run(self.argv, input=stdin, capture_output=True, text=True,
                                    timeout=self.timeout, check=False)
        except OSError as exc:
            raise ExternalClassifierError(f"cannot run classifier {self.argv[0]!r}: {exc}") from exc
        if result.returncode != 0:
            raise ExternalClassifierError(f"classifier exited {result.returncode}: {result.stderr.strip()}")
        lines = result.stdout.splitlines()
        if len(lines) != len(messages):
            raise ExternalClassifierError(f"classifier returned {len(lines)} labels for {len(messages)} messages")
        try:
            return [SentimentLabel(line.strip().lower()) for line in lines]
        except ValueError as exc:
            raise ExternalClassifierError(f"classifier produced an unknown label: {exc}") from exc

    def classify(self, message: str) -> SentimentLabel:
        return self.classify_many([message])[0]


_DEFAULT = LexiconClassifier()


def classify_message(message: str, classifier: SentimentClassifier | None = None) -> SentimentLabel:
    return (classifier or _DEFAULT).classify(message)


def negative_commit_percentage(labels: Sequence[SentimentLabel | str]) -> float:
    if not labels:
        raise EmptyInput("negative_commit_percentage needs at least one label")
    negatives = sum(SentimentLabel(label) is SentimentLabel.NEGATIVE for label in labels)
    return 100.0 * negatives / len(labels)
