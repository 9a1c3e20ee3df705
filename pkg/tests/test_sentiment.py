import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spacex.errors import EmptyInput
from spacex.sentiment import (
    ExternalClassifier,
    ExternalClassifierError,
    LexiconClassifier,
    SentimentLabel,
    classify_message,
    negative_commit_percentage,
    read_lexicon,
)

NEG, POS, NEU = SentimentLabel.NEGATIVE, SentimentLabel.POSITIVE, SentimentLabel.NEUTRAL


@pytest.mark.parametrize("msg,label", [
    ("great cleanup, works nicely", POS), ("horrible bug, broken build", NEG), ("", NEU),
    ("not good", POS),  # no negation handling by design
])
def test_classify_examples(msg, label):
    assert classify_message(msg) is label


def test_custom_lexicon_and_model_id():
    clf = LexiconClassifier(positive={"yay"}, negative={"meh"}, model_id="tiny")
    assert clf.classify("yay yay meh") is POS
    assert clf.model_id == "tiny"


def test_read_lexicon_skips_comments():
    assert read_lexicon("# words\nGood\n\n  fine\n", is_text=True) == {"good", "fine"}


words = st.lists(st.sampled_from(["great", "broken", "crash", "clean", "parser", "fix", "nice", "awful", "x1"]),
                 max_size=8)
seps = st.sampled_from([" ", ", ", "! ", " - ", "... ", "; ", "? "])


@given(words, st.lists(seps, min_size=8, max_size=8), st.booleans())
def test_label_ignores_case_and_punctuation(ws, separators, upper):
    plain = " ".join(ws)
    noisy = "".join(w + s for w, s in zip(ws, separators))
    noisy = noisy.upper() if upper else noisy.title()
    assert classify_message(plain) is classify_message(noisy)


@pytest.mark.parametrize("labels,pct", [
    ([NEG] * 2 + [NEU] * 8, 20.0), ([POS] * 7, 0.0), ([NEG] * 3, 100.0), (["negative", "neutral"], 50.0),
])
def test_negative_percentage(labels, pct):
    assert negative_commit_percentage(labels) == pct


def test_negative_percentage_empty():
    with pytest.raises(EmptyInput):
        negative_commit_percentage([])


@given(st.lists(st.sampled_from(list(SentimentLabel)), min_size=1, max_size=40), st.randoms())
def test_negative_percentage_range_and_permutation(labels, rnd):
    pct = negative_commit_percentage(labels)
    shuffled = list(labels)
    rnd.shuffle(shuffled)
    assert 0 <= pct <= 100
    assert negative_commit_percentage(shuffled) == pct


ECHO = ("import sys\n"
        "for line in sys.stdin:\n"
        "    print('negative' if 'bad' in line else ('positive' if '\\\\n' in line else 'neutral'))\n")


def test_external_classifier_protocol(tmp_path):
    script = tmp_path / "clf.py"
    script.write_text(ECHO)
    clf = ExternalClassifier([sys.executable, str(script)])
    assert clf.classify_many(["bad news", "two\nlines", "plain"]) == [NEG, POS, NEU]
    assert clf.model_id.startswith("external:")


def test_external_classifier_wrong_count(tmp_path):
    script = tmp_path / "clf.py"
    script.write_text("print('neutral')\nprint('neutral')\n")
    with pytest.raises(ExternalClassifierError):
        ExternalClassifier([sys.executable, str(script)]).classify_many(["one"])
