"""Builders shared by the tests: in-memory histories and scripted git repos."""

from __future__ import annotations

import os
import subprocess
import time
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone
from pathlib import Path

from spacex.ingest import CommitRecord, FileDelta, Hunk, RepoHistory

T0 = datetime(2024, 3, 1, 9, 0, tzinfo=timezone.utc)

# one "ACn PASS|FAIL ..." line per acceptance criterion, echoed in the terminal summary
CRITERIA: list[str] = []


@contextmanager
def criterion(number: int, title: str, budget_s: float | None = None):
    """Time the block, enforce the runtime budget and record a PASS/FAIL line."""
    start = time.perf_counter()
    passed = False
    try:
        yield
        elapsed = time.perf_counter() - start
        assert budget_s is None or elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
        passed = True
    finally:
        elapsed = time.perf_counter() - start
        budget = f" / {budget_s:g}s" if budget_s else ""
        line = f"AC{number} {'PASS' if passed else 'FAIL'} {title} ({elapsed:.2f}s{budget})"
        CRITERIA.append(line)
        print(line)


def at(hours: float) -> datetime:
    return T0 + timedelta(hours=hours)


def delta(path: str, added: int = 1, removed: int = 0, hunks=None, **kw) -> FileDelta:
    if hunks is None:
        hunks = (Hunk(0, 0, 1, added),) if added and not removed else ()
    return FileDelta(path, added, removed, hunks=tuple(hunks), **kw)


def commit(cid: str, author: str, hours: float, files=(), message: str = "update",
           name: str | None = None, is_merge: bool = False) -> CommitRecord:
    email = author if "@" in author else f"{author}@example.org"
    return CommitRecord(cid, name or author.split("@")[0], email, at(hours), message,
                        tuple(delta(f) if isinstance(f, str) else f for f in files), is_merge)


def history(commits, project: str = "demo", topo=None) -> RepoHistory:
    commits = tuple(sorted(commits, key=lambda c: (c.timestamp, c.commit_id)))
    return RepoHistory(project, commits, tuple(topo) if topo else ())


class GitScript:
    """Drives the git CLI to build a linear repository with fixed dates."""

    def __init__(self, path: Path, branch: str = "main"):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.env = {**os.environ, "GIT_CONFIG_NOSYSTEM": "1", "GIT_CONFIG_GLOBAL": os.devnull, "LC_ALL": "C"}
        self.git("init", "-q", "-b", branch)
        self.shas: list[str] = []

    def git(self, *args: str, input: bytes | None = None) -> str:
        result = subprocess.run(["git", "-C", str(self.path), *args], input=input,
                                capture_output=True, env=self.env, check=True)
        return result.stdout.decode("utf-8", errors="replace")

    def commit(self, author: str, email: str, when: datetime, files: dict, message: str = "change") -> str:
        """``files`` maps path to new text (str or bytes) or None to delete."""
        for path, text in files.items():
            target = self.path / path
            if text is None:
                self.git("rm", "-q", "--", path)
                continue
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(text if isinstance(text, bytes) else text.encode("utf-8"))
            self.git("add", "--", path)
        stamp = when.strftime("%Y-%m-%dT%H:%M:%S+0000")
        env = {"GIT_AUTHOR_NAME": author, "GIT_AUTHOR_EMAIL": email, "GIT_AUTHOR_DATE": stamp,
               "GIT_COMMITTER_NAME": author, "GIT_COMMITTER_EMAIL": email, "GIT_COMMITTER_DATE": stamp}
        subprocess.run(["git", "-C", str(self.path), "commit", "-q", "--allow-empty", "-m", message],
                       env={**self.env, **env}, check=True, capture_output=True)
        sha = self.git("rev-parse", "HEAD").strip()
        self.shas.append(sha)
        return sha

    def blame_shares(self, path: str) -> dict[str, float]:
        """Per-email line share at HEAD from ``git blame --line-porcelain``."""
        out = self.git("blame", "--line-porcelain", "HEAD", "--", path)
        counts: dict[str, int] = {}
        for line in out.splitlines():
            if line.startswith("author-mail "):
                email = line[len("author-mail "):].strip("<>").lower()
                counts[email] = counts.get(email, 0) + 1
        total = sum(counts.values())
        return {e: n / total for e, n in counts.items()}
