"""Walk a local git clone into normalized commit records.

Uses the ``git`` executable through subprocess.  Every commit on the
first-parent chain of HEAD is read with a zero-context patch so that
per-file line counts and hunk positions come from one ``git log`` call.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, NamedTuple

from .complexity import language_for, method_spans
from .errors import EmptyRepository, NotARepository, UnreadableObject

logger = logging.getLogger(__name__)

DEFAULT_BUG_KEYWORDS = (
    "fix", "fixes", "fixed", "bug", "bugfix", "hotfix", "patch", "fault", "crash", "defect",
)

COMMITS_HEADER = [
    "project", "commit_id", "author_name", "author_email", "timestamp_iso8601", "is_merge",
    "message", "lines_added", "lines_removed", "churn", "files_touched",
    "avg_method_complexity", "is_bug_fix",
]

SECONDS_PER_YEAR = 365.25 * 86400

# isolated from user/system git config so output never depends on the host
_GIT_ENV = {
    "GIT_CONFIG_NOSYSTEM": "1",
    "GIT_CONFIG_GLOBAL": os.devnull,
    "LC_ALL": "C",
    "GIT_PAGER": "cat",
}


class Hunk(NamedTuple):
    old_start: int
    old_count: int
    new_start: int
    new_count: int


@dataclass(frozen=True)
class FileDelta:
    path: str
    lines_added: int
    lines_removed: int
    method_complexities: tuple[int, ...] = ()
    hunks: tuple[Hunk, ...] = ()
    binary: bool = False
    old_path: str | None = None  # set only when rename following is on

    @property
    def churn(self) -> int:
        return self.lines_added + self.lines_removed


@dataclass(frozen=True)
class CommitRecord:
    commit_id: str
    author_name: str
    author_email: str
    timestamp: datetime
    message: str
    files: tuple[FileDelta, ...] = ()
    is_merge: bool = False

    @property
    def identity(self) -> tuple[str, str]:
        return (self.author_name, self.author_email)


@dataclass(frozen=True)
class RepoHistory:
    project_name: str
    commits: tuple[CommitRecord, ...]
    # first-parent order, oldest first; line attribution replays in this order
    topo_order: tuple[str, ...] = ()

    @property
    def first_commit_at(self) -> datetime:
        return self.commits[0].timestamp

    @property
    def last_commit_at(self) -> datetime:
        return self.commits[-1].timestamp

    @property
    def project_age_years(self) -> float:
        if not self.commits:
            return 0.0
        return (self.last_commit_at - self.first_commit_at).total_seconds() / SECONDS_PER_YEAR

    def replay_order(self) -> list[CommitRecord]:
        if not self.topo_order:
            return list(self.commits)
        by_id = {c.commit_id: c for c in self.commits}
        return [by_id[cid] for cid in self.topo_order if cid in by_id]

    def filtered(self, keep) -> "RepoHistory":
        commits = tuple(c for c in self.commits if keep(c))
        kept = {c.commit_id for c in commits}
        return RepoHistory(self.project_name, commits, tuple(c for c in self.topo_order if c in kept))


@dataclass(frozen=True)
class IngestOptions:
    compute_complexity: bool = True
    follow_renames: bool = False
    merge_complexity: bool = False
    project_name: str | None = None


def sort_commits(commits: Iterable[CommitRecord]) -> tuple[CommitRecord, ...]:
    return tuple(sorted(commits, key=lambda c: (c.timestamp, c.commit_id)))


def churn_of(record: CommitRecord) -> int:
    return sum(f.lines_added + f.lines_removed for f in record.files)


def detect_bug_fix(message: str, keywords: Iterable[str] = DEFAULT_BUG_KEYWORDS) -> bool:
    tokens = set(re.findall(r"[a-z0-9]+", message.lower()))
    return any(k.lower() in tokens for k in keywords)


def commit_method_complexities(record: CommitRecord) -> list[int]:
    return [c for f in record.files for c in f.method_complexities]


# --------------------------------------------------------------------------
# git plumbing

def _git(repo: Path, *args: str, check: bool = True) -> subprocess.CompletedProcess[bytes]:
    env = {**os.environ, **_GIT_ENV}
    result = subprocess.run(["git", "-C", str(repo), *args], capture_output=True, env=env)
    if check and result.returncode != 0:
        raise UnreadableObject(
            f"git {args[0]} failed in {repo}: {result.stderr.decode('utf-8', 'replace').strip()}"
        )
    return result


_COMMIT_MARK = "\x00\x00SPACEX-COMMIT\x00"
# argv cannot carry NUL bytes; git expands %x00 itself
_COMMIT_MARK_FMT = "%x00%x00SPACEX-COMMIT%x00"
_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_C_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\", "a": "\a", "b": "\b", "f": "\f", "r": "\r", "v": "\v"}


def _unquote(path: str) -> str:
    """Undo git's C-style quoting of unusual paths."""
    if not (path.startswith('"') and path.endswith('"')):
        return path
    body = path[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt in "01234567":
                out.append(int(body[i + 1:i + 4], 8))
                i += 4
                continue
            out.extend(_C_ESCAPES.get(nxt, nxt).encode())
            i += 2
            continue
        out.extend(ch.encode("utf-8", "surrogateescape"))
        i += 1
    return out.decode("utf-8", "replace")


def _strip_prefix(path: str) -> str | None:
    path = _unquote(path.rstrip("\t"))
    if path == "/dev/null":
        return None
    return path[2:] if path[:2] in ("a/", "b/") else path


def _header_path(header: str) -> str:
    # "diff --git a/P b/P" without renames has identical halves
    rest = header[len("diff --git "):]
    if rest.startswith('"'):
        end = rest.index('" ', 1) + 1
        return _strip_prefix(rest[:end]) or ""
    half = (len(rest) - 1) // 2
    return _strip_prefix(rest[:half]) or ""


@dataclass
class _PendingFile:
    header_path: str
    old: str | None = None
    new: str | None = None
    rename_from: str | None = None
    rename_to: str | None = None
    added: int = 0
    removed: int = 0
    binary: bool = False
    hunks: list = field(default_factory=list)

    def finish(self) -> FileDelta:
        path = self.new or self.rename_to or self.old or self.header_path
        old_path = self.rename_from if self.rename_from and self.rename_from != path else None
        return FileDelta(
            path=path,
            lines_added=self.added,
            lines_removed=self.removed,
            hunks=tuple(self.hunks),
            binary=self.binary,
            old_path=old_path,
        )


def _parse_patch(lines: list[str]) -> list[FileDelta]:
    files: list[FileDelta] = []
    current: _PendingFile | None = None
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("diff --git "):
            if current:
                files.append(current.finish())
            current = _PendingFile(header_path=_header_path(line))
        elif current is None:
            pass
        elif line.startswith("--- "):
            current.old = _strip_prefix(line[4:])
        elif line.startswith("+++ "):
            current.new = _strip_prefix(line[4:])
        elif line.startswith("rename from "):
            current.rename_from = _unquote(line[len("rename from "):])
        elif line.startswith("rename to "):
            current.rename_to = _unquote(line[len("rename to "):])
        elif line.startswith("Binary files ") or line == "GIT binary patch":
            current.binary = True
        elif line.startswith("@@ "):
            m = _HUNK_RE.match(line)
            if m is None:
                raise UnreadableObject(f"malformed hunk header: {line!r}")
            os_, oc, ns, nc = (int(g) if g is not None else 1 for g in m.groups())
            current.hunks.append(Hunk(os_, oc, ns, nc))
            # zero context: exactly oc '-' lines then nc '+' lines follow
            remaining_minus, remaining_plus = oc, nc
            while remaining_minus + remaining_plus > 0:
                i += 1
                if i >= len(lines):
                    raise UnreadableObject("truncated hunk in git log output")
                body = lines[i]
                if body.startswith("\\"):
                    continue
                if body.startswith("-") and remaining_minus:
                    remaining_minus -= 1
                    current.removed += 1
                elif body.startswith("+") and remaining_plus:
                    remaining_plus -= 1
                    current.added += 1
                else:
                    raise UnreadableObject(f"unexpected hunk line: {body[:40]!r}")
        i += 1
    if current:
        files.append(current.finish())
    return files


class _BlobReader:
    """Persistent ``git cat-file --batch`` process for reading file contents."""

    def __init__(self, repo: Path):
        env = {**os.environ, **_GIT_ENV}
        self.proc = subprocess.Popen(
            ["git", "-C", str(repo), "cat-file", "--batch"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, env=env,
        )

    def read(self, commit_id: str, path: str) -> bytes | None:
        if "\n" in path:
            return None
        self.proc.stdin.write(f"{commit_id}:{path}\n".encode("utf-8", "surrogateescape"))
        self.proc.stdin.flush()
        header = self.proc.stdout.readline().decode()
        parts = header.split()
        if len(parts) != 3:
            return None
        size = int(parts[2])
        data = self.proc.stdout.read(size)
        self.proc.stdout.read(1)
        return data if parts[1] == "blob" else None

    def close(self) -> None:
        self.proc.stdin.close()
        self.proc.wait()


def _touched_complexities(text: str, language: str, hunks: Iterable[Hunk]) -> tuple[int, ...]:
    spans = method_spans(text, language)
    touched = []
    for span in spans:
        for h in hunks:
            lo = h.new_start if h.new_count else max(h.new_start, 1)
            hi = h.new_start + max(h.new_count, 1) - 1
            if lo <= span.end_line and hi >= span.start_line:
                touched.append(span.complexity)
                break
    return tuple(touched)


def walk_history(repo_path: str | os.PathLike, opts: IngestOptions | None = None) -> RepoHistory:
    """Read every first-parent commit reachable from HEAD."""
    opts = opts or IngestOptions()
    repo = Path(repo_path)
    if not repo.is_dir():
        raise NotARepository(f"{repo} is not a directory")
    probe = _git(repo, "rev-parse", "--git-dir", check=False)
    if probe.returncode != 0:
        raise NotARepository(f"{repo} is not a git repository")
    head = _git(repo, "rev-parse", "--verify", "--quiet", "HEAD^{commit}", check=False)
    if head.returncode != 0:
        raise EmptyRepository(f"{repo} has no commits")
    toplevel = _git(repo, "rev-parse", "--show-toplevel", check=False).stdout.decode().strip()
    project = opts.project_name or Path(toplevel or repo.resolve()).name

    args = [
        "log", "--first-parent", "--reverse", "--diff-merges=first-parent", "-p", "-U0",
        "--no-color", "--no-ext-diff", "--no-textconv", "--src-prefix=a/", "--dst-prefix=b/",
        f"--format={_COMMIT_MARK_FMT}%H%x00%P%x00%an%x00%ae%x00%ct%x00%B%x00",
        "-M" if opts.follow_renames else "--no-renames",
        "HEAD",
    ]
    raw = _git(repo, *args).stdout.decode("utf-8", "replace")

    blobs = _BlobReader(repo) if opts.compute_complexity else None
    commits = []
    order = []
    try:
        for chunk in raw.split(_COMMIT_MARK)[1:]:
            sha, parents, name, email, ts, message, patch = chunk.split("\x00", 6)
            is_merge = len(parents.split()) > 1
            files = _parse_patch(patch.strip("\n").split("\n")) if patch.strip() else []
            if blobs and (not is_merge or opts.merge_complexity):
                files = [_with_complexity(blobs, sha, f) for f in files]
            commits.append(CommitRecord(
                commit_id=sha,
                author_name=name,
                author_email=email,
                timestamp=datetime.fromtimestamp(int(ts), tz=timezone.utc),
                message=message.rstrip("\n"),
                files=tuple(files),
                is_merge=is_merge,
            ))
            order.append(sha)
    finally:
        if blobs:
            blobs.close()
    if not commits:
        raise EmptyRepository(f"{repo} has no commits on HEAD")
    logger.info("walked %d commits in %s", len(commits), project)
    return RepoHistory(project, sort_commits(commits), tuple(order))


def _with_complexity(blobs: _BlobReader, sha: str, delta: FileDelta) -> FileDelta:
    language = language_for(delta.path)
    if language is None or delta.binary or not delta.hunks:
        return delta
    data = blobs.read(sha, delta.path)
    if data is None or b"\x00" in data:
        return delta
    text = data.decode("utf-8", "replace")
    values = _touched_complexities(text, language, delta.hunks)
    return FileDelta(**{**delta.__dict__, "method_complexities": values})


# --------------------------------------------------------------------------
# serialization

def iso_utc(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_iso_utc(text: str) -> datetime:
    value = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def history_to_dict(history: RepoHistory) -> dict:
    return {
        "project_name": history.project_name,
        "topo_order": list(history.topo_order),
        "commits": [
            {
                "commit_id": c.commit_id,
                "author_name": c.author_name,
                "author_email": c.author_email,
                "timestamp": iso_utc(c.timestamp),
                "message": c.message,
                "is_merge": c.is_merge,
                "files": [
                    {
                        "path": f.path,
                        "lines_added": f.lines_added,
                        "lines_removed": f.lines_removed,
                        "method_complexities": list(f.method_complexities),
                        "hunks": [list(h) for h in f.hunks],
                        "binary": f.binary,
                        "old_path": f.old_path,
                    }
                    for f in c.files
                ],
            }
            for c in history.commits
        ],
    }


def history_from_dict(data: dict) -> RepoHistory:
    commits = [
        CommitRecord(
            commit_id=c["commit_id"],
            author_name=c["author_name"],
            author_email=c["author_email"],
            timestamp=parse_iso_utc(c["timestamp"]),
            message=c["message"],
            is_merge=c["is_merge"],
            files=tuple(
                FileDelta(
                    path=f["path"],
                    lines_added=f["lines_added"],
                    lines_removed=f["lines_removed"],
                    method_complexities=tuple(f.get("method_complexities", ())),
                    hunks=tuple(Hunk(*h) for h in f.get("hunks", ())),
                    binary=f.get("binary", False),
                    old_path=f.get("old_path"),
                )
                for f in c["files"]
            ),
        )
        for c in data["commits"]
    ]
    return RepoHistory(data["project_name"], sort_commits(commits), tuple(data.get("topo_order", ())))


def dump_history(history: RepoHistory, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(history_to_dict(history), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def load_history(path: str | os.PathLike) -> RepoHistory:
    return history_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def commit_rows(history: RepoHistory, bug_keywords: Iterable[str] = DEFAULT_BUG_KEYWORDS) -> list[list]:
    from .serialize import fmt

    rows = []
    for c in history.commits:
        added = sum(f.lines_added for f in c.files)
        removed = sum(f.lines_removed for f in c.files)
        complexities = commit_method_complexities(c)
        avg = sum(complexities) / len(complexities) if complexities else None
        rows.append([
            history.project_name, c.commit_id, c.author_name, c.author_email, iso_utc(c.timestamp),
            fmt(c.is_merge), c.message, added, removed, added + removed, len(c.files),
            fmt(avg), fmt(detect_bug_fix(c.message, bug_keywords)),
        ])
    return rows


def commits_csv(histories: Iterable[RepoHistory], bug_keywords: Iterable[str] = DEFAULT_BUG_KEYWORDS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMMITS_HEADER)
    for history in histories:
        writer.writerows(commit_rows(history, bug_keywords))
    return buf.getvalue()
