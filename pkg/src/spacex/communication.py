"""Collaboration inferred from file-level commit interleaving.

Two measures: how concentrated each file's surviving lines are in one
contributor, and how often different developers commit to the same file
in quick succession.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import EmptyInput, UnreadableObject
from .ingest import CommitRecord, FileDelta, RepoHistory

AuthorOf = Callable[[CommitRecord], "str | None"]

EVENTS_HEADER = ["path", "author_a", "author_b", "earlier_commit", "later_commit", "gap_hours"]
OWNERSHIP_HEADER = ["path", "top_contributor", "top_share_pct"]
HISTOGRAM_HEADER = ["bucket_start_hour", "count"]
FILES_COLUMNS = ["project", "path", "cif", "top_share_pct", "mean_gap_hours", "n_authors"]

WINDOW_HOURS = 24.0


def default_author_of(commit: CommitRecord) -> str:
    return commit.author_email.strip().lower()


@dataclass(frozen=True)
class FileOwnership:
    path: str
    line_share_by_author: dict[str, float]
    top_contributor: str
    top_share_pct: float
    attributed_lines: int


@dataclass(frozen=True)
class CommunicationEvent:
    path: str
    author_a: str
    author_b: str
    earlier_commit: str
    later_commit: str
    gap_hours: float

    def csv_row(self) -> list:
        return [self.path, self.author_a, self.author_b, self.earlier_commit, self.later_commit, self.gap_hours]


# --------------------------------------------------------------------------
# line attribution

def apply_hunks(owners: list, delta: FileDelta, owner) -> list:
    """Return the per-line owner list after applying one zero-context patch."""
    out = []
    cursor = 0
    for h in sorted(delta.hunks):
        # with zero context an insertion reports the line it follows
        start = h.old_start - 1 if h.old_count else h.old_start
        if start < cursor or start + h.old_count > len(owners):
            raise UnreadableObject(f"hunk {tuple(h)} does not fit {delta.path} ({len(owners)} lines)")
        out.extend(owners[cursor:start])
        out.extend([owner] * h.new_count)
        cursor = start + h.old_count
    out.extend(owners[cursor:])
    return out


def line_owners(history: RepoHistory, author_of: AuthorOf = default_author_of) -> dict[str, list]:
    """Replay every patch in first-parent order; each line keeps its last adder."""
    state: dict[str, list] = {}
    unknown: set[str] = set()
    for commit in history.replay_order():
        owner = author_of(commit)
        for delta in commit.files:
            if delta.old_path and delta.old_path in state:
                state[delta.path] = state.pop(delta.old_path)
            if delta.binary:
                state.pop(delta.path, None)
                unknown.add(delta.path)
                continue
            if delta.path in unknown:
                fresh = len(delta.hunks) == 1 and delta.hunks[0].old_count == 0 and delta.hunks[0].old_start == 0
                if not fresh:
                    continue
                unknown.discard(delta.path)
            current = state.get(delta.path, [])
            updated = apply_hunks(current, delta, owner)
            if updated:
                state[delta.path] = updated
            else:
                state.pop(delta.path, None)
    return state


def contributor_experience(history: RepoHistory, author_of: AuthorOf = default_author_of) -> list[FileOwnership]:
    """Share of each surviving file's lines held by each contributor.

    Lines whose author maps to None (bots, for instance) keep their place
    but are not attributed; files with no attributable line are omitted.
    """
    result = []
    for path, owners in sorted(line_owners(history, author_of).items()):
        counts = Counter(o for o in owners if o is not None)
        total = sum(counts.values())
        if total == 0:
            continue
        shares = {a: counts[a] / total for a in sorted(counts)}
        top = min(counts, key=lambda a: (-counts[a], a))
        result.append(FileOwnership(path, shares, top, 100.0 * counts[top] / total, total))
    return result


# --------------------------------------------------------------------------
# commit interaction frequency

def _touches(history: RepoHistory, author_of: AuthorOf) -> dict[str, list[tuple]]:
    touches: dict[str, list[tuple]] = defaultdict(list)
    for commit in history.commits:
        author = author_of(commit)
        if author is None:
            continue
        for path in sorted({d.path for d in commit.files}):
            touches[path].append((commit.timestamp, commit.commit_id, author))
    return touches


def commit_interaction_frequency(
    history: RepoHistory,
    author_of: AuthorOf = default_author_of,
    window_hours: float = WINDOW_HOURS,
    strict: bool = False,
) -> tuple[list[CommunicationEvent], dict[str, int]]:
    """Events for consecutive same-file commits by different authors.

    A pair counts when the gap is at most ``window_hours`` (inclusive).
    ``strict`` additionally requires the pair to sit inside a back-and-forth
    (A, B, A) with both gaps inside the window.
    """
    events = []
    cif: dict[str, int] = {}
    for path, seq in sorted(_touches(history, author_of).items()):
        seq.sort()
        count = 0
        for i in range(len(seq) - 1):
            (t0, c0, a0), (t1, c1, a1) = seq[i], seq[i + 1]
            gap = (t1 - t0).total_seconds() / 3600.0
            if a0 == a1 or gap > window_hours:
                continue
            if strict and not _in_exchange(seq, i, window_hours):
                continue
            lo, hi = sorted((a0, a1))
            events.append(CommunicationEvent(path, lo, hi, c0, c1, gap))
            count += 1
        cif[path] = count
    return events, cif


def _in_exchange(seq: Sequence[tuple], i: int, window_hours: float) -> bool:
    def gap(a, b):
        return (seq[b][0] - seq[a][0]).total_seconds() / 3600.0

    after = i + 2 < len(seq) and seq[i + 2][2] == seq[i][2] and gap(i + 1, i + 2) <= window_hours
    before = i >= 1 and seq[i - 1][2] == seq[i + 1][2] and gap(i - 1, i) <= window_hours
    return after or before


def pair_summary(events: Iterable[CommunicationEvent]) -> list[tuple[tuple[str, str], int]]:
    counts = Counter((e.author_a, e.author_b) for e in events)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def time_diff_stats(events: Sequence[CommunicationEvent], window_hours: float = WINDOW_HOURS) -> dict:
    """Mean event gap and a 1-hour histogram; the last bucket is closed."""
    if not events:
        raise EmptyInput("no communication events")
    buckets = int(math.ceil(window_hours))
    histogram = [0] * buckets
    for e in events:
        histogram[min(int(e.gap_hours), buckets - 1)] += 1
    return {
        "mean_gap_hours": sum(e.gap_hours for e in events) / len(events),
        "n_events": len(events),
        "histogram": [(k, histogram[k]) for k in range(buckets)],
    }


def participation_by_author(history: RepoHistory, events: Iterable[CommunicationEvent],
                            author_of: AuthorOf = default_author_of) -> dict[str, float]:
    """Mean number of events an author takes part in, over the files they touched."""
    files_by_author: dict[str, set[str]] = defaultdict(set)
    for commit in history.commits:
        author = author_of(commit)
        if author is not None:
            files_by_author[author].update(d.path for d in commit.files)
    per_file: Counter[tuple[str, str]] = Counter()
    for e in events:
        per_file[(e.author_a, e.path)] += 1
        per_file[(e.author_b, e.path)] += 1
    out = {}
    for author, paths in files_by_author.items():
        if paths:
            out[author] = sum(per_file[(author, p)] for p in paths) / len(paths)
    return out


def file_records(project: str, ownership: Sequence[FileOwnership], events: Sequence[CommunicationEvent],
                 cif: dict[str, int]) -> list[dict]:
    """One record per file that was touched or still has attributable lines."""
    own = {o.path: o for o in ownership}
    gaps: dict[str, list[float]] = defaultdict(list)
    for e in events:
        gaps[e.path].append(e.gap_hours)
    records = []
    for path in sorted(set(cif) | set(own)):
        g = gaps.get(path)
        records.append({
            "project": project,
            "path": path,
            "cif": cif.get(path, 0),
            "top_share_pct": own[path].top_share_pct if path in own else None,
            "mean_gap_hours": sum(g) / len(g) if g else None,
            "n_authors": len(own[path].line_share_by_author) if path in own else None,
        })
    return records
