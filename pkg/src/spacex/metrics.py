"""Per-(author, project) and per-repository analysis variables."""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .cleaning import ContributorIdentity, RawIdentity, normalize_name
from .errors import AlignmentError
from .forge import CiRun, ForgeSnapshot, PullRequest
from .ingest import (
    DEFAULT_BUG_KEYWORDS,
    CommitRecord,
    RepoHistory,
    churn_of,
    commit_method_complexities,
    detect_bug_fix,
)
from .sentiment import SentimentLabel, negative_commit_percentage

AUTHOR_HEADER = [
    "project", "author", "total_commits", "code_churn", "bug_fix_commits", "avg_complexity",
    "negative_commit_pct", "total_issues", "total_prs", "project_age_years",
    "mean_commit_gap_hours", "avg_daily_commits", "avg_daily_churn", "total_code_reviews",
    "total_deployments",
]
REPO_HEADER = ["project", "ci_cd_success_rate", "avg_pr_merge_time_hours", "total_commits"]
PROJECT_TOTALS_HEADER = ["project", "total_issues", "total_prs"]


@dataclass(frozen=True)
class AuthorProjectRow:
    project_name: str
    canonical_id: str
    total_commits: int
    code_churn: int
    bug_fix_commits: int
    avg_complexity_per_method: float | None
    negative_commit_pct: float | None
    total_issues: int | None
    total_prs: int | None
    project_age_years: float
    mean_commit_gap_hours: float | None
    avg_daily_commits: float | None
    avg_daily_churn: float | None
    total_code_reviews: int | None = None
    total_deployments: int | None = None
    # not part of the author CSV
    project_total_issues: int | None = None
    project_total_prs: int | None = None
    active_days: int = 0
    display_name: str = ""
    commit_less: bool = False

    def csv_row(self) -> list:
        return [
            self.project_name, self.canonical_id, self.total_commits, self.code_churn,
            self.bug_fix_commits, self.avg_complexity_per_method, self.negative_commit_pct,
            self.total_issues, self.total_prs, self.project_age_years, self.mean_commit_gap_hours,
            self.avg_daily_commits, self.avg_daily_churn, self.total_code_reviews, self.total_deployments,
        ]

    def as_record(self) -> dict:
        """Column-name view used by analysis specs (CSV names plus extras)."""
        record = dict(zip(AUTHOR_HEADER, self.csv_row()))
        record.update(project_total_issues=self.project_total_issues,
                      project_total_prs=self.project_total_prs, active_days=self.active_days)
        return record


AUTHOR_COLUMNS = AUTHOR_HEADER + ["project_total_issues", "project_total_prs", "active_days"]


@dataclass(frozen=True)
class RepoRow:
    project_name: str
    ci_cd_success_rate: float | None
    avg_pr_merge_time_hours: float | None
    total_commits: int

    def csv_row(self) -> list:
        return [self.project_name, self.ci_cd_success_rate, self.avg_pr_merge_time_hours, self.total_commits]

    def as_record(self) -> dict:
        return dict(zip(REPO_HEADER, self.csv_row()))


def ci_cd_success_rate(runs: Iterable[CiRun]) -> float | None:
    """Successful runs over decisive (success + failure) runs."""
    runs = list(runs)
    success = sum(r.conclusion == "success" for r in runs)
    failure = sum(r.conclusion == "failure" for r in runs)
    if success + failure == 0:
        return None
    return success / (success + failure)


def avg_pr_merge_time(prs: Iterable[PullRequest]) -> float | None:
    durations = [(p.merged_at - p.created_at).total_seconds() / 3600.0 for p in prs if p.merged_at is not None]
    if not durations:
        return None
    return sum(durations) / len(durations)


def efficiency_metrics(commits: Sequence[CommitRecord]) -> dict:
    """Commit cadence for one author's time-ordered commits.

    "Daily" means per distinct UTC calendar date with at least one commit.
    """
    total = len(commits)
    if total == 0:
        return {"mean_commit_gap_hours": None, "avg_daily_commits": None,
                "avg_daily_churn": None, "total_commits": 0, "active_days": 0, "total_churn": 0}
    gaps = [
        (b.timestamp - a.timestamp).total_seconds() / 3600.0
        for a, b in zip(commits, commits[1:])
    ]
    days = {c.timestamp.date() for c in commits}
    churn = sum(churn_of(c) for c in commits)
    return {
        "mean_commit_gap_hours": sum(gaps) / len(gaps) if gaps else None,
        "avg_daily_commits": total / len(days),
        "avg_daily_churn": churn / len(days),
        "total_commits": total,
        "active_days": len(days),
        "total_churn": churn,
    }


_NOREPLY_PREFIX = re.compile(r"^\d+\+")


def login_index(identities: Iterable[ContributorIdentity]) -> dict[str, str]:
    """Map lowercased forge logins to canonical ids.

    A login matches an email local part (GitHub noreply ``123+`` prefixes
    stripped) or a normalized name; ambiguous keys go to the smallest id.
    """
    index: dict[str, str] = {}
    for ident in sorted({i.canonical_id: i for i in identities}.values(), key=lambda i: i.canonical_id):
        keys = {_NOREPLY_PREFIX.sub("", e.split("@", 1)[0]) for e in ident.emails}
        keys |= {normalize_name(n) for n in ident.names}
        for key in keys:
            if key:
                index.setdefault(key.lower(), ident.canonical_id)
    return index


def cleaned_commits(history: RepoHistory, identities: Mapping[RawIdentity, ContributorIdentity],
                    include_merges: bool = False) -> list[tuple[int, CommitRecord, ContributorIdentity]]:
    """(index into history.commits, commit, identity) for every counted commit."""
    out = []
    for i, c in enumerate(history.commits):
        ident = identities.get(c.identity)
        if ident is None or (c.is_merge and not include_merges):
            continue
        out.append((i, c, ident))
    return out


def build_author_rows(
    history: RepoHistory,
    snapshot: ForgeSnapshot | None,
    labels: Sequence[SentimentLabel],
    identities: Mapping[RawIdentity, ContributorIdentity],
    bug_keywords: Iterable[str] = DEFAULT_BUG_KEYWORDS,
    include_merges: bool = False,
) -> list[AuthorProjectRow]:
    """One row per contributor of ``history``, plus forge-only rows flagged commit_less.

    ``identities`` must already exclude bots; commits whose raw identity is
    absent are not counted.
    """
    if len(labels) != len(history.commits):
        raise AlignmentError(f"{len(labels)} labels for {len(history.commits)} commits")
    bug_keywords = tuple(bug_keywords)

    by_author: dict[str, list[int]] = defaultdict(list)
    ident_of: dict[str, ContributorIdentity] = {}
    for i, c, ident in cleaned_commits(history, identities, include_merges):
        by_author[ident.canonical_id].append(i)
        ident_of[ident.canonical_id] = ident

    index = login_index(ident_of.values())
    issues_by: dict[str, int] = defaultdict(int)
    prs_by: dict[str, int] = defaultdict(int)
    reviews_by: dict[str, int] = {}
    deploys_by: dict[str, int] = {}
    forge_only: set[str] = set()
    if snapshot is not None:
        for issue in snapshot.issues:
            key = index.get(issue.author_login.lower())
            if key is None:
                forge_only.add(issue.author_login)
                key = issue.author_login
            issues_by[key] += 1
        for pr in snapshot.pull_requests:
            key = index.get(pr.author_login.lower())
            if key is None:
                forge_only.add(pr.author_login)
                key = pr.author_login
            prs_by[key] += 1
        for login, extra in sorted(snapshot.extra_columns.items()):
            key = index.get(login.lower())
            if key is None:
                continue
            if extra.total_code_reviews is not None:
                reviews_by[key] = reviews_by.get(key, 0) + extra.total_code_reviews
            if extra.total_deployments is not None:
                deploys_by[key] = deploys_by.get(key, 0) + extra.total_deployments

    project_issues = len(snapshot.issues) if snapshot is not None else None
    project_prs = len(snapshot.pull_requests) if snapshot is not None else None
    age = history.project_age_years

    def forge_count(table: dict, key: str) -> int | None:
        return table.get(key, 0) if snapshot is not None else None

    rows = []
    for canonical in sorted(by_author):
        idx = by_author[canonical]
        commits = [history.commits[i] for i in idx]
        eff = efficiency_metrics(commits)
        complexities = [v for c in commits for v in commit_method_complexities(c)]
        rows.append(AuthorProjectRow(
            project_name=history.project_name,
            canonical_id=canonical,
            total_commits=len(commits),
            code_churn=eff["total_churn"],
            bug_fix_commits=sum(detect_bug_fix(c.message, bug_keywords) for c in commits),
            avg_complexity_per_method=sum(complexities) / len(complexities) if complexities else None,
            negative_commit_pct=negative_commit_percentage([labels[i] for i in idx]),
            total_issues=forge_count(issues_by, canonical),
            total_prs=forge_count(prs_by, canonical),
            project_age_years=age,
            mean_commit_gap_hours=eff["mean_commit_gap_hours"],
            avg_daily_commits=eff["avg_daily_commits"],
            avg_daily_churn=eff["avg_daily_churn"],
            total_code_reviews=reviews_by.get(canonical),
            total_deployments=deploys_by.get(canonical),
            project_total_issues=project_issues,
            project_total_prs=project_prs,
            active_days=eff["active_days"],
            display_name=ident_of[canonical].display_name,
        ))
    for login in sorted(forge_only):
        rows.append(AuthorProjectRow(
            project_name=history.project_name, canonical_id=login, total_commits=0, code_churn=0,
            bug_fix_commits=0, avg_complexity_per_method=None, negative_commit_pct=None,
            total_issues=issues_by.get(login, 0), total_prs=prs_by.get(login, 0),
            project_age_years=age, mean_commit_gap_hours=None, avg_daily_commits=None,
            avg_daily_churn=None, project_total_issues=project_issues, project_total_prs=project_prs,
            display_name=login, commit_less=True,
        ))
    return rows


def build_repo_row(history: RepoHistory, snapshot: ForgeSnapshot | None,
                   identities: Mapping[RawIdentity, ContributorIdentity],
                   include_merges: bool = False) -> RepoRow:
    return RepoRow(
        project_name=history.project_name,
        ci_cd_success_rate=ci_cd_success_rate(snapshot.ci_runs) if snapshot else None,
        avg_pr_merge_time_hours=avg_pr_merge_time(snapshot.pull_requests) if snapshot else None,
        total_commits=len(cleaned_commits(history, identities, include_merges)),
    )
