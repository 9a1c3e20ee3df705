"""Stage orchestration: mined histories and forge snapshots in, a bundle directory out.

A bundle is a directory of CSV/JSON files plus ``manifest.json`` listing
each file with its sha256.  Everything is rendered in memory first, then
written to ``<out>.partial`` and renamed into place, so a failed run never
leaves a directory that looks complete.
"""

from __future__ import annotations

import logging
import math
import re
import shutil
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .cleaning import (
    CleaningReport,
    ContributorIdentity,
    RawIdentity,
    dealias,
    filter_bots,
    filter_low_activity,
    iqr_filter,
    load_alias_overrides,
    winsorize,
    winsorize_rows,
)
from .communication import (
    EVENTS_HEADER,
    FILES_COLUMNS,
    HISTOGRAM_HEADER,
    OWNERSHIP_HEADER,
    CommunicationEvent,
    FileOwnership,
    commit_interaction_frequency,
    contributor_experience,
    file_records,
    pair_summary,
    participation_by_author,
    time_diff_stats,
)
from .config import AnalysisSpec, RunConfig
from .cps import (
    CPS_HEADER,
    DIMENSIONS,
    PROFILE_DESCRIPTIONS,
    DimensionDroppedWarning,
    DimensionVector,
    composite_score,
    raw_dimensions,
    standardize_dimensions,
    weights_label,
)
from .errors import (
    AllDegenerate,
    EmptyInput,
    InputError,
    NoDimensions,
    NotConverged,
    SpacexError,
)
from .forge import ForgeSnapshot, load_snapshot
from .ingest import (
    CommitRecord,
    IngestOptions,
    RepoHistory,
    commits_csv,
    history_to_dict,
    iso_utc,
    load_history,
    walk_history,
)
from .metrics import (
    AUTHOR_COLUMNS,
    AUTHOR_HEADER,
    PROJECT_TOTALS_HEADER,
    REPO_HEADER,
    AuthorProjectRow,
    RepoRow,
    build_author_rows,
    build_repo_row,
)
from .sentiment import ExternalClassifier, LexiconClassifier, SentimentLabel
from .serialize import csv_text, json_text, sha256_bytes
from .stats import (
    DataColumn,
    complete_cases,
    correlation_matrix,
    log1p_transform,
    ols,
    partial_correlation,
    pearson,
    poisson_fit,
    vif,
    zscore,
)

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
BUNDLE_FORMAT = "spacex-bundle/1"
IDENTITIES_HEADER = ["canonical_id", "display_name", "emails", "names", "is_bot", "raw_identities"]
PAIRS_HEADER = ["project", "author_a", "author_b", "display_a", "display_b", "events"]
RESIDUALS_HEADER = ["row_index", "residual"]

# CSV column name -> AuthorProjectRow attribute, where they differ
_ROW_ATTR = {"project": "project_name", "author": "canonical_id", "avg_complexity": "avg_complexity_per_method"}

UNTIL = ("clean", "metrics", "cps", "analyze")


def safe_name(project: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", project) or "_"


# --------------------------------------------------------------------------
# bundle assembly

class BundleWriter:
    """Collects rendered files in memory, then writes them atomically."""

    def __init__(self):
        self.files: dict[str, bytes] = {}

    def add(self, relpath: str, text: str) -> str:
        if relpath in self.files:
            raise ValueError(f"duplicate bundle path {relpath}")
        data = text.encode("utf-8")
        self.files[relpath] = data
        return sha256_bytes(data)

    def manifest(self, provenance: dict, stage: str) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "stage": stage,
            "provenance": provenance,
            "files": [{"path": p, "sha256": sha256_bytes(d), "bytes": len(d)} for p, d in sorted(self.files.items())],
        }

    def commit(self, out_dir: Path, provenance: dict, stage: str) -> Path:
        out_dir = Path(out_dir)
        manifest = self.manifest(provenance, stage)
        staging = out_dir.with_name(out_dir.name + ".partial")
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)
        for relpath, data in sorted(self.files.items()):
            target = staging / relpath
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        (staging / MANIFEST).write_text(json_text(manifest), encoding="utf-8")
        _clear_previous(out_dir)
        staging.rename(out_dir)
        return out_dir / MANIFEST


def _clear_previous(out_dir: Path) -> None:
    if not out_dir.exists():
        return
    if not out_dir.is_dir():
        raise InputError(f"output path {out_dir} exists and is not a directory")
    if any(out_dir.iterdir()) and not (out_dir / MANIFEST).exists():
        raise InputError(f"refusing to replace {out_dir}: it is not empty and holds no {MANIFEST}")
    shutil.rmtree(out_dir)


# --------------------------------------------------------------------------
# stage bookkeeping

@contextmanager
def stage(name: str):
    """Tag any pipeline error with the stage it escaped from."""
    try:
        yield
    except SpacexError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
            exc.args = (f"stage {name!r} failed: {exc}",)
        raise


# --------------------------------------------------------------------------
# loading

def load_input(path: Path, config: RunConfig) -> RepoHistory:
    """A clone directory is walked; a ``.json`` file is a previously mined history."""
    if path.is_file():
        return load_history(path)
    opts = IngestOptions(compute_complexity=config.compute_complexity, follow_renames=config.follow_renames)
    return walk_history(path, opts)


def parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _with_repo(path: Path, fn: Callable):
    try:
        return fn()
    except SpacexError as exc:
        if str(path) not in str(exc):
            exc.args = (f"{path}: {exc}",)
        raise


def load_histories(config: RunConfig) -> list[RepoHistory]:
    histories = parallel_map(lambda p: _with_repo(p, lambda: load_input(p, config)),
                             config.repo_paths, config.workers)
    names = [h.project_name for h in histories]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise InputError(f"duplicate project names across repo_paths: {dupes}")
    return sorted(histories, key=lambda h: h.project_name)


def load_snapshots(config: RunConfig, projects: Iterable[str]) -> dict[str, ForgeSnapshot]:
    projects = set(projects)
    snapshots: dict[str, ForgeSnapshot] = {}
    for path in config.snapshot_paths:
        snap = _with_repo(path, lambda: load_snapshot(path))
        if snap.project_name not in projects:
            raise InputError(f"{path}: snapshot project {snap.project_name!r} matches no mined repository")
        if snap.project_name in snapshots:
            raise InputError(f"{path}: second snapshot for project {snap.project_name!r}")
        snapshots[snap.project_name] = snap
    return snapshots


def input_provenance(config: RunConfig, histories: Sequence[RepoHistory]) -> list[dict]:
    out = []
    for h in histories:
        digest = sha256_bytes(json_text(history_to_dict(h)).encode("utf-8"))
        out.append({"project": h.project_name, "kind": "history", "sha256": digest,
                    "first_commit": iso_utc(h.first_commit_at), "last_commit": iso_utc(h.last_commit_at),
                    "commits": len(h.commits)})
    for path in config.snapshot_paths:
        out.append({"path": config.display_path(path), "kind": "snapshot",
                    "sha256": sha256_bytes(path.read_bytes())})
    return out


# --------------------------------------------------------------------------
# in-memory results

@dataclass
class ProjectCommunication:
    ownership: list[FileOwnership]
    events: list[CommunicationEvent]
    cif: dict[str, int]
    time_stats: dict | None


@dataclass
class AnalysisState:
    config: RunConfig
    histories: list[RepoHistory] = field(default_factory=list)
    snapshots: dict[str, ForgeSnapshot] = field(default_factory=dict)
    identities: dict[RawIdentity, ContributorIdentity] = field(default_factory=dict)
    kept: dict[RawIdentity, ContributorIdentity] = field(default_factory=dict)
    sentiment_model: str = ""
    labels: dict[str, list[SentimentLabel]] = field(default_factory=dict)
    author_rows_all: list[AuthorProjectRow] = field(default_factory=list)
    forge_only: dict[str, list[str]] = field(default_factory=dict)
    authors: list[AuthorProjectRow] = field(default_factory=list)
    efficiency: list[AuthorProjectRow] = field(default_factory=list)
    repos: list[RepoRow] = field(default_factory=list)
    reports: dict[str, CleaningReport] = field(default_factory=dict)
    communication: dict[str, ProjectCommunication] = field(default_factory=dict)
    files: list[dict] = field(default_factory=list)
    participation: dict[tuple[str, str], float] = field(default_factory=dict)
    analyses: dict[str, dict] = field(default_factory=dict)
    cps_rows: list[list] = field(default_factory=list)
    cps_dropped: list[str] = field(default_factory=list)

    def author_of(self, commit: CommitRecord) -> str | None:
        """Canonical id for counted commits, None for bots and (by default) merges."""
        ident = self.kept.get(commit.identity)
        if ident is None or (commit.is_merge and not self.config.include_merges):
            return None
        return ident.canonical_id

    def display_names(self) -> dict[str, str]:
        return {i.canonical_id: i.display_name for i in self.identities.values()}

    @property
    def data_as_of(self) -> str | None:
        if not self.histories:
            return None
        return iso_utc(max(h.last_commit_at for h in self.histories))


def _attr(column: str) -> str:
    return _ROW_ATTR.get(column, column)


def row_record(row: AuthorProjectRow | RepoRow) -> dict:
    return row.as_record()


# --------------------------------------------------------------------------
# stages

def stage_identities(state: AnalysisState) -> None:
    cfg = state.config
    overrides = load_alias_overrides(cfg.alias_overrides_path) if cfg.alias_overrides_path else None
    commits = [c for h in state.histories for c in h.commits]
    state.identities, dealias_report = dealias(commits, overrides)
    state.kept, bot_report = filter_bots(state.identities, cfg.bot_patterns)
    state.reports["identities"] = dealias_report + bot_report


def stage_sentiment(state: AnalysisState) -> None:
    cfg = state.config
    classifier = ExternalClassifier(cfg.external_cmd) if cfg.sentiment_mode == "external" else LexiconClassifier()
    state.sentiment_model = classifier.model_id
    # one batch for the whole corpus: an external model pays its start-up once
    messages = [c.message for h in state.histories for c in h.commits]
    labels = classifier.classify_many(messages)
    start = 0
    for h in state.histories:
        state.labels[h.project_name] = labels[start:start + len(h.commits)]
        start += len(h.commits)


def stage_metrics(state: AnalysisState) -> None:
    cfg = state.config
    for h in state.histories:
        snap = state.snapshots.get(h.project_name)
        rows = build_author_rows(h, snap, state.labels[h.project_name], state.kept,
                                 cfg.bug_keywords, cfg.include_merges)
        state.author_rows_all.extend(r for r in rows if not r.commit_less)
        state.forge_only[h.project_name] = [r.canonical_id for r in rows if r.commit_less]
        state.repos.append(build_repo_row(h, snap, state.kept, cfg.include_merges))


def _winsorize_dataclass_rows(rows: list, column: str, lower: float, upper: float) -> tuple[list, CleaningReport]:
    attr = _attr(column)
    out, report = winsorize_rows(rows, attr, lower, upper)
    if attr != column:
        report.parameters = {f"winsorize.{column}": v for v in report.parameters.values()}
    return out, report


def stage_row_cleaning(state: AnalysisState) -> None:
    cfg = state.config
    authors, low = filter_low_activity(state.author_rows_all, cfg.min_commits)
    state.reports["low_activity"] = low
    repos = state.repos
    wins = CleaningReport()
    for spec in cfg.winsorize:
        if spec.dataset == "authors":
            authors, rep = _winsorize_dataclass_rows(authors, spec.column, spec.lower, spec.upper)
        else:
            repos, rep = _winsorize_dataclass_rows(repos, spec.column, spec.lower, spec.upper)
        rep.parameters = {f"{spec.dataset}.{k}": v for k, v in rep.parameters.items()}
        wins = wins + rep
    state.reports["winsorize"] = wins
    state.authors, state.repos = authors, repos
    efficiency, iqr = iqr_filter(authors, [_attr(c) for c in cfg.iqr_columns], cfg.iqr_multiplier)
    iqr.parameters["iqr_columns"] = list(cfg.iqr_columns)
    state.reports["iqr"] = iqr
    state.efficiency = efficiency


def stage_communication(state: AnalysisState) -> None:
    cfg = state.config
    for h in state.histories:
        ownership = contributor_experience(h, state.author_of)
        events, cif = commit_interaction_frequency(h, state.author_of, cfg.window_hours, cfg.strict_alternation)
        try:
            stats = time_diff_stats(events, cfg.window_hours)
        except EmptyInput:
            stats = None
        state.communication[h.project_name] = ProjectCommunication(ownership, events, cif, stats)
        state.files.extend(file_records(h.project_name, ownership, events, cif))
        for author, value in participation_by_author(h, events, state.author_of).items():
            state.participation[(h.project_name, author)] = value


def stage_cps(state: AnalysisState) -> None:
    cfg = state.config
    vectors = raw_dimensions(state.authors, state.participation, cfg.scoring_profile)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DimensionDroppedWarning)
        try:
            standardized, dropped = standardize_dimensions(vectors)
        except AllDegenerate:
            # every dimension constant or absent: no author can be scored, the bundle still completes
            standardized, dropped = [DimensionVector() for _ in vectors], list(DIMENSIONS)
    for w in caught:
        if issubclass(w.category, DimensionDroppedWarning):
            logger.warning("%s", w.message)
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    state.cps_dropped = dropped
    rows = []
    for row, z in zip(state.authors, standardized):
        try:
            score, used = composite_score(z, cfg.weights)
            label = weights_label(used)
        except NoDimensions:
            score, label = None, ""
        rows.append([row.project_name, row.canonical_id, *[z.get(d) for d in DIMENSIONS], score, label])
    state.cps_rows = sorted(rows, key=lambda r: (r[0], r[1]))


# --------------------------------------------------------------------------
# models

def datasets(state: AnalysisState) -> dict[str, list[dict]]:
    return {
        "authors": [row_record(r) for r in state.authors],
        "efficiency": [row_record(r) for r in state.efficiency],
        "repos": [row_record(r) for r in state.repos],
        "files": list(state.files),
    }


# authors.csv keeps its fixed header; derived join columns live beside it, keyed by (project, author)
EXTRAS_HEADER = ["project", "author", *AUTHOR_COLUMNS[len(AUTHOR_HEADER):]]


def dataset_header(name: str) -> list[str]:
    return {"authors": AUTHOR_HEADER, "efficiency": AUTHOR_HEADER, "repos": REPO_HEADER, "files": FILES_COLUMNS,
            "author_extras": EXTRAS_HEADER}[name]


def dataset_csv(name: str, records: Sequence[dict]) -> str:
    header = dataset_header(name)
    return csv_text(header, ([r.get(c) for c in header] for r in records))


def apply_transforms(columns: dict[str, DataColumn], spec: AnalysisSpec) -> list[str]:
    log = []
    for name, ops in spec.transforms.items():
        col = columns[name]
        for op in ops:
            kind, *args = op.split(":")
            if kind == "log1p":
                col = log1p_transform(col)
                log.append(f"{name} -> log(1 + {name})")
            elif kind == "zscore":
                col = zscore(col)
                log.append(f"{name} -> ({name} - mean) / sd (n-1)")
            else:
                lower, upper = (float(a) for a in args) if args else (0.01, 0.99)
                col = DataColumn(name, winsorize(col.values.tolist(), lower, upper))
                log.append(f"{name} -> winsorized at [{lower:g}, {upper:g}] type-7 quantiles")
        columns[name] = col
    return log


def _correlation_dict(res) -> dict:
    return {"r": res.r, "p": res.p, "n_used": res.n, "df": res.df, "n_dropped": res.n_dropped}


def run_analysis(spec: AnalysisSpec, records: Sequence[dict]) -> tuple[dict, list[list] | None]:
    """Fit one model spec; returns (result dict, residual rows or None)."""
    numeric = [c for c in spec.referenced_columns() if c != spec.group]
    columns = {c: DataColumn(c, [r.get(c) for r in records]) for c in dict.fromkeys(numeric)}
    log = apply_transforms(columns, spec)
    y = columns[spec.response] if spec.response else None
    X = [columns[c] for c in spec.predictors]

    if spec.kind == "pearson":
        return {**_correlation_dict(pearson(X[0], y)), "transform_log": log}, None
    if spec.kind == "partial_corr":
        controls = [columns[c] for c in spec.controls]
        mask, _ = complete_cases(X[0], y, *controls)
        raw = pearson(DataColumn(X[0].name, X[0].values[mask]), DataColumn(y.name, y.values[mask]))
        res = partial_correlation(X[0], y, controls)
        return {**_correlation_dict(res), "raw_r": raw.r, "raw_p": raw.p,
                "controls": list(spec.controls), "transform_log": log}, None
    if spec.kind == "vif":
        mask, dropped = complete_cases(*X)
        values = vif(X)
        return {"vif": values, "n_used": int(mask.sum()), "n_dropped": dropped, "transform_log": log}, None
    if spec.kind == "corr_matrix":
        return {**correlation_matrix([columns[c] for c in spec.columns]), "transform_log": log}, None

    mask, _ = complete_cases(y, *X)
    if spec.kind == "ols":
        report = ols(y, X, intercept=spec.intercept)
    else:
        group = [r.get(spec.group) for r in records] if spec.group else None
        if group is not None:
            mask &= np.array([g is not None for g in group])
        report = poisson_fit(y, X, group=group, intercept=spec.intercept)
    report.transform_log = log + report.transform_log
    result = report.to_dict()
    residuals = result["residuals"]
    rows = [[i, e] for i, e in zip((i for i, keep in enumerate(mask) if keep), residuals)]
    return result, rows


def stage_models(state: AnalysisState, data: dict[str, list[dict]], hashes: dict[str, str]) -> dict[str, str]:
    """Run every configured analysis; returns rendered files keyed by bundle path."""
    out = {}
    for order, spec in enumerate(state.config.analyses):
        payload = {"analysis": spec.name, "order": order, "dataset": spec.dataset,
                   "dataset_sha256": hashes[spec.dataset], "spec": spec.to_dict()}
        if spec.dataset in ("authors", "efficiency"):
            payload["extras_sha256"] = hashes["author_extras"]
        residuals = None
        try:
            result, residuals = run_analysis(spec, data[spec.dataset])
            payload.update(status="ok", result=result)
        except SpacexError as exc:
            if spec.on_error != "record":
                exc.args = (f"analysis {spec.name!r}: {exc}",)
                raise
            payload.update(status="error", error={"type": type(exc).__name__, "message": str(exc)})
            if isinstance(exc, NotConverged) and exc.report is not None:
                last = exc.report.to_dict()
                last.pop("residuals")
                payload["last_iterate"] = last
        state.analyses[spec.name] = payload
        out[f"stats/{spec.name}.json"] = json_text(payload)
        if residuals is not None:
            out[f"stats/{spec.name}.residuals.csv"] = csv_text(RESIDUALS_HEADER, residuals)
    return out


# --------------------------------------------------------------------------
# rendering

def identities_csv(state: AnalysisState) -> str:
    groups: dict[str, list[RawIdentity]] = {}
    for raw, ident in state.identities.items():
        groups.setdefault(ident.canonical_id, []).append(raw)
    by_id = {i.canonical_id: i for i in state.identities.values()}
    rows = []
    for cid in sorted(groups):
        ident = by_id[cid]
        is_bot = not any(raw in state.kept for raw in groups[cid])
        rows.append([cid, ident.display_name, ";".join(sorted(ident.emails)), ";".join(sorted(ident.names)),
                     is_bot, len(groups[cid])])
    return csv_text(IDENTITIES_HEADER, rows)


def cleaning_json(state: AnalysisState) -> str:
    stages = {k: v.to_dict() for k, v in state.reports.items()}
    total = CleaningReport()
    for rep in state.reports.values():
        total = total + rep
    totals = total.to_dict()
    totals.pop("parameters")
    counts = {
        "contributors_before": len({i.canonical_id for i in state.identities.values()}),
        "contributors_after_bots": len({i.canonical_id for i in state.kept.values()}),
        "author_rows_before": len(state.author_rows_all),
        "author_rows_after_low_activity": len(state.authors),
        "efficiency_rows": len(state.efficiency),
    }
    return json_text({"totals": totals, "counts": counts, "stages": stages})


def author_metadata(state: AnalysisState) -> str:
    cfg = state.config
    return json_text({
        "forge_only_logins": {p: logins for p, logins in sorted(state.forge_only.items()) if logins},
        "forge_counts": "per-author counts in total_issues/total_prs; per-project totals in project_totals.csv",
        "commit_timestamp": "committer date, UTC",
        "merges": "included" if cfg.include_merges else "excluded from counts; first-parent diff kept for line replay",
        "sentiment_model": state.sentiment_model,
        "sentiment_note": "lexicon mode counts word hits and ignores negation",
        "daily_denominator": "distinct UTC calendar dates with >= 1 commit",
        "project_age": "(last commit - first commit) / 365.25 days",
    })


def project_totals_csv(state: AnalysisState) -> str:
    rows = []
    for h in state.histories:
        snap = state.snapshots.get(h.project_name)
        rows.append([h.project_name, len(snap.issues) if snap else None, len(snap.pull_requests) if snap else None])
    return csv_text(PROJECT_TOTALS_HEADER, rows)


def communication_files(state: AnalysisState) -> dict[str, str]:
    names = state.display_names()
    out = {}
    pair_rows = []
    summary = {}
    for project, comm in sorted(state.communication.items()):
        stem = f"communication/{safe_name(project)}"
        out[f"{stem}.events.csv"] = csv_text(EVENTS_HEADER, (e.csv_row() for e in comm.events))
        out[f"{stem}.ownership.csv"] = csv_text(
            OWNERSHIP_HEADER, ([o.path, o.top_contributor, o.top_share_pct] for o in comm.ownership))
        histogram = comm.time_stats["histogram"] if comm.time_stats else [(k, 0) for k in range(math.ceil(state.config.window_hours))]
        out[f"{stem}.histogram.csv"] = csv_text(HISTOGRAM_HEADER, histogram)
        for (a, b), n in pair_summary(comm.events):
            pair_rows.append([project, a, b, names.get(a, a), names.get(b, b), n])
        shares = [o.top_share_pct for o in comm.ownership]
        summary[project] = {
            "n_events": len(comm.events),
            "mean_gap_hours": comm.time_stats["mean_gap_hours"] if comm.time_stats else None,
            "files_touched": len(comm.cif),
            "files_with_events": sum(1 for v in comm.cif.values() if v > 0),
            "files_with_ownership": len(shares),
            "mean_top_share_pct": sum(shares) / len(shares) if shares else None,
        }
    out["communication/pairs.csv"] = csv_text(PAIRS_HEADER, pair_rows)
    all_events = [e for c in state.communication.values() for e in c.events]
    summary_all = {
        "n_events": len(all_events),
        "mean_gap_hours": sum(e.gap_hours for e in all_events) / len(all_events) if all_events else None,
        "window_hours": state.config.window_hours,
        "window_boundary": "inclusive",
        "strict_alternation": state.config.strict_alternation,
    }
    out["communication/summary.json"] = json_text({"overall": summary_all, "projects": summary})
    return out


def provenance(state: AnalysisState) -> dict:
    cfg = state.config
    return {
        "tool": "spacex",
        "version": __version__,
        "config_sha256": cfg.sha256,
        "data_as_of": state.data_as_of,
        "inputs": input_provenance(cfg, state.histories),
        "sentiment_model": state.sentiment_model or None,
        "parameters": cfg.parameters(),
    }


# --------------------------------------------------------------------------
# entry points

def analyze_state(config: RunConfig, until: str = "analyze") -> tuple[AnalysisState, BundleWriter]:
    """Run stages up to ``until`` and render the bundle in memory."""
    if until not in UNTIL:
        raise ValueError(f"until must be one of {UNTIL}")
    state = AnalysisState(config)
    writer = BundleWriter()
    with stage("load"):
        state.histories = load_histories(config)
        state.snapshots = load_snapshots(config, (h.project_name for h in state.histories))
    with stage("identities"):
        stage_identities(state)
    writer.add("config.yaml", config.source_text)
    writer.add("datasets/identities.csv", identities_csv(state))
    if until == "clean":
        writer.add("cleaning/cleaning_report.json", cleaning_json(state))
        return state, writer

    with stage("sentiment"):
        stage_sentiment(state)
    with stage("metrics"):
        stage_metrics(state)
    with stage("cleaning"):
        stage_row_cleaning(state)
    with stage("communication"):
        stage_communication(state)
    data = datasets(state)
    hashes = {}
    for name, records in data.items():
        hashes[name] = writer.add(f"datasets/{name}.csv", dataset_csv(name, records))
    hashes["author_extras"] = writer.add("datasets/author_extras.csv", dataset_csv("author_extras", data["authors"]))
    writer.add("datasets/project_totals.csv", project_totals_csv(state))
    writer.add("datasets/author_metadata.json", author_metadata(state))
    writer.add("cleaning/cleaning_report.json", cleaning_json(state))
    for path, text in communication_files(state).items():
        writer.add(path, text)

    if until == "analyze":
        with stage("models"):
            for path, text in stage_models(state, data, hashes).items():
                writer.add(path, text)
    if until in ("cps", "analyze"):
        with stage("cps"):
            stage_cps(state)
        writer.add("cps/cps.csv", csv_text(CPS_HEADER, state.cps_rows))
        writer.add("cps/cps_meta.json", json_text({
            "dataset": "authors",
            "dataset_sha256": hashes["authors"],
            "scoring_profile": config.scoring_profile,
            "dimension_formulas": PROFILE_DESCRIPTIONS[config.scoring_profile],
            "weights": config.weights.normalized(),
            "dropped_dimensions": state.cps_dropped,
            "missing_policy": "weights renormalized over the dimensions present for each author",
            "n_authors": len(state.cps_rows),
            "note": "CPS values are constructed by this tool; the dimension scalars are replaceable defaults",
        }))
    return state, writer


def cmd_analyze(config: RunConfig, out_dir: Path | None = None, until: str = "analyze") -> Path:
    out_dir = Path(out_dir or config.out_dir or "bundle")
    state, writer = analyze_state(config, until)
    with stage("write"):
        return writer.commit(out_dir, provenance(state), until)


def cmd_mine(repo_paths: Sequence[Path], out_dir: Path, keep_going: bool = False, workers: int = 4,
             opts: IngestOptions | None = None) -> tuple[Path, list[str]]:
    """Mine each clone to ``<project>.commits.csv`` and ``<project>.history.json`` plus ``commits.csv``."""
    opts = opts or IngestOptions()
    errors: list[str] = []

    def mine(path: Path):
        try:
            return _with_repo(path, lambda: walk_history(path, opts))
        except SpacexError as exc:
            if not keep_going:
                raise
            errors.append(str(exc))
            return None

    histories = [h for h in parallel_map(mine, [Path(p) for p in repo_paths], workers) if h is not None]
    names = [h.project_name for h in histories]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise InputError(f"duplicate project names: {dupes}")
    histories.sort(key=lambda h: h.project_name)
    writer = BundleWriter()
    for h in histories:
        stem = safe_name(h.project_name)
        writer.add(f"{stem}.commits.csv", commits_csv([h]))
        writer.add(f"{stem}.history.json", json_text(history_to_dict(h)))
    writer.add("commits.csv", commits_csv(histories))
    prov = {
        "tool": "spacex",
        "version": __version__,
        "data_as_of": iso_utc(max(h.last_commit_at for h in histories)) if histories else None,
        "options": {"compute_complexity": opts.compute_complexity, "follow_renames": opts.follow_renames},
        "errors": sorted(errors),
    }
    return writer.commit(Path(out_dir), prov, "mine"), sorted(errors)


# --------------------------------------------------------------------------
# corpus selection

def _month_index(ts: datetime) -> int:
    return ts.year * 12 + ts.month - 1


def select_projects(histories: Sequence[RepoHistory], kept: dict[RawIdentity, ContributorIdentity],
                    as_of: datetime | None = None, min_contributors: int = 3, max_contributors: int = 10,
                    months: int = 6) -> list[dict]:
    """Apply the corpus filter: contributor count in range and a commit in each trailing month.

    Contributors are de-aliased, non-bot identities.  The trailing window is
    the ``months`` calendar months ending with the month of ``as_of``
    (default: the newest commit across ``histories``).
    """
    if not histories:
        return []
    as_of = as_of or max(h.last_commit_at for h in histories)
    last = _month_index(as_of)
    wanted = set(range(last - months + 1, last + 1))
    out = []
    for h in histories:
        people = {kept[c.identity].canonical_id for c in h.commits if c.identity in kept}
        active = {_month_index(c.timestamp) for c in h.commits if c.identity in kept and c.timestamp <= as_of}
        missing = sorted(wanted - active)
        ok_people = min_contributors <= len(people) <= max_contributors
        out.append({
            "project": h.project_name,
            "contributors": len(people),
            "months_missing": [f"{m // 12:04d}-{m % 12 + 1:02d}" for m in missing],
            "selected": ok_people and not missing,
        })
    return out
