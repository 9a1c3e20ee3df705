"""Run configuration: one YAML (or JSON) file holding every pipeline parameter.

Relative paths resolve against the directory holding the config file.
Validation happens before any computation so a bad model spec fails fast.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .cleaning import BotPatterns
from .communication import FILES_COLUMNS
from .cps import DIMENSIONS, SCORING_PROFILES, WeightVector
from .errors import ConfigError, InputError
from .ingest import DEFAULT_BUG_KEYWORDS
from .metrics import AUTHOR_COLUMNS, REPO_HEADER

DATASET_COLUMNS = {
    "authors": AUTHOR_COLUMNS,
    "efficiency": AUTHOR_COLUMNS,
    "repos": REPO_HEADER,
    "files": FILES_COLUMNS,
}
MODEL_KINDS = ("pearson", "ols", "partial_corr", "poisson", "vif", "corr_matrix")
TRANSFORMS = ("log1p", "zscore", "winsorize")
EFFICIENCY_COLUMNS = ["mean_commit_gap_hours", "total_commits", "avg_daily_commits", "code_churn", "avg_daily_churn"]


def _z(*cols):
    return {c: ["zscore"] for c in cols}


DEFAULT_ANALYSES: list[dict] = [
    {"name": "satisfaction_poisson", "dataset": "authors", "kind": "poisson",
     "response": "total_commits",
     "predictors": ["negative_commit_pct", "total_issues", "total_prs"],
     "transforms": _z("negative_commit_pct", "total_issues", "total_prs"), "group": "project"},
    {"name": "satisfaction_vif", "dataset": "authors", "kind": "vif",
     "predictors": ["negative_commit_pct", "total_issues", "total_prs", "project_age_years"],
     "transforms": _z("negative_commit_pct", "total_issues", "total_prs", "project_age_years"),
     "on_error": "record"},
    {"name": "performance_repo_pearson", "dataset": "repos", "kind": "pearson",
     "response": "avg_pr_merge_time_hours", "predictors": ["ci_cd_success_rate"], "on_error": "record"},
    {"name": "performance_repo_pearson_log", "dataset": "repos", "kind": "pearson",
     "response": "avg_pr_merge_time_hours", "predictors": ["ci_cd_success_rate"],
     "transforms": {"avg_pr_merge_time_hours": ["log1p"]}, "on_error": "record"},
    {"name": "performance_repo_ols", "dataset": "repos", "kind": "ols",
     "response": "avg_pr_merge_time_hours", "predictors": ["ci_cd_success_rate", "total_commits"],
     "on_error": "record"},
    {"name": "performance_repo_partial", "dataset": "repos", "kind": "partial_corr",
     "response": "avg_pr_merge_time_hours", "predictors": ["ci_cd_success_rate"],
     "controls": ["total_commits"], "on_error": "record"},
    {"name": "performance_commits_churn_pearson", "dataset": "authors", "kind": "pearson",
     "response": "code_churn", "predictors": ["total_commits"]},
    {"name": "performance_bugfix_churn_pearson", "dataset": "authors", "kind": "pearson",
     "response": "code_churn", "predictors": ["bug_fix_commits"]},
    {"name": "performance_churn_on_commits", "dataset": "authors", "kind": "ols",
     "response": "code_churn", "predictors": ["total_commits"]},
    {"name": "performance_churn_on_bugfix", "dataset": "authors", "kind": "ols",
     "response": "code_churn", "predictors": ["bug_fix_commits"]},
    {"name": "performance_bugfix_churn_partial", "dataset": "authors", "kind": "partial_corr",
     "response": "code_churn", "predictors": ["bug_fix_commits"], "controls": ["total_commits"]},
    {"name": "activity_simple", "dataset": "authors", "kind": "ols",
     "response": "code_churn", "predictors": ["total_commits"],
     "transforms": {"code_churn": ["log1p"]}},
    {"name": "activity_multi", "dataset": "authors", "kind": "ols",
     "response": "code_churn", "predictors": ["total_commits", "avg_complexity"],
     "transforms": {"code_churn": ["log1p"]}, "on_error": "record"},
    {"name": "activity_full", "dataset": "authors", "kind": "ols",
     "response": "code_churn",
     "predictors": ["total_commits", "avg_complexity", "total_code_reviews", "total_deployments"],
     "transforms": {"code_churn": ["log1p"]}, "on_error": "record"},
    {"name": "communication_simple", "dataset": "files", "kind": "ols",
     "response": "cif", "predictors": ["top_share_pct"],
     "transforms": {"cif": ["log1p"]}, "on_error": "record"},
    {"name": "communication_multi", "dataset": "files", "kind": "ols",
     "response": "cif", "predictors": ["top_share_pct", "mean_gap_hours"],
     "transforms": {"cif": ["log1p"]}, "on_error": "record"},
    {"name": "efficiency_correlations", "dataset": "efficiency", "kind": "corr_matrix",
     "columns": EFFICIENCY_COLUMNS, "on_error": "record"},
]


@dataclass(frozen=True)
class AnalysisSpec:
    name: str
    dataset: str
    kind: str
    response: str | None = None
    predictors: tuple[str, ...] = ()
    controls: tuple[str, ...] = ()
    columns: tuple[str, ...] = ()
    transforms: dict[str, tuple[str, ...]] = field(default_factory=dict)
    group: str | None = None
    intercept: bool = True
    on_error: str = "fail"

    def referenced_columns(self) -> list[str]:
        cols = ([self.response] if self.response else []) + list(self.predictors) + list(self.controls) + list(self.columns)
        if self.group:
            cols.append(self.group)
        return cols + list(self.transforms)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "dataset": self.dataset, "kind": self.kind, "response": self.response,
            "predictors": list(self.predictors), "controls": list(self.controls), "columns": list(self.columns),
            "transforms": {k: list(v) for k, v in self.transforms.items()}, "group": self.group,
            "intercept": self.intercept, "on_error": self.on_error,
        }


@dataclass(frozen=True)
class WinsorizeSpec:
    dataset: str
    column: str
    lower: float = 0.01
    upper: float = 0.99


@dataclass
class RunConfig:
    repo_paths: list[Path]
    snapshot_paths: list[Path]
    out_dir: Path | None = None
    base_dir: Path = Path(".")
    source_text: str = ""
    include_merges: bool = False
    follow_renames: bool = False
    compute_complexity: bool = True
    bug_keywords: tuple[str, ...] = DEFAULT_BUG_KEYWORDS
    min_commits: int = 20
    iqr_columns: tuple[str, ...] = ("mean_commit_gap_hours", "avg_daily_commits", "avg_daily_churn", "total_commits")
    iqr_multiplier: float = 1.5
    winsorize: tuple[WinsorizeSpec, ...] = (WinsorizeSpec("repos", "avg_pr_merge_time_hours"),)
    bot_patterns: BotPatterns = BotPatterns()
    alias_overrides_path: Path | None = None
    sentiment_mode: str = "lexicon"
    external_cmd: str | None = None
    window_hours: float = 24.0
    strict_alternation: bool = False
    analyses: tuple[AnalysisSpec, ...] = ()
    weights: WeightVector = WeightVector()
    scoring_profile: str = "default"
    workers: int = 4

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()

    def display_path(self, path: Path) -> str:
        try:
            return path.resolve().relative_to(self.base_dir.resolve()).as_posix()
        except ValueError:
            return path.name

    def parameters(self) -> dict:
        return {
            "include_merges": self.include_merges,
            "follow_renames": self.follow_renames,
            "bug_keywords": list(self.bug_keywords),
            "min_commits": self.min_commits,
            "iqr_columns": list(self.iqr_columns),
            "iqr_multiplier": self.iqr_multiplier,
            "winsorize": [w.__dict__ for w in self.winsorize],
            "quantile_convention": "type 7 (linear interpolation between order statistics)",
            "bot_patterns": {"suffixes": list(self.bot_patterns.suffixes),
                             "substrings": list(self.bot_patterns.substrings)},
            "sentiment_mode": self.sentiment_mode,
            "window_hours": self.window_hours,
            "window_boundary": "inclusive (gap <= window counts)",
            "strict_alternation": self.strict_alternation,
            "daily_denominator": "distinct UTC calendar dates with >= 1 commit",
            "year_length_days": 365.25,
            "cps_weights": {d: getattr(self.weights, d) for d in DIMENSIONS},
            "cps_scoring_profile": self.scoring_profile,
        }


def _get(section: dict, key: str, default, kind, where: str):
    value = section.get(key, default)
    if value is None:
        return default
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: expected a mapping")
    return value


def _str_list(value, where: str) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str) or not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{where}: expected a list of strings")
    return value


def parse_analysis(raw: Any, index: int) -> AnalysisSpec:
    where = f"analyses[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {"name", "dataset", "kind", "response", "predictors", "controls", "columns", "transforms",
             "group", "intercept", "on_error"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    transforms = raw.get("transforms") or {}
    if not isinstance(transforms, dict):
        raise ConfigError(f"{where}.transforms: expected a mapping column -> list")
    spec = AnalysisSpec(
        name=_get(raw, "name", f"analysis_{index}", str, where),
        dataset=_get(raw, "dataset", "authors", str, where),
        kind=_get(raw, "kind", "", str, where),
        response=raw.get("response"),
        predictors=tuple(_str_list(raw.get("predictors"), f"{where}.predictors")),
        controls=tuple(_str_list(raw.get("controls"), f"{where}.controls")),
        columns=tuple(_str_list(raw.get("columns"), f"{where}.columns")),
        transforms={c: tuple(_str_list(ops, f"{where}.transforms.{c}")) for c, ops in transforms.items()},
        group=raw.get("group"),
        intercept=_get(raw, "intercept", True, bool, where),
        on_error=_get(raw, "on_error", "fail", str, where),
    )
    validate_analysis(spec, where)
    return spec


def validate_analysis(spec: AnalysisSpec, where: str) -> None:
    if spec.kind not in MODEL_KINDS:
        raise ConfigError(f"{where}: unknown kind {spec.kind!r}; expected one of {MODEL_KINDS}")
    if spec.dataset not in DATASET_COLUMNS:
        raise ConfigError(f"{where}: unknown dataset {spec.dataset!r}; expected one of {sorted(DATASET_COLUMNS)}")
    if spec.on_error not in ("fail", "record"):
        raise ConfigError(f"{where}.on_error must be 'fail' or 'record'")
    available = set(DATASET_COLUMNS[spec.dataset])
    for col in spec.referenced_columns():
        if col not in available:
            raise ConfigError(f"{where} ({spec.name}): unknown column {col!r} in dataset {spec.dataset!r}")
    for col, ops in spec.transforms.items():
        for op in ops:
            if op.split(":")[0] not in TRANSFORMS:
                raise ConfigError(f"{where}: unknown transform {op!r} for {col!r}")
    needs_response = spec.kind in ("pearson", "ols", "partial_corr", "poisson")
    if needs_response and not spec.response:
        raise ConfigError(f"{where} ({spec.name}): kind {spec.kind} needs a response")
    if spec.kind in ("pearson", "partial_corr") and len(spec.predictors) != 1:
        raise ConfigError(f"{where} ({spec.name}): {spec.kind} takes exactly one predictor")
    if spec.kind == "vif" and len(spec.predictors) < 2:
        raise ConfigError(f"{where} ({spec.name}): vif needs at least two predictors")
    if spec.kind == "corr_matrix" and len(spec.columns) < 2:
        raise ConfigError(f"{where} ({spec.name}): corr_matrix needs at least two columns")
    if spec.group and spec.kind != "poisson":
        raise ConfigError(f"{where} ({spec.name}): group is only supported for poisson")


def load_config(path: str | Path, out_dir: str | Path | None = None, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw, base_dir=path.parent, source_text=text, out_dir=out_dir, check_paths=check_paths)


def config_from_dict(raw: dict, base_dir: Path = Path("."), source_text: str | None = None,
                     out_dir: str | Path | None = None, check_paths: bool = True) -> RunConfig:
    raw = copy.deepcopy(raw)
    known = {"repo_paths", "snapshot_paths", "out_dir", "ingest", "cleaning", "sentiment",
             "communication", "analyses", "cps", "workers"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base_dir / candidate

    repo_paths = [resolve(p) for p in _str_list(raw.get("repo_paths"), "repo_paths")]
    snapshot_paths = [resolve(p) for p in _str_list(raw.get("snapshot_paths"), "snapshot_paths")]
    if not repo_paths:
        raise ConfigError("repo_paths must list at least one repository or mined history file")

    ingest = _section(raw, "ingest")
    cleaning = _section(raw, "cleaning")
    sentiment = _section(raw, "sentiment")
    comm = _section(raw, "communication")
    cps = _section(raw, "cps")

    min_commits = _get(cleaning, "min_commits", 20, int, "cleaning")
    if min_commits < 0:
        raise ConfigError("cleaning.min_commits must be >= 0")
    iqr_columns = tuple(_str_list(cleaning.get("iqr_columns"), "cleaning.iqr_columns")) or RunConfig.iqr_columns
    for col in iqr_columns:
        if col not in AUTHOR_COLUMNS:
            raise ConfigError(f"cleaning.iqr_columns: unknown author column {col!r}")

    winsor = []
    raw_w = cleaning.get("winsorize")
    entries = raw_w if raw_w is not None else [w.__dict__ for w in RunConfig.winsorize]
    if not isinstance(entries, list):
        raise ConfigError("cleaning.winsorize: expected a list of {dataset, column, lower, upper}")
    for i, entry in enumerate(entries):
        where = f"cleaning.winsorize[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected a mapping")
        spec = WinsorizeSpec(
            dataset=_get(entry, "dataset", "repos", str, where),
            column=_get(entry, "column", "", str, where),
            lower=_get(entry, "lower", 0.01, float, where),
            upper=_get(entry, "upper", 0.99, float, where),
        )
        if spec.dataset not in ("authors", "repos"):
            raise ConfigError(f"{where}: dataset must be authors or repos")
        if spec.column not in DATASET_COLUMNS[spec.dataset]:
            raise ConfigError(f"{where}: unknown column {spec.column!r}")
        if not 0 <= spec.lower < spec.upper <= 1:
            raise ConfigError(f"{where}: need 0 <= lower < upper <= 1")
        winsor.append(spec)

    bots = cleaning.get("bot_patterns") or {}
    if not isinstance(bots, dict):
        raise ConfigError("cleaning.bot_patterns: expected a mapping")
    bot_patterns = BotPatterns(
        suffixes=tuple(_str_list(bots.get("suffixes"), "cleaning.bot_patterns.suffixes")) or BotPatterns.suffixes,
        substrings=tuple(_str_list(bots.get("substrings"), "cleaning.bot_patterns.substrings")) or BotPatterns.substrings,
    )
    overrides = cleaning.get("alias_overrides_path")

    mode = _get(sentiment, "mode", "lexicon", str, "sentiment")
    if mode not in ("lexicon", "external"):
        raise ConfigError("sentiment.mode must be 'lexicon' or 'external'")
    external_cmd = sentiment.get("external_cmd")
    if mode == "external" and not external_cmd:
        raise ConfigError("sentiment.external_cmd is required when mode is 'external'")

    profile = _get(cps, "scoring_profile", "default", str, "cps")
    if profile not in SCORING_PROFILES:
        raise ConfigError(f"cps.scoring_profile: unknown profile {profile!r}")

    raw_analyses = raw.get("analyses")
    if raw_analyses is None:
        raw_analyses = DEFAULT_ANALYSES
    if not isinstance(raw_analyses, list):
        raise ConfigError("analyses: expected a list")
    analyses = tuple(parse_analysis(a, i) for i, a in enumerate(raw_analyses))
    names = [a.name for a in analyses]
    if len(set(names)) != len(names):
        raise ConfigError("analyses: names must be unique")

    if out_dir is None and raw.get("out_dir"):
        out_dir = resolve(raw["out_dir"])

    config = RunConfig(
        repo_paths=repo_paths,
        snapshot_paths=snapshot_paths,
        out_dir=Path(out_dir) if out_dir is not None else None,
        base_dir=base_dir,
        source_text=source_text if source_text is not None else yaml.safe_dump(raw, sort_keys=True),
        include_merges=_get(ingest, "include_merges", False, bool, "ingest"),
        follow_renames=_get(ingest, "follow_renames", False, bool, "ingest"),
        compute_complexity=_get(ingest, "compute_complexity", True, bool, "ingest"),
        bug_keywords=tuple(_str_list(ingest.get("bug_keywords"), "ingest.bug_keywords")) or DEFAULT_BUG_KEYWORDS,
        min_commits=min_commits,
        iqr_columns=iqr_columns,
        iqr_multiplier=_get(cleaning, "iqr_multiplier", 1.5, float, "cleaning"),
        winsorize=tuple(winsor),
        bot_patterns=bot_patterns,
        alias_overrides_path=resolve(overrides) if overrides else None,
        sentiment_mode=mode,
        external_cmd=external_cmd,
        window_hours=_get(comm, "window_hours", 24.0, float, "communication"),
        strict_alternation=_get(comm, "strict_alternation", False, bool, "communication"),
        analyses=analyses,
        weights=WeightVector.from_mapping(cps.get("weights")),
        scoring_profile=profile,
        workers=_get(raw, "workers", 4, int, "config"),
    )
    if check_paths:
        for p in [*repo_paths, *snapshot_paths] + ([config.alias_overrides_path] if config.alias_overrides_path else []):
            if not p.exists():
                raise InputError(f"configured path does not exist: {p}")
    return config
