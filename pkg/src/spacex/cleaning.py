"""Identity de-aliasing, bot removal and outlier handling.

Quantiles use linear interpolation between order statistics (Hyndman-Fan
type 7) everywhere so results are stable bit for bit.
"""

from __future__ import annotations

import csv
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, UnknownColumn
from .ingest import CommitRecord

RawIdentity = tuple[str, str]  # (author_name, author_email) exactly as mined


@dataclass(frozen=True)
class ContributorIdentity:
    canonical_id: str
    display_name: str
    emails: frozenset[str]
    names: frozenset[str]
    is_bot: bool = False


@dataclass
class CleaningReport:
    merged_alias_groups: int = 0
    bots_removed: int = 0
    low_activity_removed: int = 0
    outlier_rows_removed: int = 0
    winsorized_cells: int = 0
    parameters: dict[str, Any] = field(default_factory=dict)

    def __add__(self, other: "CleaningReport") -> "CleaningReport":
        return CleaningReport(
            self.merged_alias_groups + other.merged_alias_groups,
            self.bots_removed + other.bots_removed,
            self.low_activity_removed + other.low_activity_removed,
            self.outlier_rows_removed + other.outlier_rows_removed,
            self.winsorized_cells + other.winsorized_cells,
            {**self.parameters, **other.parameters},
        )

    def to_dict(self) -> dict:
        return {
            "merged_alias_groups": self.merged_alias_groups,
            "bots_removed": self.bots_removed,
            "low_activity_removed": self.low_activity_removed,
            "outlier_rows_removed": self.outlier_rows_removed,
            "winsorized_cells": self.winsorized_cells,
            "parameters": self.parameters,
        }


# --------------------------------------------------------------------------
# de-aliasing

def normalize_name(name: str) -> str:
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.lower().split())


def normalize_email(email: str) -> str:
    return email.strip().lower()


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # deterministic root choice keeps group iteration order stable
            if repr(rb) < repr(ra):
                ra, rb = rb, ra
            self.parent[rb] = ra


def load_alias_overrides(path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"raw_email", "canonical_id"} <= set(reader.fieldnames):
            raise UnknownColumn(f"{path}: alias override CSV needs raw_email,canonical_id columns")
        return {normalize_email(r["raw_email"]): r["canonical_id"].strip() for r in reader}


def dealias(
    records: Iterable[CommitRecord | RawIdentity],
    overrides: Mapping[str, str] | None = None,
) -> tuple[dict[RawIdentity, ContributorIdentity], CleaningReport]:
    """Merge raw (name, email) identities into contributors.

    Two raw identities join when their lowercased emails or their
    normalized names are equal; the relation is closed transitively.
    """
    overrides = {normalize_email(k): v for k, v in (overrides or {}).items()}
    counts: Counter[RawIdentity] = Counter()
    for rec in records:
        counts[rec.identity if isinstance(rec, CommitRecord) else tuple(rec)] += 1

    uf = _UnionFind()
    for raw in sorted(counts):
        name, email = raw
        node = ("raw", raw)
        uf.find(node)
        if normalize_email(email):
            uf.union(node, ("email", normalize_email(email)))
        if normalize_name(name):
            uf.union(node, ("name", normalize_name(name)))
        if normalize_email(email) in overrides:
            target = overrides[normalize_email(email)]
            uf.union(node, ("override", target))
            # a target naming a mined email joins that address's group too
            uf.union(("override", target), ("email", normalize_email(target)))

    groups: dict[Any, list[RawIdentity]] = {}
    for raw in sorted(counts):
        groups.setdefault(uf.find(("raw", raw)), []).append(raw)

    mapping: dict[RawIdentity, ContributorIdentity] = {}
    merged = 0
    for members in groups.values():
        if len(members) > 1:
            merged += 1
        emails = frozenset(normalize_email(e) for _, e in members if normalize_email(e))
        names = frozenset(n for n, _ in members if n.strip())
        forced = sorted({overrides[e] for e in emails if e in overrides})
        if forced:
            canonical = forced[0]
        elif emails:
            canonical = min(emails)
        else:
            canonical = min(normalize_name(n) for n, _ in members)
        name_counts: Counter[str] = Counter()
        for raw in members:
            name_counts[raw[0]] += counts[raw]
        display = min(name_counts, key=lambda n: (-name_counts[n], n)) if name_counts else canonical
        ident = ContributorIdentity(canonical, display, emails, names)
        for raw in members:
            mapping[raw] = ident

    report = CleaningReport(merged_alias_groups=merged, parameters={
        "dealias_edges": ["lowercased email equality", "normalized name equality (lowercase, collapsed whitespace, diacritics stripped)"],
        "alias_overrides": len(overrides),
    })
    return mapping, report


# --------------------------------------------------------------------------
# bots

@dataclass(frozen=True)
class BotPatterns:
    suffixes: tuple[str, ...] = ("[bot]",)
    substrings: tuple[str, ...] = ("dependabot", "renovate", "github-actions")

    def matches(self, text: str) -> bool:
        text = text.strip().lower()
        if not text:
            return False
        if any(text.endswith(s.lower()) for s in self.suffixes):
            return True
        return any(s.lower() in text for s in self.substrings)

    def matches_identity(self, ident: ContributorIdentity) -> bool:
        candidates = list(ident.names) + [e.split("@", 1)[0] for e in ident.emails] + list(ident.emails)
        return any(self.matches(c) for c in candidates)


def filter_bots(
    identities: Mapping[RawIdentity, ContributorIdentity],
    patterns: BotPatterns | None = None,
) -> tuple[dict[RawIdentity, ContributorIdentity], CleaningReport]:
    patterns = patterns or BotPatterns()
    kept = {}
    bots = set()
    for raw, ident in identities.items():
        if patterns.matches_identity(ident):
            bots.add(ident.canonical_id)
        else:
            kept[raw] = ident
    return kept, CleaningReport(bots_removed=len(bots), parameters={
        "bot_suffixes": list(patterns.suffixes), "bot_substrings": list(patterns.substrings),
    })


# --------------------------------------------------------------------------
# row filters

def value_of(row: Any, column: str) -> Any:
    if isinstance(row, Mapping):
        if column not in row:
            raise UnknownColumn(f"unknown column {column!r}")
        return row[column]
    if is_dataclass(row):
        if column not in {f.name for f in fields(row)} and not hasattr(row, column):
            raise UnknownColumn(f"unknown column {column!r}")
        return getattr(row, column)
    raise UnknownColumn(f"cannot read column {column!r} from {type(row).__name__}")


def _as_float(value: Any) -> float:
    if value is None or value == "":
        return math.nan
    return float(value)


def filter_low_activity(rows: Sequence[Any], min_commits: int = 20) -> tuple[list, CleaningReport]:
    if min_commits < 0:
        raise ValueError("min_commits must be >= 0")
    kept = [r for r in rows if value_of(r, "total_commits") >= min_commits]
    return kept, CleaningReport(low_activity_removed=len(rows) - len(kept),
                                parameters={"min_commits": min_commits})


def quantile7(values: Sequence[float], q: float) -> float:
    return float(np.quantile(np.asarray(values, dtype=float), q, method="linear"))


def winsorize(values: Sequence[float], lower_pct: float = 0.01, upper_pct: float = 0.99) -> list[float]:
    """Clamp values to the [lower_pct, upper_pct] type-7 quantiles; NaN passes through."""
    if not 0 <= lower_pct < upper_pct <= 1:
        raise ValueError("need 0 <= lower_pct < upper_pct <= 1")
    arr = np.asarray(values, dtype=float)
    finite = arr[~np.isnan(arr)]
    if finite.size == 0:
        raise EmptyInput("winsorize needs at least one value")
    lo, hi = np.quantile(finite, [lower_pct, upper_pct], method="linear")
    out = arr.copy()
    mask = ~np.isnan(arr)
    out[mask] = np.clip(arr[mask], lo, hi)
    return out.tolist()


def winsorize_rows(rows: Sequence[Any], column: str, lower_pct: float = 0.01,
                   upper_pct: float = 0.99) -> tuple[list, CleaningReport]:
    """Winsorize one column of dataclass rows; rows without a value are untouched."""
    import dataclasses

    values = [_as_float(value_of(r, column)) for r in rows]
    report = CleaningReport(parameters={f"winsorize.{column}": {
        "lower": lower_pct, "upper": upper_pct, "quantile": "type 7 (linear interpolation)"}})
    if not rows or all(math.isnan(v) for v in values):
        return list(rows), report
    clamped = winsorize(values, lower_pct, upper_pct)
    out = []
    for row, before, after in zip(rows, values, clamped):
        if math.isnan(before) or after == before:
            out.append(row)
            continue
        report.winsorized_cells += 1
        if isinstance(row, Mapping):
            out.append({**row, column: after})
        else:
            out.append(dataclasses.replace(row, **{column: after}))
    return out, report


def iqr_fences(values: Sequence[float], multiplier: float = 1.5) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    arr = arr[~np.isnan(arr)]
    q1, q3 = np.quantile(arr, [0.25, 0.75], method="linear")
    iqr = q3 - q1
    return float(q1 - multiplier * iqr), float(q3 + multiplier * iqr)


def iqr_filter(rows: Sequence[Any], columns: Sequence[str], multiplier: float = 1.5) -> tuple[list, CleaningReport]:
    """Drop rows outside the Tukey fences in any named column.

    Fences come from the unfiltered input; apply once (a second pass with
    recomputed fences can remove more rows).
    """
    rows = list(rows)
    report = CleaningReport(parameters={"iqr_columns": list(columns), "iqr_multiplier": multiplier,
                                        "quantile": "type 7 (linear interpolation)"})
    if not rows:
        return rows, report
    keep = [True] * len(rows)
    for column in columns:
        values = [_as_float(value_of(r, column)) for r in rows]
        if all(math.isnan(v) for v in values):
            continue
        lo, hi = iqr_fences(values, multiplier)
        for i, v in enumerate(values):
            if not math.isnan(v) and (v < lo or v > hi):
                keep[i] = False
    kept = [r for r, k in zip(rows, keep) if k]
    report.outlier_rows_removed = len(rows) - len(kept)
    return kept, report
