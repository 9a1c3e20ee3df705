"""Composite Productivity Score: weighted sum of z-scored dimensions.

Raw per-author dimension scores come from a scoring profile.  Each score
is oriented so that larger means more productive.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import AllDegenerate, ConfigError, NoDimensions
from .metrics import AuthorProjectRow

logger = logging.getLogger(__name__)

DIMENSIONS = ("satisfaction", "performance", "activity", "communication", "efficiency")
CPS_HEADER = ["project", "author", "z_satisfaction", "z_performance", "z_activity",
              "z_communication", "z_efficiency", "cps", "weights_used"]


class DimensionDroppedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DimensionVector:
    satisfaction: float | None = None
    performance: float | None = None
    activity: float | None = None
    communication: float | None = None
    efficiency: float | None = None

    def get(self, name: str) -> float | None:
        value = getattr(self, name)
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return None
        return value

    def present(self) -> list[str]:
        return [d for d in DIMENSIONS if self.get(d) is not None]


@dataclass(frozen=True)
class WeightVector:
    satisfaction: float = 0.2
    performance: float = 0.2
    activity: float = 0.2
    communication: float = 0.2
    efficiency: float = 0.2

    def __post_init__(self):
        values = [getattr(self, d) for d in DIMENSIONS]
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise ConfigError("weights must be finite and >= 0")
        if sum(values) <= 0:
            raise ConfigError("weights must not all be zero")

    @classmethod
    def from_mapping(cls, weights: Mapping[str, float] | Sequence[float] | None) -> "WeightVector":
        if weights is None:
            return cls()
        if isinstance(weights, Mapping):
            unknown = set(weights) - set(DIMENSIONS)
            if unknown:
                raise ConfigError(f"unknown CPS dimensions: {sorted(unknown)}")
            return cls(**{d: float(weights.get(d, 0.0)) for d in DIMENSIONS})
        values = list(weights)
        if len(values) != len(DIMENSIONS):
            raise ConfigError("weight list needs exactly five values")
        return cls(*map(float, values))

    def normalized(self, over: Sequence[str] = DIMENSIONS) -> dict[str, float]:
        total = sum(getattr(self, d) for d in over)
        if total <= 0:
            return {}
        return {d: getattr(self, d) / total for d in over}


# --------------------------------------------------------------------------
# scoring profiles

def default_profile(row: AuthorProjectRow, participation: float | None) -> DimensionVector:
    def neg(value):
        return None if value is None else -float(value)

    performance = None
    if row.total_commits > 0:
        performance = -row.bug_fix_commits / row.total_commits
    return DimensionVector(
        satisfaction=neg(row.negative_commit_pct),
        performance=performance,
        activity=0.5 * math.log1p(row.code_churn) + 0.5 * math.log1p(row.total_commits),
        communication=participation,
        efficiency=neg(row.mean_commit_gap_hours),
    )


SCORING_PROFILES: dict[str, Callable[[AuthorProjectRow, float | None], DimensionVector]] = {
    "default": default_profile,
}

PROFILE_DESCRIPTIONS = {
    "default": {
        "satisfaction": "-negative_commit_pct",
        "performance": "-(bug_fix_commits / total_commits)",
        "activity": "0.5*log(1+code_churn) + 0.5*log(1+total_commits)",
        "communication": "mean CIF events the author takes part in per file touched",
        "efficiency": "-mean_commit_gap_hours",
    },
}


def raw_dimensions(rows: Sequence[AuthorProjectRow], participation: Mapping[tuple[str, str], float],
                   profile: str = "default") -> list[DimensionVector]:
    if profile not in SCORING_PROFILES:
        raise ConfigError(f"unknown scoring profile {profile!r}; known: {sorted(SCORING_PROFILES)}")
    scorer = SCORING_PROFILES[profile]
    return [scorer(r, participation.get((r.project_name, r.canonical_id))) for r in rows]


# --------------------------------------------------------------------------
# standardization and aggregation

def standardize_dimensions(vectors: Sequence[DimensionVector]) -> tuple[list[DimensionVector], list[str]]:
    """Z-score every dimension across the population.

    A dimension with fewer than two values or zero spread is dropped for
    everyone, with a ``DimensionDroppedWarning``.  Returns the standardized
    vectors and the names of dropped dimensions.
    """
    standardized: dict[str, list[float | None]] = {}
    dropped = []
    for d in DIMENSIONS:
        values = np.array([v.get(d) if v.get(d) is not None else math.nan for v in vectors], dtype=float)
        present = ~np.isnan(values)
        sd = float(np.std(values[present], ddof=1)) if present.sum() >= 2 else 0.0
        if present.sum() < 2 or sd == 0.0:
            if present.any():
                warnings.warn(f"CPS dimension {d!r} dropped: no spread across the population",
                              DimensionDroppedWarning, stacklevel=2)
                dropped.append(d)
            standardized[d] = [None] * len(vectors)
            continue
        mean = float(values[present].mean())
        standardized[d] = [None if not p else (float(x) - mean) / sd for x, p in zip(values, present)]
    if vectors and all(all(x is None for x in standardized[d]) for d in DIMENSIONS):
        raise AllDegenerate("no CPS dimension could be standardized")
    out = [DimensionVector(**{d: standardized[d][i] for d in DIMENSIONS}) for i in range(len(vectors))]
    return out, dropped


def composite_score(v: DimensionVector, w: WeightVector) -> tuple[float, dict[str, float]]:
    """Weighted sum over present dimensions, weights renormalized over them."""
    present = [d for d in v.present() if getattr(w, d) > 0]
    if not present:
        raise NoDimensions("author has no weighted dimension present")
    used = w.normalized(present)
    return sum(used[d] * v.get(d) for d in present), used


def weights_label(used: Mapping[str, float]) -> str:
    return ";".join(f"{d}={used[d]:.6g}" for d in DIMENSIONS if d in used)
