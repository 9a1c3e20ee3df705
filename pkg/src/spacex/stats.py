"""Correlation and regression routines.

Every fit works on the complete-case subset of the columns it touches and
reports how many rows it dropped.  Least squares goes through a QR
factorization; Poisson regression is fitted by iteratively reweighted
least squares on the same solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps
from scipy.linalg import solve_triangular

from .errors import (
    DegenerateInput,
    DomainError,
    NonCount,
    NotConverged,
    RankDeficient,
    Underdetermined,
)

INTERCEPT = "(Intercept)"
RANK_TOL = 1e-10


@dataclass(frozen=True)
class DataColumn:
    name: str
    values: np.ndarray

    def __init__(self, name: str, values):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "values", np.array(
            [math.nan if v is None else v for v in values], dtype=float))

    def __len__(self) -> int:
        return len(self.values)


def column(values, name: str = "x") -> DataColumn:
    if isinstance(values, DataColumn):
        return values
    return DataColumn(name, values)


@dataclass
class Coefficient:
    estimate: float
    std_error: float
    test_statistic: float
    p_value: float

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error,
                "test_statistic": self.test_statistic, "p_value": self.p_value}


@dataclass
class StatReport:
    model_kind: str
    coefficients: dict[str, Coefficient]
    n_used: int
    residuals: list[float]
    n_dropped: int = 0
    r_squared: float | None = None
    adj_r_squared: float | None = None
    f_statistic: dict | None = None
    deviance: float | None = None
    df_resid: int | None = None
    converged: bool | None = None
    iterations: int | None = None
    transform_log: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "coefficients": {k: v.to_dict() for k, v in self.coefficients.items()},
            "r_squared": self.r_squared,
            "adj_r_squared": self.adj_r_squared,
            "f_statistic": self.f_statistic,
            "deviance": self.deviance,
            "df_resid": self.df_resid,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_used": self.n_used,
            "n_dropped": self.n_dropped,
            "transform_log": list(self.transform_log),
            "residuals": list(self.residuals),
        }


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p: float
    n: int
    df: int
    n_dropped: int = 0

    def to_report(self, term: str = "r", kind: str = "pearson") -> StatReport:
        se = math.sqrt(max(0.0, 1 - self.r ** 2) / self.df) if self.df > 0 else math.nan
        return StatReport(
            model_kind=kind,
            coefficients={term: Coefficient(self.r, se, _t_from_r(self.r, self.df), self.p)},
            n_used=self.n, n_dropped=self.n_dropped, residuals=[], df_resid=self.df,
        )


def complete_cases(*columns: DataColumn) -> tuple[np.ndarray, int]:
    """Boolean mask of rows present in every column, plus the dropped count."""
    n = len(columns[0])
    for c in columns:
        if len(c) != n:
            raise ValueError(f"column {c.name!r} has {len(c)} rows, expected {n}")
    mask = np.ones(n, dtype=bool)
    for c in columns:
        mask &= np.isfinite(c.values)
    return mask, int(n - mask.sum())


# --------------------------------------------------------------------------
# correlation

def _t_from_r(r: float, df: int) -> float:
    if abs(r) >= 1.0:
        return math.copysign(math.inf, r)
    return r * math.sqrt(df / (1.0 - r * r))


def _p_from_t(t: float, df: int) -> float:
    if math.isinf(t):
        return 0.0
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), df)))


def _r_of(x: np.ndarray, y: np.ndarray, xname: str, yname: str) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0:
        raise DegenerateInput(f"column {xname!r} is constant")
    if syy == 0.0:
        raise DegenerateInput(f"column {yname!r} is constant")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pearson(x, y) -> CorrelationResult:
    x, y = column(x, "x"), column(y, "y")
    mask, dropped = complete_cases(x, y)
    n = int(mask.sum())
    if n < 3:
        raise DegenerateInput(f"pearson needs >= 3 complete pairs, got {n}")
    r = _r_of(x.values[mask], y.values[mask], x.name, y.name)
    df = n - 2
    return CorrelationResult(r, _p_from_t(_t_from_r(r, df), df), n, df, dropped)


def correlation_matrix(columns: Sequence[DataColumn]) -> dict:
    """Pairwise pearson r/p over the rows complete in every listed column."""
    mask, dropped = complete_cases(*columns)
    names = [c.name for c in columns]
    k = len(columns)
    r = [[1.0 if i == j else None for j in range(k)] for i in range(k)]
    p = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            res = pearson(DataColumn(names[i], columns[i].values[mask]),
                          DataColumn(names[j], columns[j].values[mask]))
            r[i][j] = r[j][i] = res.r
            p[i][j] = p[j][i] = res.p
    return {"columns": names, "r": r, "p": p, "n_used": int(mask.sum()), "n_dropped": dropped}


# --------------------------------------------------------------------------
# least squares

@dataclass
class _LstsqFit:
    beta: np.ndarray
    residuals: np.ndarray
    r: np.ndarray  # upper-triangular factor of the (weighted) design


def design_matrix(predictors: Sequence[DataColumn], mask: np.ndarray, intercept: bool) -> tuple[np.ndarray, list[str]]:
    cols = [c.values[mask] for c in predictors]
    names = [c.name for c in predictors]
    if intercept:
        cols.insert(0, np.ones(int(mask.sum())))
        names.insert(0, INTERCEPT)
    X = np.column_stack(cols) if cols else np.empty((int(mask.sum()), 0))
    return X, names


def _check_rank(R: np.ndarray, X: np.ndarray, names: Sequence[str]) -> None:
    # without pivoting, |R[j, j]| is the norm of column j after projecting
    # out columns 0..j-1, so a tiny ratio names the collinear column
    for j in range(X.shape[1]):
        norm = float(np.linalg.norm(X[:, j]))
        if norm == 0.0 or abs(R[j, j]) <= RANK_TOL * norm:
            others = ", ".join(names[:j]) or "nothing"
            raise RankDeficient(f"predictor {names[j]!r} is a linear combination of {others}")


def _lstsq(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> _LstsqFit:
    Q, R = np.linalg.qr(X, mode="reduced")
    _check_rank(R, X, names)
    beta = solve_triangular(R, Q.T @ y) if X.shape[1] else np.empty(0)
    return _LstsqFit(beta, y - X @ beta, R)


def _unscaled_cov(R: np.ndarray) -> np.ndarray:
    Rinv = np.linalg.inv(R)
    return Rinv @ Rinv.T


def ols(y, X: Sequence, intercept: bool = True) -> StatReport:
    """Ordinary least squares with t tests, R^2 and the overall F test."""
    y = column(y, "y")
    X = [column(c, f"x{i + 1}") for i, c in enumerate(X)]
    mask, dropped = complete_cases(y, *X)
    design, names = design_matrix(X, mask, intercept)
    yv = y.values[mask]
    n, p = design.shape
    if p == 0:
        raise Underdetermined("model has no terms")
    if n <= p:
        raise Underdetermined(f"{n} complete rows for {p} terms")
    fit = _lstsq(design, yv, names)
    df_resid = n - p
    rss = float(fit.residuals @ fit.residuals)
    sigma2 = rss / df_resid
    cov = _unscaled_cov(fit.r) * sigma2
    coefs = {}
    for j, name in enumerate(names):
        est = float(fit.beta[j])
        se = math.sqrt(max(float(cov[j, j]), 0.0))
        if se == 0.0:
            t = 0.0 if est == 0.0 else math.copysign(math.inf, est)
        else:
            t = est / se
        coefs[name] = Coefficient(est, se, t, _p_from_t(t, df_resid))

    tss = float(((yv - yv.mean()) ** 2).sum()) if intercept else float(yv @ yv)
    r2 = 1.0 - rss / tss if tss > 0 else math.nan
    base = 1 if intercept else 0
    adj = 1.0 - (1.0 - r2) * (n - base) / df_resid if tss > 0 else math.nan
    df_model = p - base
    f_stat = None
    if df_model > 0 and tss > 0:
        if rss == 0.0:
            f_stat = {"value": math.inf, "df_model": df_model, "df_resid": df_resid, "p": 0.0}
        else:
            f_value = ((tss - rss) / df_model) / sigma2
            f_stat = {"value": f_value, "df_model": df_model, "df_resid": df_resid,
                      "p": float(min(1.0, sps.f.sf(f_value, df_model, df_resid)))}
    return StatReport(
        model_kind="ols", coefficients=coefs, n_used=n, n_dropped=dropped,
        residuals=fit.residuals.tolist(), r_squared=r2, adj_r_squared=adj,
        f_statistic=f_stat, df_resid=df_resid,
    )


def partial_correlation(x, y, controls: Sequence = ()) -> CorrelationResult:
    """Pearson correlation of the residuals of x and y regressed on controls."""
    x, y = column(x, "x"), column(y, "y")
    controls = [column(c, f"z{i + 1}") for i, c in enumerate(controls)]
    if not controls:
        return pearson(x, y)
    mask, dropped = complete_cases(x, y, *controls)
    design, names = design_matrix(controls, mask, intercept=True)
    n = int(mask.sum())
    k = len(controls)
    if n - 2 - k < 1:
        raise DegenerateInput(f"partial correlation needs > {k + 2} complete rows, got {n}")
    rx = _lstsq(design, x.values[mask], names).residuals
    ry = _lstsq(design, y.values[mask], names).residuals
    r = _r_of(rx, ry, x.name, y.name)
    df = n - 2 - k
    return CorrelationResult(r, _p_from_t(_t_from_r(r, df), df), n, df, dropped)


def vif(X: Sequence) -> dict[str, float]:
    """Variance inflation factor per predictor: 1 / (1 - R^2_j)."""
    X = [column(c, f"x{i + 1}") for i, c in enumerate(X)]
    if len(X) < 2:
        raise DegenerateInput("vif needs at least two predictors")
    out = {}
    for j, target in enumerate(X):
        others = X[:j] + X[j + 1:]
        fit = ols(target, others)
        r2 = fit.r_squared
        if r2 is None or math.isnan(r2):
            raise RankDeficient(f"predictor {target.name!r} is constant")
        if r2 >= 1.0 - 1e-12:
            raise RankDeficient(f"predictor {target.name!r} is perfectly explained by the others")
        out[target.name] = 1.0 / (1.0 - r2)
    return out


# --------------------------------------------------------------------------
# Poisson

def group_dummies(group: DataColumn | Sequence, mask: np.ndarray | None = None) -> list[DataColumn]:
    """Treatment-coded indicators; the first level (sorted) is the baseline."""
    labels = list(group.values if isinstance(group, DataColumn) else group)
    if mask is not None:
        labels = [lab for lab, keep in zip(labels, mask) if keep]
    levels = sorted(set(labels))
    return [DataColumn(f"group[{lvl}]", [1.0 if lab == lvl else 0.0 for lab in labels]) for lvl in levels[1:]]


def _poisson_deviance_terms(y: np.ndarray, mu: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ylog = np.where(y > 0, y * np.log(y / mu), 0.0)
    return 2.0 * (ylog - (y - mu))


def poisson_fit(y, X: Sequence = (), group: Sequence | None = None, intercept: bool = True,
                tol: float = 1e-8, max_iter: int = 100) -> StatReport:
    """Log-link Poisson regression by iteratively reweighted least squares.

    ``group`` adds one fixed intercept per level beyond the first.  The fit
    stops when the largest absolute coefficient change drops below ``tol``.
    """
    y = column(y, "y")
    X = [column(c, f"x{i + 1}") for i, c in enumerate(X)]
    mask, dropped = complete_cases(y, *X)
    if group is not None:
        labels = list(group)
        if len(labels) != len(y):
            raise ValueError("group must align with y")
        mask &= np.array([lab is not None and lab == lab for lab in labels])
        dropped = int(len(y) - mask.sum())
    yv = y.values[mask]
    if np.any(yv < 0) or np.any(yv != np.floor(yv)):
        raise NonCount(f"response {y.name!r} must hold non-negative integers")
    log = []
    if group is not None:
        terms = [DataColumn(c.name, c.values[mask]) for c in X] + group_dummies(labels, mask)
        design, names = design_matrix(terms, np.ones(int(mask.sum()), dtype=bool), intercept)
        log.append("random intercept replaced by fixed per-group intercepts (treatment coding)")
    else:
        design, names = design_matrix(X, mask, intercept)
    n, p = design.shape
    if n <= p:
        raise Underdetermined(f"{n} complete rows for {p} terms")
    _check_rank(np.linalg.qr(design, mode="r"), design, names)

    mu = yv + 0.5
    eta = np.log(mu)
    beta = np.zeros(p)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        z = eta + (yv - mu) / mu
        w = np.sqrt(mu)
        fit = _lstsq(design * w[:, None], z * w, names)
        new_beta = fit.beta
        step = float(np.max(np.abs(new_beta - beta))) if iterations > 1 else math.inf
        beta = new_beta
        eta = design @ beta
        mu = np.exp(eta)
        if step < tol:
            converged = True
            break

    # covariance from the weighted system at the final fitted means
    R = np.linalg.qr(design * np.sqrt(mu)[:, None], mode="r")
    cov = _unscaled_cov(R)
    coefs = {}
    for j, name in enumerate(names):
        est = float(beta[j])
        se = math.sqrt(max(float(cov[j, j]), 0.0))
        zval = est / se if se > 0 else math.copysign(math.inf, est) if est else 0.0
        pval = 0.0 if math.isinf(zval) else float(min(1.0, 2.0 * sps.norm.sf(abs(zval))))
        coefs[name] = Coefficient(est, se, zval, pval)
    unit_dev = _poisson_deviance_terms(yv, mu)
    resid = np.sign(yv - mu) * np.sqrt(np.maximum(unit_dev, 0.0))
    report = StatReport(
        model_kind="poisson", coefficients=coefs, n_used=n, n_dropped=dropped,
        residuals=resid.tolist(), deviance=float(unit_dev.sum()), df_resid=n - p,
        converged=converged, iterations=iterations, transform_log=log,
    )
    if not converged:
        raise NotConverged(f"IRLS did not converge in {max_iter} iterations", report)
    return report


def poisson_fitted_means(report: StatReport, design: np.ndarray) -> np.ndarray:
    beta = np.array([c.estimate for c in report.coefficients.values()])
    return np.exp(design @ beta)


# --------------------------------------------------------------------------
# transforms

def zscore(values) -> DataColumn:
    """(x - mean) / sd with the n-1 standard deviation; missing stays missing."""
    col = column(values)
    present = np.isfinite(col.values)
    v = col.values[present]
    if v.size < 2:
        raise DegenerateInput(f"zscore of {col.name!r} needs >= 2 values")
    sd = float(np.std(v, ddof=1))
    if sd == 0.0 or not math.isfinite(sd):
        raise DegenerateInput(f"zscore of {col.name!r}: zero standard deviation")
    out = np.full(len(col), math.nan)
    out[present] = (v - v.mean()) / sd
    return DataColumn(col.name, out)


def log1p_transform(values) -> DataColumn:
    col = column(values)
    present = np.isfinite(col.values)
    if np.any(col.values[present] <= -1):
        raise DomainError(f"log(x + 1) of {col.name!r} needs every value > -1")
    out = np.full(len(col), math.nan)
    out[present] = np.log1p(col.values[present])
    return DataColumn(col.name, out)
