"""Independent reference implementations used only by the tests.

Each oracle takes a different route from the production code: sums
formulas instead of centred dot products, normal equations instead of QR,
pair loops instead of scans, and a difflib line diff instead of git hunks.
"""

from __future__ import annotations

import difflib
import math
from bisect import bisect_left, bisect_right
from collections import Counter
from itertools import combinations

import numpy as np
from scipy import stats as sps

# --------------------------------------------------------------------------
# statistics

def pearson_sums(x, y) -> tuple[float, float]:
    """Raw-sums textbook formula and a t-distribution p value."""
    n = len(x)
    sx = sum(x)
    sy = sum(y)
    sxx = sum(a * a for a in x)
    syy = sum(b * b for b in y)
    sxy = sum(a * b for a, b in zip(x, y))
    r = (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt(df / (1 - r * r))
    return r, 2 * sps.t.sf(abs(t), df)


def ols_normal_equations(y, X, intercept=True) -> dict:
    """Coefficients, standard errors and R^2 from (X'X)^-1 X'y."""
    y = np.asarray(y, dtype=float)
    cols = [np.asarray(c, dtype=float) for c in X]
    if intercept:
        cols.insert(0, np.ones(len(y)))
    A = np.column_stack(cols)
    xtx_inv = np.linalg.inv(A.T @ A)
    beta = xtx_inv @ (A.T @ y)
    resid = y - A @ beta
    n, p = A.shape
    sigma2 = float(resid @ resid) / (n - p)
    se = np.sqrt(np.diag(xtx_inv) * sigma2)
    tss = float(((y - y.mean()) ** 2).sum())
    return {"beta": beta, "se": se, "r2": 1 - float(resid @ resid) / tss, "resid": resid}


def partial_r_recursive(x, y, z) -> float:
    """First-order partial correlation from the three pairwise r values."""
    rxy = np.corrcoef(x, y)[0, 1]
    rxz = np.corrcoef(x, z)[0, 1]
    ryz = np.corrcoef(y, z)[0, 1]
    return (rxy - rxz * ryz) / math.sqrt((1 - rxz ** 2) * (1 - ryz ** 2))


def partial_r_precision(x, y, controls) -> float:
    """-P_xy / sqrt(P_xx P_yy) from the inverse correlation matrix of (x, y, controls)."""
    data = np.column_stack([x, y, *controls])
    P = np.linalg.inv(np.corrcoef(data, rowvar=False))
    return -P[0, 1] / math.sqrt(P[0, 0] * P[1, 1])


def vif_inverse_corr(X) -> list[float]:
    """Diagonal of the inverse correlation matrix of the predictors."""
    R = np.corrcoef(np.column_stack([np.asarray(c, dtype=float) for c in X]), rowvar=False)
    return list(np.diag(np.linalg.inv(R)))


def zscore_loop(values) -> list[float]:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    sd = math.sqrt(var)
    return [(v - mean) / sd for v in values]


def log1p_loop(values) -> list[float]:
    return [math.log(1.0 + v) for v in values]


# --------------------------------------------------------------------------
# cleaning

def quantile_type7(values, q: float) -> float:
    """h = (n - 1) q; interpolate between the floor and ceiling order statistics."""
    s = sorted(values)
    h = (len(s) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def tukey_keep(table: list[dict], columns, k: float = 1.5) -> list[int]:
    """Indices of rows inside every column's fences, computed by brute force."""
    keep = []
    fences = {}
    for c in columns:
        vals = [row[c] for row in table]
        q1 = quantile_type7(vals, 0.25)
        q3 = quantile_type7(vals, 0.75)
        fences[c] = (q1 - k * (q3 - q1), q3 + k * (q3 - q1))
    for i, row in enumerate(table):
        if all(fences[c][0] <= row[c] <= fences[c][1] for c in columns):
            keep.append(i)
    return keep


def closure_groups(identities, norm_name, norm_email) -> set[frozenset]:
    """Connected components by repeated pairwise merging until nothing changes."""
    groups = [{ident} for ident in identities]

    def linked(a, b):
        return ((norm_email(a[1]) and norm_email(a[1]) == norm_email(b[1]))
                or (norm_name(a[0]) and norm_name(a[0]) == norm_name(b[0])))

    changed = True
    while changed:
        changed = False
        for i, j in combinations(range(len(groups)), 2):
            if any(linked(a, b) for a in groups[i] for b in groups[j]):
                groups[i] |= groups[j]
                del groups[j]
                changed = True
                break
    return {frozenset(g) for g in groups}


# --------------------------------------------------------------------------
# communication

def cif_brute_force(touches, window_hours=24.0) -> list[tuple]:
    """touches: (timestamp_hours, commit_id, author, path).

    For every pair of commits on a file, emit an event iff nothing on that
    file sits strictly between them in (time, id) order, the authors differ
    and the gap is within the window.
    """
    events = []
    by_path: dict[str, list] = {}
    for t in touches:
        by_path.setdefault(t[3], []).append(t)
    for path, items in by_path.items():
        keys = sorted((c[0], c[1]) for c in items)
        for a in items:
            for b in items:
                key_a = (a[0], a[1])
                key_b = (b[0], b[1])
                if not key_a < key_b:
                    continue
                # count of keys strictly inside (key_a, key_b)
                between = bisect_left(keys, key_b) - bisect_right(keys, key_a) > 0
                if between or a[2] == b[2] or b[0] - a[0] > window_hours:
                    continue
                lo, hi = sorted((a[2], b[2]))
                events.append((path, lo, hi, a[1], b[1], b[0] - a[0]))
    return sorted(events)


def pairs_brute_force(pairs) -> list[tuple]:
    counts = Counter(tuple(sorted(p)) for p in pairs)
    groups = {}
    for pair, n in counts.items():
        groups.setdefault(n, []).append(pair)
    out = []
    for n in sorted(groups, reverse=True):
        out.extend((pair, n) for pair in sorted(groups[n]))
    return out


class ProvenanceReplay:
    """Tracks who wrote each line of each file by diffing full file texts.

    Every line is tagged with a unique token so difflib's matching is
    unambiguous and the surviving tags name their author directly.
    """

    def __init__(self):
        self.files: dict[str, list[tuple[str, str]]] = {}  # path -> [(text, owner)]

    def apply(self, path: str, new_lines: list[str] | None, owner: str) -> None:
        old = self.files.get(path, [])
        if new_lines is None:
            self.files.pop(path, None)
            return
        matcher = difflib.SequenceMatcher(a=[t for t, _ in old], b=new_lines, autojunk=False)
        out = []
        for tag, i1, i2, j1, j2 in matcher.get_opcodes():
            if tag == "equal":
                out.extend(old[i1:i2])
            elif tag in ("replace", "insert"):
                out.extend((line, owner) for line in new_lines[j1:j2])
        if out:
            self.files[path] = out
        else:
            self.files.pop(path, None)

    def shares(self) -> dict[str, dict[str, float]]:
        result = {}
        for path, lines in self.files.items():
            counts = Counter(o for _, o in lines)
            total = sum(counts.values())
            result[path] = {a: n / total for a, n in counts.items()}
        return result
