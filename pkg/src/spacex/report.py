"""Markdown report and plot-ready CSVs rendered from a bundle directory.

The report only reads files the manifest lists and checks their hashes
first, so a report can always be traced back to one bundle state.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats as sps

from .communication import HISTOGRAM_HEADER
from .cps import DIMENSIONS
from .errors import MissingArtifact
from .pipeline import MANIFEST
from .serialize import csv_text, read_csv, sha256_file

REPORT_DIR = "report"
DESCRIPTIVE_COLUMNS = [
    "total_commits", "code_churn", "bug_fix_commits", "avg_complexity", "negative_commit_pct",
    "total_issues", "total_prs", "project_age_years", "mean_commit_gap_hours", "avg_daily_commits",
    "avg_daily_churn", "total_code_reviews", "total_deployments",
]


# --------------------------------------------------------------------------
# manifest checks

def verify_bundle(bundle: Path) -> dict:
    """Load the manifest and compare it with the directory; raises MissingArtifact on any drift."""
    path = bundle / MANIFEST
    if not path.is_file():
        raise MissingArtifact(f"{bundle} has no {MANIFEST}", missing=[MANIFEST])
    manifest = json.loads(path.read_text(encoding="utf-8"))
    listed = {f["path"]: f["sha256"] for f in manifest["files"]}
    missing = sorted(p for p in listed if not (bundle / p).is_file())
    changed = sorted(p for p, digest in listed.items() if p not in missing and sha256_file(bundle / p) != digest)
    present = {
        f.relative_to(bundle).as_posix() for f in bundle.rglob("*")
        if f.is_file() and f.name != MANIFEST and f.relative_to(bundle).parts[0] != REPORT_DIR
    }
    unlisted = sorted(present - set(listed))
    if missing or changed or unlisted:
        lines = [f"bundle {bundle} does not match its manifest:"]
        lines += [f"  missing: {p}" for p in missing]
        lines += [f"  changed: {p}" for p in changed]
        lines += [f"  unlisted: {p}" for p in unlisted]
        raise MissingArtifact("\n".join(lines), missing, changed, unlisted)
    return manifest


# --------------------------------------------------------------------------
# formatting

def num(value: Any, digits: int = 4) -> str:
    if value is None or value == "":
        return "n/a"
    value = float(value)
    if math.isnan(value):
        return "n/a"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}g}"


def pval(value: Any) -> str:
    if value is None or value == "":
        return "n/a"
    value = float(value)
    return "< 1e-16" if value < 1e-16 else f"{value:.3g}"


def table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> list[str]:
    def cell(v):
        return str(v).replace("|", "\\|")

    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(cell(v) for v in row) + " |" for row in rows]
    return out + [""]


def _float(v: str) -> float | None:
    return float(v) if v not in ("", None) else None


# --------------------------------------------------------------------------
# sections

class _Report:
    def __init__(self, bundle: Path, manifest: dict):
        self.bundle = bundle
        self.manifest = manifest
        self.listed = {f["path"] for f in manifest["files"]}
        self.lines: list[str] = []
        self.plots: dict[str, str] = {}
        self.names: dict[str, str] = {}
        if "datasets/identities.csv" in self.listed:
            self.names = {r["canonical_id"]: r["display_name"] for r in self.csv("datasets/identities.csv")}

    def has(self, rel: str) -> bool:
        return rel in self.listed

    def csv(self, rel: str) -> list[dict[str, str]]:
        return read_csv(self.bundle / rel)

    def json(self, rel: str) -> Any:
        return json.loads((self.bundle / rel).read_text(encoding="utf-8"))

    def add(self, *lines: str) -> None:
        self.lines.extend(lines)

    def display(self, cid: str) -> str:
        return self.names.get(cid, cid)

    # ----------------------------------------------------------------
    def provenance(self) -> None:
        prov = self.manifest["provenance"]
        self.add("# Developer productivity report", "")
        self.add("## Provenance", "")
        rows = [
            ("tool", f"{prov.get('tool')} {prov.get('version')}"),
            ("bundle stage", self.manifest.get("stage")),
            ("config sha256", f"`{prov.get('config_sha256')}`"),
            ("data as of (latest commit)", prov.get("data_as_of")),
            ("sentiment model", prov.get("sentiment_model") or "n/a"),
        ]
        self.add(*table(["item", "value"], rows))
        inputs = prov.get("inputs", [])
        if inputs:
            self.add(*table(
                ["input", "kind", "sha256", "commits", "first commit", "last commit"],
                [(i.get("project") or i.get("path"), i["kind"], f"`{i['sha256'][:16]}`", i.get("commits", ""),
                  i.get("first_commit", ""), i.get("last_commit", "")) for i in inputs]))

    def cleaning(self) -> None:
        if not self.has("cleaning/cleaning_report.json"):
            return
        rep = self.json("cleaning/cleaning_report.json")
        self.add("## Cleaning summary", "")
        rows = [(k.replace("_", " "), v) for k, v in rep["counts"].items()]
        rows += [(k.replace("_", " "), v) for k, v in rep["totals"].items()]
        self.add(*table(["step", "count"], rows))
        params = self.manifest["provenance"].get("parameters", {})
        if params:
            self.add(
                f"- Low-activity filter: rows with total_commits >= {params.get('min_commits')} are kept.",
                f"- IQR filter on {', '.join(params.get('iqr_columns', []))} with multiplier "
                f"{params.get('iqr_multiplier')}; fences from {params.get('quantile_convention')}.",
                "- Winsorized columns: " + (", ".join(
                    f"{w['dataset']}.{w['column']} at [{w['lower']}, {w['upper']}]" for w in params.get("winsorize", []))
                    or "none") + ".",
                "",
            )

    def descriptives(self) -> None:
        if not self.has("datasets/authors.csv"):
            return
        rows = self.csv("datasets/authors.csv")
        self.add("## Metric descriptives", "", f"Author rows after cleaning: {len(rows)}.", "")
        out = []
        for col in DESCRIPTIVE_COLUMNS:
            values = np.array([float(r[col]) for r in rows if r.get(col) not in ("", None)])
            if values.size == 0:
                out.append((col, 0, "n/a", "n/a", "n/a", "n/a", "n/a"))
                continue
            sd = float(np.std(values, ddof=1)) if values.size > 1 else None
            out.append((col, values.size, num(values.mean()), num(sd), num(values.min()),
                        num(float(np.median(values))), num(values.max())))
        self.add(*table(["metric", "n", "mean", "sd", "min", "median", "max"], out))
        if self.has("datasets/repos.csv"):
            repos = self.csv("datasets/repos.csv")
            self.add("Repository-level metrics:", "")
            self.add(*table(["project", "CI/CD success rate", "avg PR merge time (h)", "total commits"],
                            [(r["project"], num(r["ci_cd_success_rate"]), num(r["avg_pr_merge_time_hours"]),
                              r["total_commits"]) for r in repos]))

    def communication(self) -> None:
        if not self.has("communication/summary.json"):
            return
        summary = self.json("communication/summary.json")
        overall = summary["overall"]
        self.add("## Communication and collaboration", "")
        self.add(f"Events count consecutive same-file commits by different contributors at most "
                 f"{num(overall['window_hours'])} h apart (boundary inclusive"
                 + ("; back-and-forth exchanges only" if overall.get("strict_alternation") else "") + ").", "")

        files = self.csv("datasets/files.csv") if self.has("datasets/files.csv") else []
        shares = np.array([float(f["top_share_pct"]) for f in files if f["top_share_pct"]])
        self.add("### Contributor experience", "")
        if shares.size:
            self.add(*table(["files", "mean top share %", "median", "min", "max"],
                            [(shares.size, num(shares.mean()), num(float(np.median(shares))),
                              num(shares.min()), num(shares.max()))]))
        else:
            self.add("No file has attributable surviving lines.", "")
        self.plots["top_share_distribution.csv"] = csv_text(
            ["project", "path", "top_share_pct"],
            ([f["project"], f["path"], f["top_share_pct"]] for f in files if f["top_share_pct"]))

        self.add("### Commit interaction frequency", "")
        per_project = [(p, s["n_events"], num(s["mean_gap_hours"]), s["files_with_events"], s["files_touched"])
                       for p, s in sorted(summary["projects"].items())]
        self.add(*table(["project", "events", "mean gap (h)", "files with events", "files touched"], per_project))
        if overall["n_events"] == 0:
            self.add("No communication events were found in any project, so the pair table and the "
                     "time-difference histogram are empty.", "")
            self.plots["pairs_top10.csv"] = csv_text(["rank", "project", "author_a", "author_b", "events"], [])
            self.plots["time_diff_histogram.csv"] = csv_text(
                HISTOGRAM_HEADER, [(k, 0) for k in range(math.ceil(overall["window_hours"]))])
            return
        self.add(f"Total events: {overall['n_events']}; mean time difference: {num(overall['mean_gap_hours'])} h.", "")

        pairs = self.csv("communication/pairs.csv")
        pairs.sort(key=lambda r: (-int(r["events"]), r["project"], r["author_a"], r["author_b"]))
        top = pairs[:10]
        self.add("### Top 10 communication pairs by event count", "")
        self.add(*table(["rank", "project", "contributor A", "contributor B", "events"],
                        [(i + 1, r["project"], r["display_a"], r["display_b"], r["events"]) for i, r in enumerate(top)]))
        self.plots["pairs_top10.csv"] = csv_text(
            ["rank", "project", "author_a", "author_b", "events"],
            ([i + 1, r["project"], r["display_a"], r["display_b"], r["events"]] for i, r in enumerate(top)))

        buckets: dict[int, int] = {}
        for rel in sorted(p for p in self.listed if p.startswith("communication/") and p.endswith(".histogram.csv")):
            for r in self.csv(rel):
                k = int(float(r["bucket_start_hour"]))
                buckets[k] = buckets.get(k, 0) + int(r["count"])
        hist = sorted(buckets.items())
        self.add("### Time difference between paired commits", "")
        self.add(*table(["hours", "events"], [(f"[{k}, {k + 1})" if k < len(hist) - 1 else f"[{k}, {k + 1}]", n)
                                              for k, n in hist]))
        self.plots["time_diff_histogram.csv"] = csv_text(HISTOGRAM_HEADER, hist)

    def models(self) -> None:
        stats = [p for p in self.listed if p.startswith("stats/") and p.endswith(".json")]
        if not stats:
            return
        payloads = sorted((self.json(p) for p in stats), key=lambda d: (d.get("order", 0), d["analysis"]))
        self.add("## Models", "")
        for d in payloads:
            self.model(d)

    def model(self, d: dict) -> None:
        spec = d["spec"]
        self.add(f"### {d['analysis']}", "")
        what = spec["kind"]
        if spec.get("response"):
            what += f": {spec['response']} ~ " + " + ".join(spec["predictors"])
        if spec.get("controls"):
            what += " | controls: " + ", ".join(spec["controls"])
        if spec.get("group"):
            what += f" + fixed intercept per {spec['group']}"
        if spec.get("columns"):
            what += ": " + ", ".join(spec["columns"])
        self.add(f"- Model: {what}", f"- Dataset: {d['dataset']} (sha256 `{d['dataset_sha256'][:16]}`)")
        if d["status"] != "ok":
            self.add(f"- Not estimated: {d['error']['type']}: {d['error']['message']}", "")
            return
        res = d["result"]
        for line in res.get("transform_log", []):
            self.add(f"- Transform: {line}")
        kind = spec["kind"]
        if kind in ("pearson", "partial_corr"):
            self.add(f"- n used: {res['n_used']} (dropped {res['n_dropped']}), df = {res['df']}", "")
            rows = [("r", num(res["r"]), pval(res["p"]))]
            if kind == "partial_corr":
                rows.insert(0, ("raw r (same rows)", num(res["raw_r"]), pval(res["raw_p"])))
            self.add(*table(["statistic", "value", "p"], rows))
        elif kind == "vif":
            self.add(f"- n used: {res['n_used']}", "")
            self.add(*table(["predictor", "VIF"], [(k, num(v)) for k, v in res["vif"].items()]))
        elif kind == "corr_matrix":
            self.add(f"- n used: {res['n_used']} (dropped {res['n_dropped']})", "")
            self.corr_matrix(d["analysis"], res)
        else:
            self.regression(d["analysis"], kind, res)

    def regression(self, name: str, kind: str, res: dict) -> None:
        stat = "z" if kind == "poisson" else "t"
        self.add(f"- n used: {res['n_used']} (dropped {res['n_dropped']}), residual df = {res['df_resid']}", "")
        self.add(*table(["term", "estimate", "std. error", stat, "p"],
                        [(k, num(c["estimate"]), num(c["std_error"]), num(c["test_statistic"]), pval(c["p_value"]))
                         for k, c in res["coefficients"].items()]))
        if kind == "ols":
            f = res.get("f_statistic")
            fit = f"R^2 = {num(res['r_squared'])}, adjusted R^2 = {num(res['adj_r_squared'])}"
            if f:
                fit += f", F({f['df_model']}, {f['df_resid']}) = {num(f['value'])}, p = {pval(f['p'])}"
            self.add(fit, "")
        else:
            self.add(f"Deviance = {num(res['deviance'])}, IRLS iterations = {res['iterations']}.", "")
        rel = f"stats/{name}.residuals.csv"
        if self.has(rel):
            resid = np.array([float(r["residual"]) for r in self.csv(rel)])
            self.plots[f"qq_{name}.csv"] = csv_text(["theoretical", "sample"], qq_points(resid))

    def corr_matrix(self, name: str, res: dict) -> None:
        cols = res["columns"]
        rows = []
        for i, a in enumerate(cols):
            cells = []
            for j in range(len(cols)):
                cells.append("1" if i == j else f"{num(res['r'][i][j], 3)} / {pval(res['p'][i][j])}")
            rows.append([a, *cells])
        self.add("Cells hold r / p.", "")
        self.add(*table(["", *cols], rows))
        self.plots[f"correlation_{name}.csv"] = csv_text(
            ["row", "column", "r", "p"],
            ([a, b, res["r"][i][j], res["p"][i][j]] for i, a in enumerate(cols) for j, b in enumerate(cols)))

    def cps(self) -> None:
        if not self.has("cps/cps.csv"):
            return
        rows = self.csv("cps/cps.csv")
        meta = self.json("cps/cps_meta.json")
        self.add("## Composite productivity score", "")
        self.add("CPS = sum over dimensions of w_i * Z_i, where Z_i is the dimension score z-scored across "
                 "the cleaned author population and the weights are renormalized over the dimensions "
                 "present for each author.  These scores are this tool's construction; the per-dimension "
                 "scalars are replaceable defaults.", "")
        self.add(*table(["dimension", "raw score", "weight"],
                        [(d, meta["dimension_formulas"][d], num(meta["weights"][d])) for d in DIMENSIONS]))
        if meta["dropped_dimensions"]:
            self.add("Dropped for lack of spread: " + ", ".join(meta["dropped_dimensions"]) + ".", "")
        ranked = sorted((r for r in rows if r["cps"]), key=lambda r: (-float(r["cps"]), r["project"], r["author"]))
        ranked += [r for r in rows if not r["cps"]]
        self.add(*table(["rank", "project", "contributor", *[f"z {d}" for d in DIMENSIONS], "CPS"],
                        [(i + 1 if r["cps"] else "-", r["project"], self.display(r["author"]),
                          *[num(r[f"z_{d}"], 3) for d in DIMENSIONS], num(r["cps"]))
                         for i, r in enumerate(ranked)]))
        self.plots["cps_ranking.csv"] = csv_text(
            ["rank", "project", "author", "cps"],
            ([i + 1, r["project"], self.display(r["author"]), r["cps"]] for i, r in enumerate(ranked) if r["cps"]))

    def notes(self) -> None:
        params = self.manifest["provenance"].get("parameters", {})
        self.add("## Definitions", "")
        self.add(
            "- code churn: lines added plus lines removed.",
            f"- daily rates divide by {params.get('daily_denominator', 'active days')}.",
            f"- project age: last minus first commit, in {params.get('year_length_days', 365.25)}-day years.",
            "- negative commit %: share of an author's commit messages labelled negative by the sentiment model.",
            "- bug-fix commit: message contains one of " + ", ".join(params.get("bug_keywords", [])) + ".",
            "- p-values: two-sided t tests for least squares and correlations, Wald z tests for Poisson.",
            "",
        )


def qq_points(values: np.ndarray) -> list[list[float]]:
    """Normal Q-Q coordinates with (i - 0.5) / n plotting positions."""
    n = values.size
    if n == 0:
        return []
    theoretical = sps.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return [[float(t), float(s)] for t, s in zip(theoretical, np.sort(values))]


def render(bundle: Path) -> tuple[str, dict[str, str]]:
    manifest = verify_bundle(bundle)
    rep = _Report(bundle, manifest)
    rep.provenance()
    rep.cleaning()
    rep.descriptives()
    rep.communication()
    rep.models()
    rep.cps()
    rep.notes()
    text = "\n".join(rep.lines).rstrip("\n") + "\n"
    return text, rep.plots


def cmd_report(bundle_dir: str | Path, out_dir: str | Path | None = None, figures: bool = False) -> Path:
    """Write report.md and plots/*.csv (and figures/*.png when asked) under ``<bundle>/report``."""
    bundle = Path(bundle_dir)
    text, plots = render(bundle)
    out = Path(out_dir) if out_dir else bundle / REPORT_DIR
    (out / "plots").mkdir(parents=True, exist_ok=True)
    for stale in (out / "plots").glob("*.csv"):
        stale.unlink()
    for name, body in sorted(plots.items()):
        (out / "plots" / name).write_text(body, encoding="utf-8")
    if figures:
        from .figures import render_figures

        render_figures(out / "plots", out / "figures")
    target = out / "report.md"
    target.write_text(text, encoding="utf-8")
    return target
