import json
import shutil

import pytest
import yaml
from helpers import commit, history

from spacex.cli import main
from spacex.config import config_from_dict, load_config
from spacex.errors import ConfigError, InputError, MissingArtifact, SchemaViolation
from spacex.ingest import dump_history
from spacex.pipeline import MANIFEST, cmd_analyze, cmd_mine
from spacex.report import cmd_report, verify_bundle
from spacex.serialize import read_csv, sha256_file

EXPECTED = {
    "config.yaml", "cleaning/cleaning_report.json", "cps/cps.csv", "cps/cps_meta.json",
    "datasets/identities.csv", "datasets/authors.csv", "datasets/efficiency.csv", "datasets/repos.csv",
    "datasets/files.csv", "datasets/author_extras.csv", "datasets/project_totals.csv", "datasets/author_metadata.json",
    "communication/pairs.csv", "communication/summary.json",
    *(f"communication/{p}.{k}.csv" for p in ("alpha", "beta", "gamma") for k in ("events", "ownership", "histogram")),
    "stats/satisfaction_poisson.json", "stats/satisfaction_poisson.residuals.csv",
    "stats/performance_churn_on_commits.json", "stats/efficiency_correlations.json",
}


def manifest(bundle):
    return json.loads((bundle / MANIFEST).read_text())


# --- bundle contract --------------------------------------------------------

def test_manifest_lists_every_file_with_hash(bundle):
    m = manifest(bundle)
    listed = {f["path"]: f for f in m["files"]}
    on_disk = {p.relative_to(bundle).as_posix() for p in bundle.rglob("*") if p.is_file()}
    on_disk = {p for p in on_disk if not p.startswith("report/") and p != MANIFEST}
    assert on_disk == set(listed)
    assert EXPECTED <= set(listed)
    for path, entry in listed.items():
        assert sha256_file(bundle / path) == entry["sha256"]
        assert (bundle / path).stat().st_size == entry["bytes"]
    assert not bundle.with_name(bundle.name + ".partial").exists()


def test_provenance_has_config_hash_and_no_wall_clock(bundle, corpus_config):
    prov = manifest(bundle)["provenance"]
    assert prov["config_sha256"] == load_config(corpus_config).sha256
    assert "data_as_of" in prov
    assert not any("generated" in k or "now" in k for k in prov)


def test_stat_reports_name_their_dataset_hash(bundle):
    hashes = {f["path"]: f["sha256"] for f in manifest(bundle)["files"]}
    for path in sorted(bundle.glob("stats/*.json")):
        report = json.loads(path.read_text())
        assert report["dataset_sha256"] == hashes[f"datasets/{report['dataset']}.csv"], path.name
        if report["dataset"] in ("authors", "efficiency"):
            assert report["extras_sha256"] == hashes["datasets/author_extras.csv"]
        assert report["status"] in ("ok", "error")


def test_residual_csvs_match_reports(bundle):
    report = json.loads((bundle / "stats/performance_churn_on_commits.json").read_text())
    rows = read_csv(bundle / "stats/performance_churn_on_commits.residuals.csv")
    assert [float(r["residual"]) for r in rows] == pytest.approx(report["result"]["residuals"], abs=1e-9)


def test_dataset_headers_are_exact(bundle):
    authors = (bundle / "datasets/authors.csv").read_text().splitlines()[0]
    assert authors == ("project,author,total_commits,code_churn,bug_fix_commits,avg_complexity,negative_commit_pct,"
                       "total_issues,total_prs,project_age_years,mean_commit_gap_hours,avg_daily_commits,"
                       "avg_daily_churn,total_code_reviews,total_deployments")
    assert (bundle / "datasets/repos.csv").read_text().splitlines()[0] == \
        "project,ci_cd_success_rate,avg_pr_merge_time_hours,total_commits"
    assert (bundle / "cps/cps.csv").read_text().splitlines()[0] == \
        "project,author,z_satisfaction,z_performance,z_activity,z_communication,z_efficiency,cps,weights_used"
    assert (bundle / "communication/alpha.events.csv").read_text().splitlines()[0] == \
        "path,author_a,author_b,earlier_commit,later_commit,gap_hours"


def test_cleaning_report_counts(bundle):
    report = json.loads((bundle / "cleaning/cleaning_report.json").read_text())
    totals = report["totals"]
    assert totals["bots_removed"] == 1
    assert totals["merged_alias_groups"] >= 3
    assert all(v >= 0 for v in totals.values() if isinstance(v, int))


def test_communication_totals_are_consistent(bundle):
    summary = json.loads((bundle / "communication/summary.json").read_text())
    files = read_csv(bundle / "datasets/files.csv")
    events = sum(len(read_csv(bundle / f"communication/{p}.events.csv")) for p in ("alpha", "beta", "gamma"))
    assert sum(int(f["cif"]) for f in files) == events == summary["overall"]["n_events"]


# --- config validation -------------------------------------------------------

def test_unknown_column_fails_before_any_work(corpus_config, tmp_path):
    raw = yaml.safe_load(corpus_config.read_text())
    raw["analyses"] = [{"name": "bad", "kind": "ols", "response": "code_churn", "predictors": ["happiness"]}]
    with pytest.raises(ConfigError, match="happiness"):
        config_from_dict(raw, base_dir=corpus_config.parent, out_dir=tmp_path / "out")
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("patch,match", [
    ({"analyses": [{"name": "x", "kind": "anova", "response": "code_churn"}]}, "kind"),
    ({"analyses": [{"name": "x", "dataset": "commits", "kind": "ols", "response": "code_churn"}]}, "dataset"),
    ({"cleaning": {"min_commits": -1}}, "min_commits"),
    ({"cps": {"weights": {"speed": 1}}}, "speed"),
    ({"surprise": 1}, "surprise"),
    ({"sentiment": {"mode": "external"}}, "external_cmd"),
])
def test_config_errors(corpus_config, patch, match):
    raw = {**yaml.safe_load(corpus_config.read_text()), **patch}
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw, base_dir=corpus_config.parent)


def test_missing_configured_path_is_input_error(corpus_config):
    raw = yaml.safe_load(corpus_config.read_text())
    raw["snapshot_paths"] = ["snapshots/nowhere.json"]
    with pytest.raises(InputError):
        config_from_dict(raw, base_dir=corpus_config.parent)


# --- failure handling ---------------------------------------------------------

def small_project(tmp_path, touch_same_file=True, vary=True):
    cs = []
    for k in range(25):
        cs.append(commit(f"a{k:03d}", "ana", 3 * k, ["shared.txt" if touch_same_file else "a.txt"]))
        cs.append(commit(f"b{k:03d}", "bo", 3 * k + 1, ["shared.txt" if touch_same_file else "b.txt"],
                         message="fix broken build" if vary and k % 4 == 0 else "update"))
    path = tmp_path / "small.history.json"
    dump_history(history(cs, project="small"), path)
    return path


def test_failing_stage_is_named_and_leaves_no_bundle(tmp_path):
    hist = small_project(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"project_name": "small", "ci_runs": [{"run_id": "1"}]}))
    config = config_from_dict({"repo_paths": [str(hist)], "snapshot_paths": [str(bad)], "analyses": []})
    with pytest.raises(SchemaViolation) as err:
        cmd_analyze(config, out_dir=tmp_path / "out")
    assert err.value.stage == "load"
    assert "stage 'load' failed" in str(err.value)
    assert not (tmp_path / "out").exists() and not (tmp_path / "out.partial").exists()


def test_refuses_to_overwrite_foreign_directory(tmp_path):
    hist = small_project(tmp_path)
    out = tmp_path / "out"
    out.mkdir()
    (out / "precious.txt").write_text("keep me")
    config = config_from_dict({"repo_paths": [str(hist)], "analyses": []})
    with pytest.raises(InputError, match="refusing"):
        cmd_analyze(config, out_dir=out)
    assert (out / "precious.txt").exists()


def test_rerun_replaces_previous_bundle(tmp_path):
    hist = small_project(tmp_path)
    config = config_from_dict({"repo_paths": [str(hist)], "analyses": []})
    first = cmd_analyze(config, out_dir=tmp_path / "out").read_bytes()
    second = cmd_analyze(config, out_dir=tmp_path / "out").read_bytes()
    assert first == second


def test_report_without_events(tmp_path):
    hist = small_project(tmp_path, touch_same_file=False)
    config = config_from_dict({"repo_paths": [str(hist)], "analyses": []})
    out = tmp_path / "out"
    cmd_analyze(config, out_dir=out)
    text = cmd_report(out).read_text()
    assert "no communication events were found" in text.lower()


def test_degenerate_population_still_completes(tmp_path):
    # two mirror-image authors: every dimension is constant
    hist = small_project(tmp_path, touch_same_file=False, vary=False)
    config = config_from_dict({"repo_paths": [str(hist)], "analyses": []})
    out = tmp_path / "out"
    cmd_analyze(config, out_dir=out)
    meta = json.loads((out / "cps/cps_meta.json").read_text())
    rows = read_csv(out / "cps/cps.csv")
    assert len(meta["dropped_dimensions"]) == 5
    assert len(rows) == 2 and all(r["cps"] == "" for r in rows)


def test_until_clean_writes_cleaning_only(tmp_path):
    hist = small_project(tmp_path)
    config = config_from_dict({"repo_paths": [str(hist)], "analyses": []})
    m = json.loads(cmd_analyze(config, out_dir=tmp_path / "out", until="clean").read_text())
    assert m["stage"] == "clean"
    assert {f["path"] for f in m["files"]} == {"config.yaml", "datasets/identities.csv",
                                               "cleaning/cleaning_report.json"}


# --- report ---------------------------------------------------------------

def test_report_sections(bundle):
    text = (bundle / "report" / "report.md").read_text()
    for heading in ("Cleaning", "Communication", "Composite productivity score", "efficiency_correlations"):
        assert heading in text
    assert "—" not in text


def test_report_correlation_plot_is_symmetric(bundle):
    rows = read_csv(bundle / "report/plots/correlation_efficiency_correlations.csv")
    cell = {(r["row"], r["column"]): float(r["r"]) for r in rows}
    for (a, b), r in cell.items():
        assert cell[(b, a)] == r
        if a == b:
            assert r == 1.0


def test_verify_bundle_reports_diff(bundle, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(bundle, copy)
    (copy / "cps/cps.csv").write_text("tampered\n")
    (copy / "datasets/repos.csv").unlink()
    (copy / "stray.txt").write_text("x")
    with pytest.raises(MissingArtifact) as err:
        verify_bundle(copy)
    assert err.value.changed == ["cps/cps.csv"]
    assert err.value.missing == ["datasets/repos.csv"]
    assert err.value.unlisted == ["stray.txt"]


# --- CLI ------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, corpus_config, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["mine", str(empty), "--out", str(tmp_path / "m")]) == 2
    assert "not a git repository" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "nothing")]) == 2
    raw = yaml.safe_load(corpus_config.read_text())
    raw["analyses"] = [{"name": "bad", "kind": "ols", "response": "nope"}]
    bad = corpus_config.parent / "bad.yaml"
    bad.write_text(yaml.safe_dump(raw))
    assert main(["analyze", "--config", str(bad), "--out", str(tmp_path / "b")]) == 1
    assert main(["forge-validate", str(corpus_config.parent / "snapshots" / "alpha.json")]) == 0


def test_cli_mine_writes_per_repo_and_combined(tmp_path, corpus_config):
    repos = corpus_config.parent / "repos"
    out = tmp_path / "mined"
    assert main(["mine", str(repos / "alpha"), str(repos / "beta"), "--out", str(out)]) == 0
    combined = read_csv(out / "commits.csv")
    alpha = read_csv(out / "alpha.commits.csv")
    beta = read_csv(out / "beta.commits.csv")
    assert len(combined) == len(alpha) + len(beta) > 0


def test_cli_mine_keep_going(tmp_path, corpus_config):
    empty = tmp_path / "empty"
    empty.mkdir()
    manifest_path, errors = cmd_mine([corpus_config.parent / "repos" / "gamma", empty], tmp_path / "m",
                                     keep_going=True)
    assert len(errors) == 1 and manifest_path.exists()


def test_cli_select(corpus_config, capsys):
    assert main(["select", "--config", str(corpus_config)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert {r["project"] for r in rows} == {"alpha", "beta", "gamma"}
