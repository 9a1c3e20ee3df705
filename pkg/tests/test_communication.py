import numpy as np
import pytest
from helpers import GitScript, at, commit, delta, history
from hypothesis import given
from hypothesis import strategies as st
from oracles import cif_brute_force, pairs_brute_force
from scripted import EditScript, replay_oracle

from spacex.communication import (
    CommunicationEvent,
    commit_interaction_frequency,
    contributor_experience,
    pair_summary,
    time_diff_stats,
)
from spacex.errors import EmptyInput
from spacex.ingest import Hunk, IngestOptions, walk_history

# --- contributor experience ------------------------------------------------


def test_three_to_one_share():
    h = history([
        commit("c1", "a", 0, [delta("f", 3, hunks=[Hunk(0, 0, 1, 3)])]),
        commit("c2", "b", 1, [delta("f", 1, hunks=[Hunk(3, 0, 4, 1)])]),
    ])
    [own] = contributor_experience(h)
    assert own.top_contributor == "a@example.org"
    assert own.top_share_pct == 75.0


def test_single_author_file():
    [own] = contributor_experience(history([commit("c1", "a", 0, [delta("f", 5)])]))
    assert own.top_share_pct == 100.0


def test_tie_goes_to_smaller_id():
    h = history([
        commit("c1", "b", 0, [delta("f", 2, hunks=[Hunk(0, 0, 1, 2)])]),
        commit("c2", "a", 1, [delta("f", 2, hunks=[Hunk(2, 0, 3, 2)])]),
    ])
    assert contributor_experience(h)[0].top_contributor == "a@example.org"


def test_deleted_file_is_omitted():
    h = history([
        commit("c1", "a", 0, [delta("f", 2, hunks=[Hunk(0, 0, 1, 2)])]),
        commit("c2", "b", 1, [delta("f", 0, 2, hunks=[Hunk(1, 2, 0, 0)])]),
    ])
    assert contributor_experience(h) == []


@pytest.mark.parametrize("seed", range(200))
def test_shares_equal_patch_replay_oracle(seed):
    rng = np.random.default_rng(seed)
    script = EditScript(rng, n_files=int(rng.integers(1, 5)))
    for k in range(int(rng.integers(1, 40))):
        script.step(f"{k:04d}", k)
    got = {o.path: o.line_share_by_author for o in contributor_experience(script.history())}
    assert got == replay_oracle(script)
    for shares in got.values():
        assert abs(sum(shares.values()) - 1) < 1e-9


def test_shares_from_real_git_match_replay_and_blame(tmp_path):
    rng = np.random.default_rng(77)
    script = EditScript(rng, n_files=3)
    repo = GitScript(tmp_path / "r")
    for k in range(30):
        script.step(f"{k:04d}", k)
        author, changes = script.snapshots[-1]
        files = {p: None if lines is None else "".join(x + "\n" for x in lines) for p, lines in changes.items()}
        files = {p: t for p, t in files.items() if t is not None or (tmp_path / "r" / p).exists()}
        repo.commit(author.split("@")[0], author, at(k), files, message=f"edit {k}")
    h = walk_history(tmp_path / "r", IngestOptions(compute_complexity=False))
    got = {o.path: o.line_share_by_author for o in contributor_experience(h)}
    assert got == replay_oracle(script)
    for path, shares in got.items():
        assert shares == pytest.approx(repo.blame_shares(path), abs=1e-12)


# --- commit interaction frequency ------------------------------------------

def test_cif_examples():
    ev, cif = commit_interaction_frequency(history([commit("1", "a", 0, ["f"]), commit("2", "b", 1, ["f"])]))
    assert len(ev) == 1 and ev[0].gap_hours == 1.0 and cif == {"f": 1}
    ev, _ = commit_interaction_frequency(history([commit("1", "a", 0, ["f"]), commit("2", "a", 1, ["f"])]))
    assert ev == []
    ev, _ = commit_interaction_frequency(history([commit("1", "a", 0, ["f"]), commit("2", "b", 25, ["f"])]))
    assert ev == []


def test_cif_window_is_inclusive():
    ev, _ = commit_interaction_frequency(history([commit("1", "b", 0, ["f"]), commit("2", "a", 24, ["f"])]))
    assert [(e.author_a, e.author_b, e.gap_hours) for e in ev] == [("a@example.org", "b@example.org", 24.0)]


def test_strict_mode_needs_back_and_forth():
    h = history([commit("1", "a", 0, ["f"]), commit("2", "b", 1, ["f"]), commit("3", "c", 2, ["f"])])
    assert len(commit_interaction_frequency(h)[0]) == 2
    assert commit_interaction_frequency(h, strict=True)[0] == []
    h = history([commit("1", "a", 0, ["f"]), commit("2", "b", 1, ["f"]), commit("3", "a", 2, ["f"])])
    assert len(commit_interaction_frequency(h, strict=True)[0]) == 2


@st.composite
def random_histories(draw, max_commits=60):
    n = draw(st.integers(0, max_commits))
    authors = [f"u{k}" for k in range(draw(st.integers(1, 8)))]
    paths = [f"p{k}" for k in range(draw(st.integers(1, 30)))]
    # half-hour grid so exact 24.0 h gaps and timestamp ties are common
    commits = []
    for k in range(n):
        files = draw(st.sets(st.sampled_from(paths), min_size=1, max_size=3))
        commits.append(commit(f"c{k:03d}", draw(st.sampled_from(authors)), draw(st.integers(0, 400)) / 2,
                              sorted(files)))
    return history(commits)


def touches_of(h):
    return [((c.timestamp - at(0)).total_seconds() / 3600, c.commit_id, c.author_email, d.path)
            for c in h.commits for d in c.files]


@given(random_histories())
def test_cif_scan_equals_brute_force(h):
    events, cif = commit_interaction_frequency(h)
    got = sorted((e.path, e.author_a, e.author_b, e.earlier_commit, e.later_commit, e.gap_hours) for e in events)
    assert got == cif_brute_force(touches_of(h))
    assert sum(cif.values()) == len(events)
    assert all(0 <= e.gap_hours <= 24 and e.author_a < e.author_b for e in events)


@given(random_histories(max_commits=30))
def test_cif_ignores_author_labels_order(h):
    # renaming authors by a bijection maps events one-to-one
    rename = {c.author_email: f"z{c.author_email}" for c in h.commits}
    swapped = history([commit(c.commit_id, rename[c.author_email], (c.timestamp - at(0)).total_seconds() / 3600,
                              c.files) for c in h.commits])
    a = commit_interaction_frequency(h)[1]
    b = commit_interaction_frequency(swapped)[1]
    assert a == b


# --- summaries -------------------------------------------------------------

def ev(a, b, gap=1.0, path="f"):
    lo, hi = sorted((a, b))
    return CommunicationEvent(path, lo, hi, "x", "y", gap)


def test_pair_summary_examples():
    assert pair_summary([ev("A", "B"), ev("A", "B"), ev("A", "C")]) == [(("A", "B"), 2), (("A", "C"), 1)]
    assert pair_summary([]) == []


@given(st.lists(st.tuples(st.sampled_from("ABCDEF"), st.sampled_from("ABCDEF")).filter(lambda p: p[0] != p[1]),
                max_size=100))
def test_pair_summary_equals_brute_force(pairs):
    assert pair_summary([ev(a, b) for a, b in pairs]) == pairs_brute_force(pairs)


def test_time_diff_stats_examples():
    stats = time_diff_stats([ev("A", "B", 2), ev("A", "B", 4)])
    assert stats["mean_gap_hours"] == 3.0
    stats = time_diff_stats([ev("A", "B", 24.0)] * 3)
    assert stats["mean_gap_hours"] == 24.0
    assert stats["histogram"][-1] == (23, 3)
    with pytest.raises(EmptyInput):
        time_diff_stats([])


@given(st.lists(st.floats(0, 24), min_size=1, max_size=50))
def test_time_diff_mean_and_histogram(gaps):
    stats = time_diff_stats([ev("A", "B", g) for g in gaps])
    assert stats["mean_gap_hours"] == pytest.approx(sum(gaps) / len(gaps), rel=1e-12)
    counts = dict(stats["histogram"])
    assert sum(counts.values()) == len(gaps)
    for g in gaps:
        assert counts[min(int(g), 23)] >= 1
