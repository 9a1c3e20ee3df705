import numpy as np
import pytest
from helpers import GitScript, at, commit, delta, history
from hypothesis import given
from hypothesis import strategies as st
from scripted import EditScript

from spacex.complexity import estimate_complexity
from spacex.errors import EmptyRepository, NotARepository
from spacex.ingest import (
    COMMITS_HEADER,
    IngestOptions,
    churn_of,
    commits_csv,
    detect_bug_fix,
    history_from_dict,
    history_to_dict,
    walk_history,
)

FAST = IngestOptions(compute_complexity=False)


def lines(n, tag="l"):
    return "".join(f"{tag}{i}\n" for i in range(n))


# --- walk_history ----------------------------------------------------------

def test_three_commits_in_order(tmp_path):
    repo = GitScript(tmp_path / "r")
    shas = [repo.commit("A", "a@x", at(k), {"f.txt": lines(k + 1)}) for k in range(3)]
    h = walk_history(tmp_path / "r", FAST)
    assert [c.commit_id for c in h.commits] == shas
    assert h.project_name == "r"
    assert h.first_commit_at == at(0) and h.last_commit_at == at(2)


def test_added_and_removed_counts(tmp_path):
    repo = GitScript(tmp_path / "r")
    repo.commit("A", "a@x", at(0), {"f.txt": lines(10)})
    repo.commit("A", "a@x", at(1), {"f.txt": lines(6) + lines(10, "new")})
    last = walk_history(tmp_path / "r", FAST).commits[-1]
    [d] = last.files
    assert (d.lines_added, d.lines_removed) == (10, 4)
    assert churn_of(last) == 14


def test_deltas_match_recorded_script(tmp_path):
    rng = np.random.default_rng(5)
    script = EditScript(rng, n_files=4)
    repo = GitScript(tmp_path / "r")
    for k in range(40):
        script.step(f"{k:04d}", k)
        author, changes = script.snapshots[-1]
        files = {p: None if ls is None else "".join(x + "\n" for x in ls) for p, ls in changes.items()}
        files = {p: t for p, t in files.items() if t is not None or (tmp_path / "r" / p).exists()}
        repo.commit(author, author, at(k), files)
    mined = walk_history(tmp_path / "r", FAST)
    for want, got in zip(script.commits, mined.commits):
        expected = {d.path: (d.lines_added, d.lines_removed) for d in want.files if d.churn}
        assert {d.path: (d.lines_added, d.lines_removed) for d in got.files} == expected


def test_binary_quoted_and_empty_commits(tmp_path):
    repo = GitScript(tmp_path / "r")
    repo.commit("A", "a@x", at(0), {"logo.png": b"\x89PNG\x00\x01\x02", "dir with space/ünï.txt": "x\ny\n"})
    repo.commit("A", "a@x", at(1), {})
    first, empty = walk_history(tmp_path / "r", FAST).commits
    by_path = {d.path: d for d in first.files}
    assert by_path["logo.png"].binary and by_path["logo.png"].churn == 0
    assert by_path["dir with space/ünï.txt"].lines_added == 2
    assert empty.files == () and churn_of(empty) == 0


def test_merge_is_flagged_and_first_parent_only(tmp_path):
    repo = GitScript(tmp_path / "r")
    repo.commit("A", "a@x", at(0), {"f.txt": lines(3)})
    repo.git("checkout", "-q", "-b", "side")
    side = repo.commit("B", "b@x", at(1), {"g.txt": lines(2)})
    repo.git("checkout", "-q", "main")
    repo.commit("A", "a@x", at(2), {"f.txt": lines(4)})
    stamp = at(3).strftime("%Y-%m-%dT%H:%M:%S+0000")
    repo.env.update(GIT_AUTHOR_NAME="A", GIT_AUTHOR_EMAIL="a@x", GIT_COMMITTER_NAME="A",
                    GIT_COMMITTER_EMAIL="a@x", GIT_AUTHOR_DATE=stamp, GIT_COMMITTER_DATE=stamp)
    repo.git("merge", "-q", "--no-ff", "-m", "merge side", "side")
    h = walk_history(tmp_path / "r", FAST)
    assert side not in {c.commit_id for c in h.commits}
    merge = h.commits[-1]
    assert merge.is_merge
    assert [(d.path, d.lines_added) for d in merge.files] == [("g.txt", 2)]


def test_not_a_repository(tmp_path):
    with pytest.raises(NotARepository):
        walk_history(tmp_path)
    with pytest.raises(NotARepository):
        walk_history(tmp_path / "missing")


def test_empty_repository(tmp_path):
    GitScript(tmp_path / "r")
    with pytest.raises(EmptyRepository):
        walk_history(tmp_path / "r")


def test_walk_is_deterministic_and_round_trips(tmp_path):
    repo = GitScript(tmp_path / "r")
    repo.commit("A", "a@x", at(0), {"m.py": "def f(x):\n    if x:\n        return 1\n    return 0\n"})
    repo.commit("B", "b@x", at(1), {"m.py": "def f(x):\n    while x:\n        x -= 1\n    return 0\n"})
    a = walk_history(tmp_path / "r")
    b = walk_history(tmp_path / "r")
    assert history_to_dict(a) == history_to_dict(b)
    assert history_from_dict(history_to_dict(a)) == a
    assert a.commits[0].files[0].method_complexities == (2,)


def test_commits_csv_header():
    h = history([commit("c1", "a", 0, ["f"], message="Fix crash")])
    text = commits_csv([h])
    assert text.splitlines()[0] == ",".join(COMMITS_HEADER)
    assert text.splitlines()[1].endswith(",true")


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), max_size=6))
def test_churn_bounds(pairs):
    c = commit("c", "a", 0, [delta(f"f{i}", a, r, hunks=()) for i, (a, r) in enumerate(pairs)])
    total_a = sum(a for a, _ in pairs)
    total_r = sum(r for _, r in pairs)
    assert churn_of(c) == total_a + total_r >= max(total_a, total_r)
    assert (churn_of(c) == 0) == all(a == r == 0 for a, r in pairs)


# --- bug-fix detection -----------------------------------------------------

@pytest.mark.parametrize("msg,want", [
    ("Fix crash in parser", True), ("add feature flag", False), ("", False),
    ("prefix the name", False), ("hotfix: login", True), ("Bugfix/123", True),
])
def test_detect_bug_fix(msg, want):
    assert detect_bug_fix(msg) is want


@given(st.text(max_size=40), st.sampled_from(["", " ", "\n\t  "]))
def test_detect_bug_fix_case_and_whitespace(msg, pad):
    assert detect_bug_fix(msg) == detect_bug_fix(pad + msg.upper() + pad) == detect_bug_fix(msg.lower())


def test_custom_keywords():
    assert detect_bug_fix("regression in cache", ["regression"])


# --- complexity ------------------------------------------------------------

def test_straight_line_function():
    assert estimate_complexity("int f(int x) {\n  return x + 1;\n}\n", "c") == [1]


def test_two_ifs_one_while():
    src = """
int g(int x) {
    if (x > 0) { x--; }
    if (x < -5) { x++; }
    while (x) { x /= 2; }
    return x;
}
"""
    assert estimate_complexity(src, "c") == [4]


def test_python_methods():
    src = """
def a(x):
    if x and x > 1:
        return 1
    elif x:
        return 2
    for i in range(3):
        pass
    return 0

def b():
    return "if for while"  # if
"""
    assert estimate_complexity(src, "python") == [5, 1]


def test_binary_and_unsupported():
    assert estimate_complexity("\x00\x01\x02", "c") == []
    assert estimate_complexity("some prose", "markdown") == []
    assert estimate_complexity("some prose", None) == []


def test_ternary_and_logic_ops():
    assert estimate_complexity("function h(a, b) { return a && b ? 1 : (a || b); }", "js") == [4]


@given(st.text(max_size=200))
def test_complexity_values_at_least_one(text):
    for lang in ("c", "python", "js"):
        assert all(v >= 1 for v in estimate_complexity(text, lang))
