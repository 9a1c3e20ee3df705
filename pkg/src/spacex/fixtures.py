"""Deterministic synthetic corpora.

``build_corpus`` writes three small git repositories (through
``git fast-import``, so commit ids depend only on the seed), one forge
snapshot per repository, an alias override file and a run config.
``planted_history`` builds an in-memory history whose churn is driven
by commit volume and suppressed by bug-fix share, for checking that the
regression and partial-correlation stages recover known directions.
"""

from __future__ import annotations

import os
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import InputError
from .forge import dump_snapshot, snapshot_from_dict
from .ingest import _GIT_ENV, CommitRecord, FileDelta, Hunk, RepoHistory, iso_utc

DEFAULT_SEED = 7

_THINGS = ["parser", "cache", "config loader", "socket pool", "retry loop", "logger", "scheduler",
           "index", "exporter", "auth token", "tokenizer", "buffer"]
_MESSAGES = {
    "fix": ["Fix crash when {t} is empty", "Fix off-by-one in {t}", "bug: {t} drops the last item",
            "Hotfix for {t} timeout", "Patch {t} fault on reload"],
    "good": ["Add great new {t} support", "Nicely simplify the {t}", "Improve {t} throughput",
             "Clean and elegant {t} rewrite"],
    "bad": ["Work around horrible {t} hack", "Ugly workaround for the broken {t}",
            "Revert broken {t} change", "Remove useless {t} code"],
    "plain": ["Refactor {t}", "Update docs for {t}", "Rename {t} helpers", "Move {t} into its own module",
              "Bump {t} version"],
}


@dataclass(frozen=True)
class Person:
    name: str
    email: str
    login: str
    weight: float
    mood: tuple[float, float, float, float]  # fix, good, bad, plain
    aliases: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class RepoPlan:
    name: str
    start: datetime
    n_commits: int
    people: tuple[Person, ...]
    ci_success: float
    merge_hours: float
    with_merge: bool = False
    with_bot: bool = False
    with_binary: bool = False
    extras: bool = False


def _p(name, email, login, weight, mood=(0.25, 0.25, 0.1, 0.4), aliases=()):
    return Person(name, email, login, weight, mood, aliases)


PLANS = (
    RepoPlan(
        "alpha", datetime(2024, 1, 8, 9, tzinfo=timezone.utc), 150,
        (
            _p("Ana Silva", "ana.silva@alpha.dev", "ana.silva", 3.0, (0.2, 0.35, 0.05, 0.4),
               aliases=(("ana silva", "ana.silva@users.noreply.github.com"),)),
            _p("José Ramos", "jose@alpha.dev", "jose", 2.0, (0.35, 0.1, 0.25, 0.3),
               aliases=(("Jose Ramos", "jramos@old-mail.example"),)),
            _p("Priya Nair", "priya@alpha.dev", "priya", 2.0, (0.3, 0.3, 0.1, 0.3)),
            _p("Lee Chen", "lee@alpha.dev", "lee", 1.5, (0.15, 0.15, 0.2, 0.5),
               aliases=(("L. Chen", "lchen@contractor.example"),)),
            _p("Tom Becker", "tom@alpha.dev", "tom", 0.4),
        ),
        ci_success=0.9, merge_hours=20.0, with_merge=True, with_bot=True, with_binary=True, extras=True,
    ),
    RepoPlan(
        "beta", datetime(2024, 2, 5, 10, tzinfo=timezone.utc), 120,
        (
            _p("Marta Kowalska", "marta@beta.io", "marta", 2.5, (0.4, 0.1, 0.2, 0.3)),
            _p("Omar Haddad", "omar@beta.io", "omar", 2.0, (0.2, 0.3, 0.05, 0.45)),
            _p("Priya Nair", "priya@alpha.dev", "priya", 1.5, (0.3, 0.3, 0.1, 0.3)),
            _p("Kenji Sato", "kenji@beta.io", "kenji", 1.5, (0.25, 0.2, 0.3, 0.25)),
        ),
        ci_success=0.75, merge_hours=45.0,
    ),
    RepoPlan(
        "gamma", datetime(2024, 3, 4, 8, tzinfo=timezone.utc), 110,
        (
            _p("Zoe Martin", "zoe@gamma.org", "zoe", 2.0, (0.1, 0.4, 0.05, 0.45)),
            _p("Ivan Petrov", "ivan@gamma.org", "ivan", 2.0, (0.45, 0.05, 0.3, 0.2)),
            _p("Sara Lind", "sara@gamma.org", "sara", 1.8, (0.25, 0.25, 0.15, 0.35)),
            _p("Ben Okafor", "ben@gamma.org", "ben", 0.5),
        ),
        ci_success=0.6, merge_hours=80.0,
    ),
)

BOT = ("dependabot[bot]", "49699333+dependabot[bot]@users.noreply.github.com")


# --------------------------------------------------------------------------
# source files as lists of blocks, so edits stay syntactically plausible

def _py_block(rng, n: int) -> list[str]:
    lines = [f"def step_{n}(x):"]
    for _ in range(int(rng.integers(0, 4))):
        k = int(rng.integers(1, 50))
        kind = rng.choice(["if", "for", "while", "andor"])
        if kind == "if":
            lines += [f"    if x > {k}:", f"        x -= {k}"]
        elif kind == "for":
            lines += [f"    for i in range({k}):", "        x += i"]
        elif kind == "while":
            lines += [f"    while x > {k}:", "        x //= 2"]
        else:
            lines += [f"    if x > {k} and x % 2 or x < 0:", "        x = -x"]
    lines.append(f"    return x + {int(rng.integers(0, 9))}")
    return lines + [""]


def _c_block(rng, n: int) -> list[str]:
    lines = [f"int step_{n}(int x) {{"]
    for _ in range(int(rng.integers(0, 4))):
        k = int(rng.integers(1, 50))
        kind = rng.choice(["if", "for", "cond"])
        if kind == "if":
            lines += [f"    if (x > {k} && x < {k * 3}) {{", f"        x -= {k};", "    }"]
        elif kind == "for":
            lines += [f"    for (int i = 0; i < {k}; i++) {{", "        x += i;", "    }"]
        else:
            lines += [f"    x = x > {k} ? x - {k} : x + 1;"]
    lines += [f"    return x * {int(rng.integers(1, 9))};", "}", ""]
    return lines


def _js_block(rng, n: int) -> list[str]:
    k = int(rng.integers(1, 50))
    lines = [f"function step{n}(x) {{"]
    if rng.random() < 0.6:
        lines += [f"  if (x > {k} || x < -{k}) {{", "    return 0;", "  }"]
    lines += [f"  return x > {k} ? x : -x;", "}", ""]
    return lines


def _md_block(rng, n: int) -> list[str]:
    return [f"Note {n}: {rng.choice(_THINGS)} behaves as documented.", ""]


_MAKERS = {".py": _py_block, ".c": _c_block, ".js": _js_block, ".md": _md_block}


@dataclass
class _File:
    path: str
    blocks: list[list[str]] = field(default_factory=list)

    def text(self) -> bytes:
        return "\n".join(line for b in self.blocks for line in b).encode("utf-8") + b"\n"


def _mutate(rng, f: _File, counter: list[int]) -> None:
    make = _MAKERS[os.path.splitext(f.path)[1]]
    roll = rng.random()
    if not f.blocks or roll < 0.45:
        counter[0] += 1
        at = int(rng.integers(0, len(f.blocks) + 1))
        f.blocks.insert(at, make(rng, counter[0]))
    elif roll < 0.85:
        block = f.blocks[int(rng.integers(0, len(f.blocks)))]
        idx = [i for i, line in enumerate(block) if any(ch.isdigit() for ch in line)]
        if idx:
            i = idx[int(rng.integers(0, len(idx)))]
            block[i] = block[i].replace(str(_last_number(block[i])), str(int(rng.integers(50, 99))), 1)
    elif len(f.blocks) > 2:
        f.blocks.pop(int(rng.integers(0, len(f.blocks))))


def _last_number(line: str) -> int:
    digits = "".join(ch if ch.isdigit() else " " for ch in line).split()
    return int(digits[-1])


# --------------------------------------------------------------------------
# fast-import stream

def _data(payload: bytes) -> bytes:
    return b"data %d\n" % len(payload) + payload + b"\n"


def _ident(name: str, email: str, when: datetime) -> bytes:
    return f"{name} <{email}> {int(when.timestamp())} +0000".encode("utf-8")


@dataclass
class _Stream:
    chunks: list[bytes] = field(default_factory=list)
    mark: int = 0

    def commit(self, ref: str, who: tuple[str, str], when: datetime, message: str,
               changes: dict[str, bytes | None], parent: int | None, merge: int | None = None) -> int:
        self.mark += 1
        out = [f"commit {ref}\n".encode(), b"mark :%d\n" % self.mark,
               b"author " + _ident(*who, when) + b"\n", b"committer " + _ident(*who, when) + b"\n",
               _data(message.encode("utf-8"))]
        if parent is not None:
            out.append(b"from :%d\n" % parent)
        if merge is not None:
            out.append(b"merge :%d\n" % merge)
        for path, content in sorted(changes.items()):
            if content is None:
                out.append(f"D {path}\n".encode())
            else:
                out.append(f"M 100644 inline {path}\n".encode() + _data(content))
        self.chunks.append(b"".join(out) + b"\n")
        return self.mark


def _pick_message(rng, person: Person) -> str:
    kind = rng.choice(list(_MESSAGES), p=np.array(person.mood) / sum(person.mood))
    template = _MESSAGES[kind][int(rng.integers(0, len(_MESSAGES[kind])))]
    return template.format(t=_THINGS[int(rng.integers(0, len(_THINGS)))])


def _plan_stream(plan: RepoPlan, rng) -> tuple[bytes, list[dict]]:
    """Fast-import stream for one repository plus the timeline used for the snapshot."""
    files = [_File(p) for p in ("src/core.py", "src/util.py", "src/io.c", "web/app.js", "README.md")]
    file_p = np.array([0.3, 0.2, 0.2, 0.2, 0.1])
    weights = np.array([p.weight for p in plan.people])
    weights = weights / weights.sum()
    counter = [0]
    stream = _Stream()
    when = plan.start
    parent = None
    timeline = []
    merge_at = plan.n_commits // 2 if plan.with_merge else -1
    requirements = ["requests==2.31.0", "numpy==1.26.0"]

    for i in range(plan.n_commits):
        # half the gaps are short so neighbouring commits land inside a day
        hours = rng.uniform(0.3, 12.0) if rng.random() < 0.5 else rng.uniform(12.0, 60.0)
        when = when + timedelta(seconds=int(hours * 3600))
        person = plan.people[int(rng.choice(len(plan.people), p=weights))]
        who = (person.name, person.email)
        if person.aliases and rng.random() < 0.3:
            who = person.aliases[int(rng.integers(0, len(person.aliases)))]
        changes: dict[str, bytes | None] = {}
        for _ in range(1 + int(rng.random() < 0.35)):
            f = files[int(rng.choice(len(files), p=file_p))]
            _mutate(rng, f, counter)
            changes[f.path] = f.text()
        parent = stream.commit("refs/heads/main", who, when, _pick_message(rng, person), changes, parent)
        timeline.append({"login": person.login, "when": when})

        if plan.with_bot and i % 30 == 15:
            when += timedelta(minutes=20)
            requirements[i % 2] = requirements[i % 2].rsplit(".", 1)[0] + f".{i}"
            parent = stream.commit("refs/heads/main", BOT, when, f"Bump dependency pin ({i})",
                                   {"requirements.txt": ("\n".join(requirements) + "\n").encode()}, parent)
        if plan.with_binary and i == 10:
            when += timedelta(minutes=5)
            blob = bytes(int(b) for b in rng.integers(0, 256, size=64)) + b"\x00"
            parent = stream.commit("refs/heads/main", (plan.people[0].name, plan.people[0].email), when,
                                   "Add logo", {"assets/logo.png": blob}, parent)
        if i == merge_at:
            side = plan.people[2]
            branch_when = when + timedelta(hours=1)
            guide = _File("docs/guide.md", [_md_block(rng, 900), _md_block(rng, 901)])
            tip = stream.commit("refs/heads/feature", (side.name, side.email), branch_when,
                                "Draft the user guide", {guide.path: guide.text()}, parent)
            guide.blocks.append(_md_block(rng, 902))
            tip = stream.commit("refs/heads/feature", (side.name, side.email), branch_when + timedelta(hours=2),
                                "Expand the user guide", {guide.path: guide.text()}, tip)
            when = branch_when + timedelta(hours=5)
            lead = plan.people[0]
            parent = stream.commit("refs/heads/main", (lead.name, lead.email), when,
                                   "Merge branch 'feature/guide'", {guide.path: guide.text()}, parent, merge=tip)
    return b"".join(stream.chunks), timeline


def _git_env() -> dict:
    return {**os.environ, **_GIT_ENV}


def build_repo(path: Path, stream: bytes) -> None:
    path.mkdir(parents=True, exist_ok=True)
    env = _git_env()
    for args, data in ((["init", "-q"], None), (["fast-import", "--quiet"], stream),
                       (["symbolic-ref", "HEAD", "refs/heads/main"], None), (["reset", "-q", "--hard"], None)):
        result = subprocess.run(["git", "-C", str(path), *args], input=data, capture_output=True, env=env)
        if result.returncode != 0:
            raise InputError(f"git {args[0]} failed in {path}: {result.stderr.decode(errors='replace')}")


# --------------------------------------------------------------------------
# forge snapshots

def _snapshot(plan: RepoPlan, timeline: list[dict], rng) -> dict:
    logins = [p.login for p in plan.people]
    end = timeline[-1]["when"]
    span = (end - plan.start).total_seconds()

    def at(frac: float) -> datetime:
        return plan.start + timedelta(seconds=int(frac * span))

    prs = []
    for login in logins:
        for _ in range(int(rng.integers(2, 9))):
            created = at(rng.random() * 0.95)
            merged = None
            if rng.random() < 0.8:
                merged = created + timedelta(seconds=int(rng.exponential(plan.merge_hours) * 3600) + 60)
            prs.append({"author_login": login, "created_at": iso_utc(created),
                        "merged_at": iso_utc(merged) if merged else None,
                        "closed_at": iso_utc(merged) if merged else None})
    prs.sort(key=lambda p: (p["created_at"], p["author_login"]))
    for n, pr in enumerate(prs, start=1):
        pr["number"] = n

    issues = []
    reporters = logins + ["drive-by-user"]
    for login in reporters:
        for _ in range(int(rng.integers(1, 7))):
            issues.append({"author_login": login, "created_at": iso_utc(at(rng.random())),
                           "state": "closed" if rng.random() < 0.6 else "open"})
    issues.sort(key=lambda i: (i["created_at"], i["author_login"]))
    for n, issue in enumerate(issues, start=1000):
        issue["number"] = n

    runs = []
    for k in range(40):
        roll = rng.random()
        conclusion = "other" if roll < 0.05 else ("success" if rng.random() < plan.ci_success else "failure")
        runs.append({"run_id": f"{plan.name}-{k + 1}", "finished_at": iso_utc(at(k / 40)), "conclusion": conclusion})

    extras = {}
    if plan.extras:
        for login in logins:
            extras[login] = {"total_code_reviews": int(rng.integers(0, 40)),
                             "total_deployments": int(rng.integers(0, 10))}
    return {"project_name": plan.name, "pull_requests": prs, "issues": issues, "ci_runs": runs,
            "extra_columns": extras}


CONFIG_TEMPLATE = """\
# Run over the bundled synthetic corpus.  Paths are relative to this file.
repo_paths:
  - repos/alpha
  - repos/beta
  - repos/gamma
snapshot_paths:
  - snapshots/alpha.json
  - snapshots/beta.json
  - snapshots/gamma.json
out_dir: bundle
ingest:
  include_merges: false
  compute_complexity: true
cleaning:
  min_commits: 20
  iqr_multiplier: 1.5
  winsorize:
    - {dataset: repos, column: avg_pr_merge_time_hours, lower: 0.01, upper: 0.99}
  alias_overrides_path: aliases.csv
sentiment:
  mode: lexicon
communication:
  window_hours: 24
  strict_alternation: false
cps:
  scoring_profile: default
  weights: {satisfaction: 0.2, performance: 0.2, activity: 0.2, communication: 0.2, efficiency: 0.2}
"""


def build_corpus(out_dir: str | os.PathLike, seed: int = DEFAULT_SEED) -> Path:
    """Write repos/, snapshots/, aliases.csv and config.yaml under ``out_dir``; returns the config path."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise InputError(f"{out} is not empty")
    rng = np.random.default_rng(seed)
    for plan in PLANS:
        stream, timeline = _plan_stream(plan, rng)
        build_repo(out / "repos" / plan.name, stream)
        dump_snapshot(snapshot_from_dict(_snapshot(plan, timeline, rng)), out / "snapshots" / f"{plan.name}.json")
    (out / "aliases.csv").write_text("raw_email,canonical_id\nlchen@contractor.example,lee@alpha.dev\n",
                                     encoding="utf-8")
    config = out / "config.yaml"
    config.write_text(CONFIG_TEMPLATE, encoding="utf-8")
    return config


# --------------------------------------------------------------------------
# planted-effect history

def planted_history(seed: int = DEFAULT_SEED, n_authors: int = 40, project: str = "planted") -> RepoHistory:
    """Per author: commits ~ U[20, 120], bug fixes ~ Binomial(commits, U[0.1, 0.8]).

    A regular commit adds about 40 lines and a bug fix about 5, so churn
    rises with commit count while, at fixed commit count, more bug fixes
    mean less churn.  Raw churn/bug-fix correlation is positive (both
    scale with commits); the partial correlation given commits is negative.
    """
    rng = np.random.default_rng(seed)
    start = datetime(2024, 1, 1, tzinfo=timezone.utc)
    paths = [f"src/mod{k}.py" for k in range(8)]
    lengths = dict.fromkeys(paths, 0)
    plan = []
    for a in range(n_authors):
        commits = int(rng.integers(20, 121))
        fixes = int(rng.binomial(commits, rng.uniform(0.1, 0.8)))
        kinds = np.array([True] * fixes + [False] * (commits - fixes))
        rng.shuffle(kinds)
        plan.extend((a, bool(k)) for k in kinds)
    order = rng.permutation(len(plan))
    records = []
    when = start
    for n, idx in enumerate(order):
        author, is_fix = plan[idx]
        when = when + timedelta(minutes=int(rng.integers(10, 600)))
        added = max(1, int(rng.normal(5, 1))) if is_fix else max(1, int(rng.normal(40, 8)))
        path = paths[int(rng.integers(0, len(paths)))]
        hunk = Hunk(lengths[path], 0, lengths[path] + 1, added)
        lengths[path] += added
        records.append(CommitRecord(
            commit_id=f"{n:040x}",
            author_name=f"Dev {author:02d}",
            author_email=f"dev{author:02d}@planted.example",
            timestamp=when,
            message="Fix failing case" if is_fix else "Extend module",
            files=(FileDelta(path, added, 0, (), (hunk,)),),
        ))
    return RepoHistory(project, tuple(records), tuple(r.commit_id for r in records))


PLANTED_ANALYSES = [
    {"name": "churn_on_commits", "dataset": "authors", "kind": "ols",
     "response": "code_churn", "predictors": ["total_commits"]},
    {"name": "bugfix_churn_raw", "dataset": "authors", "kind": "pearson",
     "response": "code_churn", "predictors": ["bug_fix_commits"]},
    {"name": "bugfix_churn_partial", "dataset": "authors", "kind": "partial_corr",
     "response": "code_churn", "predictors": ["bug_fix_commits"], "controls": ["total_commits"]},
]
