"""Pull-request, issue and CI-run metadata.

Analyses only ever read snapshot files.  ``fetch_live`` is a producer of
snapshot files: it talks to the GitHub REST API and writes what it got to
disk before parsing it back through ``load_snapshot``.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

from .errors import (
    AuthFailure,
    NetworkError,
    RateLimited,
    SchemaViolation,
    TimestampParseError,
)
from .ingest import iso_utc, parse_iso_utc

logger = logging.getLogger(__name__)

TOKEN_ENV = "SPACEX_FORGE_TOKEN"
CI_CONCLUSIONS = ("success", "failure", "other")
ISSUE_STATES = ("open", "closed")


@dataclass(frozen=True)
class PullRequest:
    number: int
    author_login: str
    created_at: datetime
    merged_at: datetime | None = None
    closed_at: datetime | None = None


@dataclass(frozen=True)
class IssueRecord:
    number: int
    author_login: str
    created_at: datetime
    state: str


@dataclass(frozen=True)
class CiRun:
    run_id: str
    finished_at: datetime
    conclusion: str


@dataclass(frozen=True)
class ExtraColumns:
    total_code_reviews: int | None = None
    total_deployments: int | None = None


@dataclass(frozen=True)
class ForgeSnapshot:
    project_name: str
    pull_requests: tuple[PullRequest, ...] = ()
    issues: tuple[IssueRecord, ...] = ()
    ci_runs: tuple[CiRun, ...] = ()
    extra_columns: dict[str, ExtraColumns] = field(default_factory=dict)


# --------------------------------------------------------------------------
# validation

def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"{path}.{key}", "missing required field")
    return obj[key]


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(path, f"expected string, got {type(value).__name__}")
    return value


def _as_int(value: Any, path: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(path, f"expected integer, got {type(value).__name__}")
    if value < minimum:
        raise SchemaViolation(path, f"expected integer >= {minimum}, got {value}")
    return value


def _as_time(value: Any, path: str, optional: bool = False) -> datetime | None:
    if value is None and optional:
        return None
    text = _as_str(value, path)
    try:
        return parse_iso_utc(text)
    except ValueError as exc:
        raise TimestampParseError(path, f"unparseable timestamp {text!r}") from exc


def _as_list(data: dict, key: str) -> list:
    value = data.get(key)
    if value is None:
        return []
    if not isinstance(value, list):
        raise SchemaViolation(f"$.{key}", "expected array")
    return value


def _as_object(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaViolation(path, f"expected object, got {type(value).__name__}")
    return value


def snapshot_from_dict(data: Any) -> ForgeSnapshot:
    data = _as_object(data, "$")
    project = _as_str(_require(data, "project_name", "$"), "$.project_name")

    prs = []
    for i, raw in enumerate(_as_list(data, "pull_requests")):
        p = f"$.pull_requests[{i}]"
        raw = _as_object(raw, p)
        pr = PullRequest(
            number=_as_int(_require(raw, "number", p), f"{p}.number", minimum=1),
            author_login=_as_str(_require(raw, "author_login", p), f"{p}.author_login"),
            created_at=_as_time(_require(raw, "created_at", p), f"{p}.created_at"),
            merged_at=_as_time(raw.get("merged_at"), f"{p}.merged_at", optional=True),
            closed_at=_as_time(raw.get("closed_at"), f"{p}.closed_at", optional=True),
        )
        if pr.merged_at is not None and pr.merged_at < pr.created_at:
            raise SchemaViolation(f"{p}.merged_at", "merged_at precedes created_at")
        prs.append(pr)

    issues = []
    seen_numbers: set[int] = set()
    for i, raw in enumerate(_as_list(data, "issues")):
        p = f"$.issues[{i}]"
        raw = _as_object(raw, p)
        number = _as_int(_require(raw, "number", p), f"{p}.number", minimum=1)
        if number in seen_numbers:
            raise SchemaViolation(f"{p}.number", f"duplicate issue number {number}")
        seen_numbers.add(number)
        state = _as_str(_require(raw, "state", p), f"{p}.state")
        if state not in ISSUE_STATES:
            raise SchemaViolation(f"{p}.state", f"expected one of {ISSUE_STATES}, got {state!r}")
        issues.append(IssueRecord(
            number=number,
            author_login=_as_str(_require(raw, "author_login", p), f"{p}.author_login"),
            created_at=_as_time(_require(raw, "created_at", p), f"{p}.created_at"),
            state=state,
        ))

    runs = []
    for i, raw in enumerate(_as_list(data, "ci_runs")):
        p = f"$.ci_runs[{i}]"
        raw = _as_object(raw, p)
        conclusion = _as_str(_require(raw, "conclusion", p), f"{p}.conclusion")
        if conclusion not in CI_CONCLUSIONS:
            raise SchemaViolation(f"{p}.conclusion", f"expected one of {CI_CONCLUSIONS}, got {conclusion!r}")
        runs.append(CiRun(
            run_id=_as_str(_require(raw, "run_id", p), f"{p}.run_id"),
            finished_at=_as_time(_require(raw, "finished_at", p), f"{p}.finished_at"),
            conclusion=conclusion,
        ))

    extras = {}
    raw_extras = data.get("extra_columns") or {}
    raw_extras = _as_object(raw_extras, "$.extra_columns")
    for login, cols in raw_extras.items():
        p = f"$.extra_columns.{login}"
        cols = _as_object(cols, p)
        extras[login] = ExtraColumns(
            total_code_reviews=(
                _as_int(cols["total_code_reviews"], f"{p}.total_code_reviews")
                if cols.get("total_code_reviews") is not None else None
            ),
            total_deployments=(
                _as_int(cols["total_deployments"], f"{p}.total_deployments")
                if cols.get("total_deployments") is not None else None
            ),
        )

    return ForgeSnapshot(project, tuple(prs), tuple(issues), tuple(runs), extras)


def snapshot_to_dict(snapshot: ForgeSnapshot) -> dict:
    def t(value):
        return iso_utc(value) if value is not None else None

    return {
        "project_name": snapshot.project_name,
        "pull_requests": [
            {"number": p.number, "author_login": p.author_login, "created_at": t(p.created_at),
             "merged_at": t(p.merged_at), "closed_at": t(p.closed_at)}
            for p in snapshot.pull_requests
        ],
        "issues": [
            {"number": i.number, "author_login": i.author_login, "created_at": t(i.created_at), "state": i.state}
            for i in snapshot.issues
        ],
        "ci_runs": [
            {"run_id": r.run_id, "finished_at": t(r.finished_at), "conclusion": r.conclusion}
            for r in snapshot.ci_runs
        ],
        "extra_columns": {
            login: {k: v for k, v in (("total_code_reviews", e.total_code_reviews),
                                      ("total_deployments", e.total_deployments)) if v is not None}
            for login, e in sorted(snapshot.extra_columns.items())
        },
    }


def dump_snapshot(snapshot: ForgeSnapshot, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(snapshot_to_dict(snapshot), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def load_snapshot(path: str | os.PathLike) -> ForgeSnapshot:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation("$", f"invalid JSON in {path}: {exc}") from exc
    return snapshot_from_dict(data)


# --------------------------------------------------------------------------
# live fetch

API_ROOT = "https://api.github.com"


def _conclusion(value: str | None) -> str:
    return value if value in ("success", "failure") else "other"


def _get_pages(session, url: str, headers: dict, params: dict, items_key: str | None = None) -> list[dict]:
    import requests

    items: list[dict] = []
    next_url: str | None = url
    next_params: dict | None = params
    while next_url:
        try:
            resp = session.get(next_url, headers=headers, params=next_params, timeout=30)
        except requests.RequestException as exc:
            raise NetworkError(f"GET {next_url} failed: {exc}") from exc
        if resp.status_code == 401:
            raise AuthFailure("forge rejected the token (HTTP 401)")
        if resp.status_code in (403, 429):
            remaining = resp.headers.get("X-RateLimit-Remaining")
            if resp.status_code == 429 or remaining == "0" or "Retry-After" in resp.headers:
                raise RateLimited("forge rate limit hit", _retry_after(resp.headers))
            raise AuthFailure(f"forge refused access (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise NetworkError(f"GET {next_url} returned HTTP {resp.status_code}")
        payload = resp.json()
        page = payload.get(items_key, []) if items_key else payload
        items.extend(page)
        next_url = resp.links.get("next", {}).get("url") if getattr(resp, "links", None) else None
        next_params = None  # the next link already carries the query
    return items


def _retry_after(headers) -> float | None:
    if "Retry-After" in headers:
        try:
            return float(headers["Retry-After"])
        except ValueError:
            return None
    if "X-RateLimit-Reset" in headers:
        try:
            return max(0.0, float(headers["X-RateLimit-Reset"]) - time.time())
        except ValueError:
            return None
    return None


def fetch_live(
    project_slug: str,
    token: str,
    out_path: str | os.PathLike,
    session=None,
    api_root: str = API_ROOT,
) -> ForgeSnapshot:
    """Fetch PRs, issues and workflow runs for ``owner/repo`` and write a snapshot."""
    import requests

    if not token:
        raise AuthFailure(f"no forge token; set {TOKEN_ENV}")
    session = session or requests.Session()
    headers = {
        "Authorization": f"Bearer {token}",
        "Accept": "application/vnd.github+json",
        "X-GitHub-Api-Version": "2022-11-28",
    }
    base = f"{api_root}/repos/{project_slug}"
    pulls = _get_pages(session, f"{base}/pulls", headers, {"state": "all", "per_page": 100})
    issues = _get_pages(session, f"{base}/issues", headers, {"state": "all", "per_page": 100})
    runs = _get_pages(session, f"{base}/actions/runs", headers, {"per_page": 100}, items_key="workflow_runs")

    raw = {
        "project_name": project_slug.split("/")[-1],
        "pull_requests": [
            {
                "number": p["number"],
                "author_login": (p.get("user") or {}).get("login", ""),
                "created_at": p["created_at"],
                "merged_at": p.get("merged_at"),
                "closed_at": p.get("closed_at"),
            }
            for p in pulls
        ],
        # the issues endpoint also lists pull requests
        "issues": [
            {
                "number": i["number"],
                "author_login": (i.get("user") or {}).get("login", ""),
                "created_at": i["created_at"],
                "state": i.get("state", "open"),
            }
            for i in issues if "pull_request" not in i
        ],
        "ci_runs": [
            {
                "run_id": str(r["id"]),
                "finished_at": r.get("updated_at") or r["created_at"],
                "conclusion": _conclusion(r.get("conclusion")),
            }
            for r in runs if r.get("status") == "completed"
        ],
        "extra_columns": {},
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(raw, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    logger.info("wrote snapshot for %s to %s", project_slug, out_path)
    return load_snapshot(out_path)
