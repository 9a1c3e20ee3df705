from __future__ import annotations

import pytest
from helpers import CRITERIA
from hypothesis import HealthCheck, settings

from spacex.config import load_config
from spacex.fixtures import build_corpus
from spacex.pipeline import cmd_analyze
from spacex.report import cmd_report

settings.register_profile("spacex", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("spacex")


@pytest.fixture(scope="session")
def corpus_config(tmp_path_factory):
    """Path to config.yaml of the bundled synthetic corpus (built once per session)."""
    return build_corpus(tmp_path_factory.mktemp("corpus") / "fx")


@pytest.fixture(scope="session")
def bundle(corpus_config, tmp_path_factory):
    """Analyzed and reported bundle directory for the synthetic corpus."""
    out = tmp_path_factory.mktemp("bundle") / "bundle"
    cmd_analyze(load_config(corpus_config), out_dir=out)
    cmd_report(out)
    return out


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
