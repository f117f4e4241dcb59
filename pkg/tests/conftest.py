from __future__ import annotations

import json
from importlib import resources

import pytest

from convexmoments.cli import run_suite

CRITERIA = {
    "c1": "oracle agreement within 3 standard errors",
    "c2": "strong/weak moments, universality across n",
    "c3": "log-concave strong/weak moments up to p = 16",
    "c4": "polynomial tail slope and dominance",
    "c5": "negative moments and small balls",
    "c6": "covariance deviation rate",
    "c7": "polar identity gap",
    "c8": "appendix lemmas (G, g(0), Borell 1-D)",
    "c9": "level-set restriction lemmas",
    "c10": "byte-identical reruns",
}
RESULTS: dict[str, tuple[bool, str]] = {}


def manifest_path():
    return resources.files("convexmoments") / "data" / "acceptance.json"


class SuiteRun:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.configs = json.loads(manifest_path().read_text())
        self.code, self.summary = run_suite(manifest_path(), out_dir)

    def reports(self, label):
        out = []
        for i, cfg in enumerate(self.configs):
            if cfg.get("label") == label:
                name = f"{i:03d}-{cfg['check_id'].replace(':', '-')}.json"
                path = self.out_dir / name
                out.append((cfg, self.summary[i], json.loads(path.read_text()) if path.exists() else None))
        return out


@pytest.fixture(scope="session")
def suite(tmp_path_factory):
    return SuiteRun(tmp_path_factory.mktemp("acceptance_a"))


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion for the terminal summary."""
    key = request.node.get_closest_marker("criterion").args[0]
    yield key
    rep = getattr(request.node, "rep_call", None)
    if rep is not None:
        detail = "" if rep.passed else str(rep.longrepr.reprcrash.message if hasattr(rep.longrepr, "reprcrash")
                                             else rep.longrepr).splitlines()[0][:120]
        RESULTS[key] = (rep.passed, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key): acceptance criterion identifier")


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key, text in CRITERIA.items():
        if key in RESULTS:
            ok, detail = RESULTS[key]
            line = f"{'PASS' if ok else 'FAIL'}  {key:<4} {text}"
            if detail:
                line += f"  [{detail}]"
            terminalreporter.write_line(line)
