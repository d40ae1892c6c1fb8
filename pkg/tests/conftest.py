import json
from importlib import resources
from pathlib import Path

import pytest

ACCEPTANCE = {}


def shipped_config(name):
    return json.loads(resources.files("ilgaco").joinpath("configs").joinpath(f"{name}.json").read_text())


class Pipeline:
    """Runs the shipped default experiments through the CLI layer, each at most once per session."""

    def __init__(self, root: Path):
        self.root = root
        self._runs = {}

    def config_path(self, name, out_name=None):
        cfg = shipped_config(name)
        cfg["out"] = str(self.root / (out_name or name))
        path = self.root / f"{out_name or name}.json"
        path.write_text(json.dumps(cfg))
        return path

    def _ensure(self, name):
        if name not in self._runs:
            from ilgaco.cli import load_config, run_experiment, write_artifacts

            config = load_config(self.config_path(name))
            result, dataset, report = run_experiment(config)
            write_artifacts(config, result, dataset, report, config.out)
            self._runs[name] = (result, dataset, report)
        return self._runs[name]

    def run_dir(self, name):
        self._ensure(name)
        return self.root / name

    def report(self, name):
        return self._ensure(name)[2]

    def result(self, name):
        return self._ensure(name)[0]

    def dataset(self, name):
        return self._ensure(name)[1]


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    return Pipeline(tmp_path_factory.mktemp("pipeline"))


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or report.failed:
        detail = dict(report.user_properties).get("detail", "")
        if report.skipped:
            outcome = "SKIP"
        else:
            outcome = "PASS" if report.passed else "FAIL"
        if name not in ACCEPTANCE or outcome == "FAIL":
            ACCEPTANCE[name] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        outcome, detail = ACCEPTANCE[name]
        number = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"[{outcome}] criterion {number:2d} {label}: {detail}")
