"""Shared scenario runs; each is computed once per session."""

import pytest

from sandtray.config import preset_config
from sandtray.pipeline import run_pipeline

ACCEPTANCE = {}


def _run(name, **kw):
    return run_pipeline(preset_config(name, **kw), stage="diagnose")


@pytest.fixture(scope="session")
def square_run():
    return _run("square-tray")


@pytest.fixture(scope="session")
def square_run_coarse():
    return _run("square-tray", resolution=64, samples=360)


@pytest.fixture(scope="session")
def square_run_fine():
    return _run("square-tray", resolution=128, samples=1440)


@pytest.fixture(scope="session")
def hexagon_run():
    return _run("hexagon-lens")


@pytest.fixture(scope="session")
def disk_run():
    return _run("disk-homogeneous")


@pytest.fixture(scope="session")
def disk_run_coarse():
    return _run("disk-homogeneous", resolution=64, samples=360)


@pytest.fixture(scope="session")
def disk_run_fine():
    return _run("disk-homogeneous", resolution=128, samples=1440)


@pytest.fixture(scope="session")
def ellipse_run():
    return _run("ellipse-foci")


@pytest.fixture
def record():
    """Store a one-line verdict for the acceptance summary."""
    def _record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[criterion] = line
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
