import os

import numpy as np
import pytest

VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True, scope="session")
def _reference_cache(tmp_path_factory):
    # keep reference solutions out of the user's cache unless one is configured
    if "OSCIKG_CACHE_DIR" not in os.environ:
        os.environ["OSCIKG_CACHE_DIR"] = str(tmp_path_factory.mktemp("refcache"))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def verdict(request, capsys):
    """Print and record one PASS/FAIL line per acceptance criterion."""

    def report(criterion, passed, detail):
        line = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
        request.config.stash[VERDICTS].append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return report
