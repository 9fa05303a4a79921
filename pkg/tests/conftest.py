import time

import numpy as np
import pytest

from corehole.config import RunConfig
from corehole.hamiltonian import SiamParams, build_siam, partition_reference

SIAM_BATHS = (-1.0, 1.0, 2.0)
CORE = 1          # impurity spin-down
ALL_METHODS = ("exact", "TDCC", "TDDCC1", "TDDCC1_1B", "TDDCC1_2B", "TDDCC2")

# acceptance lines collected during the session and echoed in the summary
ACCEPTANCE_LINES: list[str] = []


def siam_params(u: float, baths=SIAM_BATHS, v: float = 0.4) -> SiamParams:
    return SiamParams(-1.5, tuple(baths), v, u)


@pytest.fixture(scope="session")
def siam2():
    return build_siam(siam_params(2.0))


@pytest.fixture(scope="session")
def siam3():
    return build_siam(siam_params(3.0))


@pytest.fixture(scope="session")
def small_siam():
    """Two bath levels: 6 spin orbitals, N=4, (N-1) sector of dimension 20."""
    h = build_siam(siam_params(2.0, baths=(-1.0, 1.0)))
    return h, partition_reference(h, CORE)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class _SiamRun:
    def __init__(self, report, seconds):
        self.report = report
        self.seconds = seconds
        self.dir = report.output_dir
        self.methods = report.summary["methods"]


def _run_siam(tmp_path_factory, u, methods, **extra):
    from corehole.cli import run

    out = tmp_path_factory.mktemp(f"siam_u{u:g}")
    config = RunConfig(system=siam_params(u), core_index=CORE, methods=methods,
                       output_dir=out, **extra)
    start = time.perf_counter()
    report = run(config, threads=1)
    return _SiamRun(report, time.perf_counter() - start)


@pytest.fixture(scope="session")
def siam2_run(tmp_path_factory):
    """Full 900 a.u. run of every method plus the QSP ladder on SIAM U=2."""
    return _run_siam(tmp_path_factory, 2.0, ALL_METHODS + ("qsp",), qsp_tau_max=3.0)


@pytest.fixture(scope="session")
def siam3_run(tmp_path_factory):
    return _run_siam(tmp_path_factory, 3.0, ALL_METHODS)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
