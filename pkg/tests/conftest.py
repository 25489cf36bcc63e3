import time

import pytest

from capastat import montecarlo as mc
from capastat.gaindist import gain_series, make_gain_spectrum
from capastat.spectrum import Aperture, eigendecompose


@pytest.fixture(scope="session")
def decomp10():
    return eigendecompose(Aperture(10.0), 128)


@pytest.fixture(scope="session")
def decomp_hi10():
    return eigendecompose(Aperture(10.0), 256)


@pytest.fixture(scope="session")
def model10(decomp10):
    spec = make_gain_spectrum(decomp10)
    return spec, gain_series(spec)


@pytest.fixture(scope="session")
def spectral_million_timed():
    """10^6 single-threaded spectral gain draws for L = 10 wavelengths and the wall time."""
    ap = Aperture(10.0)
    cfg = mc.SimulationConfig.for_aperture(ap, seed=2024, n_samples=1_000_000)
    t0 = time.perf_counter()
    batch = mc.spectral_gains(ap, cfg, workers=1)
    return batch, time.perf_counter() - t0


@pytest.fixture(scope="session")
def spectral_million(spectral_million_timed):
    return spectral_million_timed[0]


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.failed:
        props = dict(report.user_properties)
        _ACCEPTANCE[report.nodeid] = (props.get("criterion", report.nodeid),
                                      report.passed, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE.values()):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {label}  {detail}".rstrip())
