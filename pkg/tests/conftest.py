import numpy as np
import pytest
from hypothesis import settings

from ckn.trainer import LayerParams

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _CRITERIA.append((mark.args[0], rep.outcome, item.name, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, outcome, name, detail in sorted(_CRITERIA):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_layer(rng, q, p, subpatch=1, subsample=1, beta=1.0, alpha=1.0):
    """Small untrained layer with moderate exponents."""
    W = rng.standard_normal((q, p)) / alpha
    b = np.full(p, -1.0 / alpha**2 - 0.5 * np.log(p))
    return LayerParams(W=W, b=b, alpha=alpha, subpatch=subpatch, subsample=subsample, beta=beta,
                       in_channels=q // (subpatch * subpatch))
