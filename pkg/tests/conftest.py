import pathlib

import numpy as np
import pytest

from fragsim.rates import KernelSpec, RateFamily, RateModel

ROOT = pathlib.Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def _model(decay, death, frag):
    return RateModel(decay=decay, death=death, frag=frag)


MODELS = {
    # r_i = 1, d_i = 0, a_i = 1
    "sec4_1": _model(RateFamily.constant(1), RateFamily.constant(0), RateFamily.constant(1)),
    # r_i = i, d_i = 0, a_i = 1
    "sec4_2": _model(RateFamily.linear(1), RateFamily.constant(0), RateFamily.constant(1)),
    # r_i = 1, d_i = i, a_i = i
    "sec4_3": _model(RateFamily.constant(1), RateFamily.linear(1), RateFamily.linear(1)),
    # r_i = i, d_i = i, a_i = i
    "sec4_4": _model(RateFamily.linear(1), RateFamily.linear(1), RateFamily.linear(1)),
}

# scalar rate functions for the oracles, written out independently of RateFamily
SCALAR_RATES = {
    "sec4_1": (lambda i: 1.0, lambda i: 0.0, lambda i: 0.0 if i == 1 else 1.0),
    "sec4_2": (lambda i: float(i), lambda i: 0.0, lambda i: 0.0 if i == 1 else 1.0),
    "sec4_3": (lambda i: 1.0, lambda i: float(i), lambda i: 0.0 if i == 1 else float(i)),
    "sec4_4": (lambda i: float(i), lambda i: float(i), lambda i: 0.0 if i == 1 else float(i)),
}


def monodisperse(N, size=32, amount=10.0):
    f = np.zeros(N)
    f[size - 1] = amount
    return f


@pytest.fixture
def kernel():
    return KernelSpec.uniform_binary()


@pytest.fixture(params=sorted(MODELS))
def scenario_name(request):
    return request.param


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    def report(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE_LINES.append(f"criterion {number}: {status}  {title}  {detail}".rstrip())
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
