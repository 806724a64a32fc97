import numpy as np
import pytest

from wptconvex import RectifierParams, build_model, builtin_waveform

PINNED_PARAMS = {
    "default": RectifierParams(),
    "high_load": RectifierParams(i_s=3e-6, n_ideality=1.2, v_t=0.025, r_ant=50.0, r_load=10000.0, trunc_order=6),
    "order8": RectifierParams(i_s=2e-5, n_ideality=1.0, v_t=0.02586, r_ant=75.0, r_load=1600.0, trunc_order=8),
}

ACCEPTANCE_LINES = []


def pinned_models():
    for pname, params in PINNED_PARAMS.items():
        for wf in ("cw", "gaussian"):
            yield f"{pname}-{wf}", build_model(params, builtin_waveform(wf, params.trunc_order))


@pytest.fixture(scope="session")
def model():
    params = RectifierParams()
    return build_model(params, builtin_waveform("cw", params.trunc_order))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
