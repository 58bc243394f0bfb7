import numpy as np
import pytest
import torch

from maneuvergen.templates import Template


def trapezoid(T=512, ramp=64, level=0.8):
    """0 for T/4 samples, linear ramp to ``level``, hold, ramp back to 0."""
    q = T // 4
    bps = [(0, 0.0), (q - 1, 0.0), (q - 1 + ramp, level), (T - q - ramp, level), (T - q, 0.0), (T - 1, 0.0)]
    t = np.arange(T)
    return np.interp(t, [b[0] for b in bps], [b[1] for b in bps])


def assert_piecewise_linear(tpl):
    ts = np.array([t for t, _ in tpl.breakpoints])
    vs = np.array([v for _, v in tpl.breakpoints])
    assert ts[0] == 0 and ts[-1] == tpl.length - 1
    assert np.all(np.diff(ts) > 0)
    assert np.all((tpl.values >= 0) & (tpl.values <= 1))
    # independent re-interpolation, segment by segment
    for (t0, v0), (t1, v1) in zip(tpl.breakpoints, tpl.breakpoints[1:]):
        seg = np.arange(t0, t1 + 1)
        expect = v0 + (v1 - v0) * (seg - t0) / (t1 - t0)
        assert np.array_equal(tpl.values[seg], expect) or np.allclose(tpl.values[seg], expect, rtol=0, atol=1e-15)
    assert np.array_equal(vs, tpl.values[ts])


@pytest.fixture
def trapezoid_signal():
    return trapezoid()


def step_template(T, lo_idx, hi_idx, low=0.1, high=0.9):
    """Template at ``high`` on [lo_idx, hi_idx) and ``low`` elsewhere (one-sample edges)."""
    bps = []
    if lo_idx > 0:
        bps += [(0, low), (lo_idx - 1, low)]
    bps += [(lo_idx, high), (hi_idx - 1, high)]
    if hi_idx < T:
        bps += [(hi_idx, low), (T - 1, low)]
    return Template(tuple(bps), 0)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


@pytest.fixture(scope="session")
def desk_run():
    """The desk-scale training run shared by the trained-model tests."""
    from desk import desk_training_run

    return desk_training_run()
