import itertools

import numpy as np
import pytest
import torch

from conftest import step_template
from maneuvergen.coverage import compile_indicators, eval_search, parse, parse_branches
from maneuvergen.errors import ParameterError, SearchError
from maneuvergen.generation import Scenario
from maneuvergen.networks import ManeuverGAN, tiny_config
from maneuvergen.search import MockGenerator, SearchParams, SearchResult, automate, automate_multi, write_report

T = 512
# alpha_0 pinned near 0.5 and alpha_1 near 0.3 through slice means of the speed channel
NARROW = (
    "mean(vehicle_speed[20:150]) > 0.495 and mean(vehicle_speed[20:150]) < 0.505"
    " and mean(vehicle_speed[190:320]) > 0.335 and mean(vehicle_speed[190:320]) < 0.345"
)


def block_scenario():
    return Scenario([step_template(T, 0, 170), step_template(T, 170, 340), step_template(T, 340, T)])


@pytest.fixture(scope="module")
def mock():
    return MockGenerator(T)


def test_feasible_region_nonempty_by_grid(mock):
    sc = block_scenario()
    fn = compile_indicators(parse(NARROW))
    codes = torch.stack([torch.as_tensor(t.values)[None].expand(3, -1) for t in sc.templates])
    feasible = 0
    grid = np.linspace(0, 1, 201)
    c2_box = [torch.full((1, 8), v, dtype=torch.float64) for v in (-1.0, 0.0, 1.0)]
    for a0, a1 in itertools.product(grid, grid):
        if a0 + a1 > 1:
            continue
        alpha = torch.tensor([a0, a1, 1 - a0 - a1], dtype=torch.float64)
        c1 = torch.tensordot(alpha, codes, dims=1)[None]
        for c2 in c2_box:
            if fn(mock.generate(c1, c2))[0, 0] < 0:
                feasible += 1
    assert feasible > 0


def test_tautology_found_at_first_sample(mock):
    sc = block_scenario()
    fn = compile_indicators(parse("mean(vehicle_speed[0:10]) > -1"))
    r = automate(mock, sc, fn, 0, SearchParams(seed=0))
    assert r.status == "found" and r.phase == "sampling" and r.n_sampling == 1
    assert len(r.trace) == 1 and r.trace[0] < 0


def test_infeasible_times_out(mock):
    sc = block_scenario()
    fn = compile_indicators(parse("max(vehicle_speed[0:512]) < -1"))
    params = SearchParams(n_sim=10, n_gd=20)
    r = automate(mock, sc, fn, 0, params)
    assert r.status == "timeout" and r.maneuver is None
    assert len(r.trace) == 30 and min(r.trace) >= 1
    assert r.evaluations <= params.n_sim + params.n_gd


def test_zero_budget_is_immediate_timeout(mock):
    before = mock.calls
    r = automate(mock, block_scenario(), compile_indicators(parse("max(vehicle_speed[0:4]) > 0.5")), 0, SearchParams(0, 0))
    assert r.status == "timeout" and r.evaluations == 0 and r.trace == []
    assert mock.calls == before


def test_params_validated():
    with pytest.raises(ParameterError):
        SearchParams(n_sim=-1)
    with pytest.raises(ParameterError):
        SearchParams(eta=0)


def test_gradient_phase_invariants(mock):
    sc = block_scenario()
    fn = compile_indicators(parse(NARROW))
    r = automate(mock, sc, fn, 0, SearchParams(n_sim=50, n_gd=200, seed=1))
    assert r.found
    phase1 = r.trace[: r.n_sampling]
    running_min = np.minimum.accumulate(phase1)
    assert np.all(np.diff(running_min) <= 0)
    for alpha in r.alpha_trace[r.n_sampling:]:
        assert np.all(alpha > 0) and abs(alpha.sum() - 1) <= 1e-9
    # soundness, recomputed from the returned maneuver alone
    assert eval_search(fn, r.maneuver)[0] < 0


def test_n_sim_zero_starts_from_barycentre(mock):
    fn = compile_indicators(parse(NARROW))
    r = automate(mock, block_scenario(), fn, 0, SearchParams(n_sim=0, n_gd=1))
    assert np.allclose(r.alpha_trace[0], 1 / 3)


def test_hybrid_beats_pure_sampling(mock):
    sc = block_scenario()
    fn = compile_indicators(parse(NARROW))
    hybrid = [automate(mock, sc, fn, 0, SearchParams(50, 200, 0.05, seed)).found for seed in range(10)]
    sampling = [automate(mock, sc, fn, 0, SearchParams(250, 0, 0.05, seed)).found for seed in range(10)]
    assert sum(hybrid) >= 9
    assert sum(sampling) <= 3


def test_multi_branch_results(mock):
    sc = block_scenario()
    fn = compile_indicators(parse_branches("mean(vehicle_speed[0:10]) > -1\nmax(vehicle_speed[0:512]) < -1"))
    params = SearchParams(n_sim=5, n_gd=5)
    seq = automate_multi(mock, sc, fn, params)
    par = automate_multi(mock, sc, fn, params, parallel=True)
    assert [r.status for r in seq] == ["found", "timeout"]
    for a, b in zip(seq, par):
        assert a.status == b.status and a.trace == b.trace
    single = compile_indicators(parse("mean(vehicle_speed[0:10]) > -1"))
    (only,) = automate_multi(mock, sc, single, params)
    direct = automate(mock, sc, single, 0, params)
    assert only.trace == direct.trace and np.array_equal(only.maneuver, direct.maneuver)


def test_branch_errors_are_isolated(mock):
    class Exploding(MockGenerator):
        def generate(self, c1, c2):
            out = super().generate(c1, c2)
            return out * torch.tensor(float("nan")) if c2.requires_grad else out

    sc = block_scenario()
    fn = compile_indicators(parse_branches("mean(vehicle_speed[0:10]) > -1\nmax(vehicle_speed[0:512]) < -1"))
    results = automate_multi(Exploding(T), sc, fn, SearchParams(n_sim=2, n_gd=3))
    assert [r.status for r in results] == ["found", "error"]
    assert "non-finite" in results[1].message
    with pytest.raises(SearchError):
        automate(Exploding(T), sc, fn, 1, SearchParams(n_sim=2, n_gd=3))


def test_trained_model_smoke():
    torch.manual_seed(0)
    model = ManeuverGAN(tiny_config()).eval()
    sc = Scenario([step_template(32, 0, 16), step_template(32, 16, 32)])
    fn = compile_indicators(parse_branches("mean(vehicle_speed[0:32]) > -1\nmean(vehicle_speed[0:16]) < 0.4"))
    results = automate_multi(model, sc, fn, SearchParams(n_sim=5, n_gd=10))
    assert results[0].found
    assert results[1].status in ("found", "timeout")
    for r in results:
        assert r.evaluations <= 15
        if r.found:
            assert eval_search(fn, torch.as_tensor(r.maneuver))[r.branch] < 0


def test_report_json(tmp_path, mock):
    import json

    fn = compile_indicators(parse("max(vehicle_speed[0:512]) < -1"))
    params = SearchParams(n_sim=3, n_gd=2)
    r = automate(mock, block_scenario(), fn, 0, params)
    rep = json.loads(write_report(r, params, tmp_path / "r.json").read_text())
    assert rep["status"] == "timeout" and len(rep["trace"]) == 5
    assert rep["phase_boundaries"] == {"sampling": [0, 3], "gradient": [3, 5]}
    assert rep["params"]["n_sim"] == 3 and rep["maneuver_path"] is None
