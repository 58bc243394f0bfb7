"""The nine acceptance criteria, each reporting one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import assert_piecewise_linear, step_template, trapezoid
from maneuvergen.cli import run
from maneuvergen.coverage import And, Not, Or, compile_indicators, eval_bool, eval_search, parse, parse_branches
from maneuvergen.generation import Scenario, draw_alphas, expand_maneuver, generate_from_scenario, translate
from maneuvergen.networks import ManeuverGAN, assemble_and_crop, load_checkpoint, save_checkpoint, tiny_config
from maneuvergen.search import MockGenerator, SearchParams, automate
from maneuvergen.synth import Maneuver, SimConfig, load_dataset, save_dataset, simulate_batch
from maneuvergen.templates import Template, extract_template, load_templates, save_template_json, save_templates
from maneuvergen.training import evaluate_cycle_ssim
from strategies import min_gap, random_ast, random_maneuver


@pytest.fixture
def verdict(capsys):
    def report(number, name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {name}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
        assert ok, detail
    return report


def central_diff(f, x, h):
    g = torch.zeros_like(x)
    flat = x.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + h
            fp = f(x).item()
            flat[i] = old - h
            fm = f(x).item()
            flat[i] = old
            g.view(-1)[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return ((a - b).norm() / b.norm()).item()


def test_1_indicator_sign_soundness(verdict):
    rng = np.random.default_rng(2024)
    T = 16
    start = time.perf_counter()
    checked = agree = 0
    while checked < 10_000:
        ast = random_ast(rng, T)
        x = random_maneuver(rng, T)
        if min_gap(ast, x) <= 1e-6:
            continue
        s = eval_search(compile_indicators(ast), x)[0]
        agree += bool(s < 0) == eval_bool(ast, x)
        checked += 1
    seconds = time.perf_counter() - start
    verdict(1, "indicator sign soundness", agree == checked and seconds < 60,
            f"{agree}/{checked} agree in {seconds:.1f}s")


def test_2_de_morgan_and_double_negation(verdict):
    rng = np.random.default_rng(7)
    failures = 0
    for _ in range(1000):
        a, b = random_ast(rng, 16, max_depth=3), random_ast(rng, 16, max_depth=3)
        x = torch.tensor(random_maneuver(rng, 16))
        ok = torch.equal(compile_indicators(Not(And(a, b)))(x), compile_indicators(Or(Not(a), Not(b)))(x))
        ok &= torch.equal(compile_indicators(Not(Or(a, b)))(x), compile_indicators(And(Not(a), Not(b)))(x))
        ok &= torch.equal(compile_indicators(Not(Not(a)))(x), compile_indicators(a)(x))
        failures += not ok
    verdict(2, "De Morgan / double negation exact", failures == 0, f"{failures} failures in 1000")


def test_3_simplex_suite(verdict):
    problems = []
    for k in (1, 2, 3, 8):
        d = draw_alphas(k, 10_000, seed=k)
        if np.any(d < 0) or np.max(np.abs(d.sum(axis=1) - 1)) > 1e-9:
            problems.append(f"K={k} invariants")
        if k == 3 and np.any(np.abs(d.mean(axis=0) - 1 / 3) > 0.02):
            problems.append(f"K=3 mean {d.mean(axis=0)}")
    torch.manual_seed(0)
    model = ManeuverGAN(tiny_config()).eval()
    tpls = [Template(((0, 0.0), (31, 0.9))), Template(((0, 0.5), (31, 0.5)), 1), Template(((0, 0.8), (31, 0.1)), 2)]
    for i in range(3):
        alphas = np.zeros((8, 3))
        alphas[:, i] = 1
        mixed = generate_from_scenario(model, Scenario(tpls), 8, seed=i, alphas=alphas)
        direct = translate(model, tpls[i], 8, seed=i)
        if not all(a.values.tobytes() == b.values.tobytes() for a, b in zip(mixed, direct)):
            problems.append(f"vertex {i} not bit-exact")
    verdict(3, "simplex sampling and vertex identity", not problems, "; ".join(problems) or "all invariants hold")


class StubExpander:
    """Expansion stage with random flanks: only the crop arithmetic is exercised."""

    dtype = torch.float32
    expansion_dim = 4

    def __init__(self, n=512, m=1024):
        self.cfg = tiny_config(n=n, m=m)

    def expand(self, x12, c3):
        gen = torch.Generator().manual_seed(int(1000 * c3.abs().sum()))
        shape = (x12.shape[0], x12.shape[1], self.cfg.m - self.cfg.n)
        return torch.rand(shape, generator=gen), torch.rand(shape, generator=gen)


def test_4_crop_and_expansion_offsets(verdict):
    stub = StubExpander()
    N, M = 512, 1024
    x12 = Maneuver(np.random.default_rng(0).random((3, N)).astype(np.float32))
    start = time.perf_counter()
    bad = [p for p in range(M - N + 1)
           if not np.array_equal(expand_maneuver(stub, x12, p, c3_seed=p).values[:, M - N - p:2 * N - p], x12.values)]
    centre = expand_maneuver(stub, x12, "center").values
    centre_ok = np.array_equal(centre[:, 256:256 + N], x12.values)
    seconds = time.perf_counter() - start
    verdict(4, "crop offsets", not bad and centre_ok and seconds < 60,
            f"{M - N + 1 - len(bad)}/{M - N + 1} offsets intact, center at 256: {centre_ok}, {seconds:.1f}s")


def test_5_gradient_checks(verdict):
    torch.manual_seed(0)
    model = ManeuverGAN(tiny_config()).double().eval()
    c1 = model.encode_template(torch.rand(1, 32, dtype=torch.float64), 0).detach()
    weights = torch.rand(1, 3, 32, dtype=torch.float64)
    c2 = torch.randn(1, 4, dtype=torch.float64, requires_grad=True)
    f2 = lambda c: (weights * model.generate(c1, c)).sum()
    (g2,) = torch.autograd.grad(f2(c2), c2)
    e2 = rel_err(g2, central_diff(f2, c2.detach().clone(), 1e-5))

    x12 = torch.rand(1, 3, 32, dtype=torch.float64)
    c3 = torch.randn(1, 4, dtype=torch.float64, requires_grad=True)

    def f3(c):
        a, b = model.expand(x12, c)
        return (weights * a).sum() + (weights * b).sum()

    (g3,) = torch.autograd.grad(f3(c3), c3)
    e3 = rel_err(g3, central_diff(f3, c3.detach().clone(), 1e-5))

    fn = compile_indicators(parse_branches(
        "mean(vehicle_speed[0:20]) < 0.3 and max(engine_speed[5:30]) > 0.6\n"
        "not (min(selected_gear[10:32]) > 0.2 or mean(engine_speed[0:32]) < 0.5)"
    ))
    x = torch.rand(3, 32, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    es = []
    for b in range(2):
        xg = x.clone().requires_grad_(True)
        (gs,) = torch.autograd.grad(fn(xg)[b], xg)
        es.append(rel_err(gs, central_diff(lambda y: fn(y)[b], x.clone(), 1e-6)))
    ok = e2 < 1e-3 and e3 < 1e-3 and max(es) < 1e-4
    verdict(5, "gradient checks", ok, f"c2 {e2:.1e}, c3 {e3:.1e}, indicators {max(es):.1e}")


NARROW = (
    "mean(vehicle_speed[20:150]) > 0.495 and mean(vehicle_speed[20:150]) < 0.505"
    " and mean(vehicle_speed[190:320]) > 0.335 and mean(vehicle_speed[190:320]) < 0.345"
)


def test_6_hybrid_search_on_mock(verdict):
    T = 512
    mock = MockGenerator(T)
    sc = Scenario([step_template(T, 0, 170), step_template(T, 170, 340), step_template(T, 340, T)])
    fn = compile_indicators(parse(NARROW))
    start = time.perf_counter()
    # brute-force feasibility over the simplex grid and a c2 box
    codes = torch.stack([torch.as_tensor(t.values)[None].expand(3, -1) for t in sc.templates])
    grid = np.array([(a, b, 1 - a - b) for a in np.linspace(0, 1, 201) for b in np.linspace(0, 1, 201) if a + b <= 1 + 1e-12])
    c1 = torch.tensordot(torch.as_tensor(np.clip(grid, 0, 1)), codes, dims=1)
    feasible = 0
    for v in (-1.0, 0.0, 1.0):
        feasible += int((fn(mock.generate(c1, torch.full((len(grid), 8), v, dtype=torch.float64)))[:, 0] < 0).sum())
    hybrid = sum(automate(mock, sc, fn, 0, SearchParams(50, 200, 0.05, s)).found for s in range(10))
    sampling = sum(automate(mock, sc, fn, 0, SearchParams(250, 0, 0.05, s)).found for s in range(10))
    seconds = time.perf_counter() - start
    ok = feasible > 0 and hybrid >= 9 and sampling <= 3 and seconds < 300
    verdict(6, "hybrid search on mock generator", ok,
            f"{feasible} feasible grid points, hybrid {hybrid}/10, sampling-only {sampling}/10, {seconds:.1f}s")


@pytest.mark.slow
def test_7_desk_training_cycle_ssim(desk_run, verdict):
    adv = desk_run.result.column("gen_tran") + desk_run.result.column("gen_exp")
    finite = all(np.isfinite(v) for row in desk_run.result.metrics for v in row.values())
    ok = desk_run.ssim_final >= 0.85 and adv[-1] < adv[0] and finite and desk_run.seconds <= 6 * 3600
    verdict(7, "desk-scale cycle SSIM", ok,
            f"SSIM {desk_run.ssim_init:.3f} -> {desk_run.ssim_final:.3f}, gen adv {adv[0]:.3f} -> {adv[-1]:.3f}, "
            f"{len(adv)} steps, {desk_run.seconds / 60:.1f} min")


def test_8_template_extraction(verdict):
    start = time.perf_counter()
    const = extract_template(np.full(512, 0.4), 0)
    trap_signal = trapezoid(512, 64)
    trap = extract_template(trap_signal, 0)
    errors = [np.max(np.abs(const.values - 0.4)), np.max(np.abs(trap.values - trap_signal))]
    ok = len(const.breakpoints) == 2 and len(trap.breakpoints) == 6 and max(errors) <= 0.05
    rng = np.random.default_rng(0)
    outputs = [const, trap] + [extract_template(x[0], 0) for x in simulate_batch(SimConfig(), 20, 5)]
    outputs += [extract_template(rng.random(256), 1)]
    for tpl in outputs:
        assert_piecewise_linear(tpl)
    seconds = time.perf_counter() - start
    verdict(8, "template extraction", ok and seconds < 60,
            f"breakpoints {len(const.breakpoints)}/{len(trap.breakpoints)}, max error {max(errors):.4f}, "
            f"{len(outputs)} outputs piecewise-linear, {seconds:.1f}s")


def test_9_determinism_and_round_trips(tmp_path, verdict, monkeypatch):
    problems = []
    sim = SimConfig(duration_s=32)
    maneuvers = [Maneuver(x) for x in simulate_batch(sim, 6, 0)]
    save_dataset(maneuvers, tmp_path / "a.sild")
    back = load_dataset(tmp_path / "a.sild")
    if not all(a.values.tobytes() == b.values.tobytes() for a, b in zip(maneuvers, back)):
        problems.append("SILD")
    tpls = [extract_template(m.values[i], i) for m in maneuvers for i in range(3)]
    save_templates(tpls, tmp_path / "a.silt")
    if load_templates(tmp_path / "a.silt") != tpls:
        problems.append("SILT")
    torch.manual_seed(0)
    model = ManeuverGAN(tiny_config())
    save_checkpoint(model, tmp_path / "ck")
    loaded = load_checkpoint(tmp_path / "ck")
    if any(a.numpy().tobytes() != b.numpy().tobytes() for a, b in zip(model.state_dict().values(), loaded.state_dict().values())):
        problems.append("checkpoint")
    if evaluate_cycle_ssim(model, tpls) != evaluate_cycle_ssim(loaded, tpls):
        problems.append("checkpoint metric")

    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SILGAN_SEED", raising=False)
    save_template_json([Template(((0, 0.0), (31, 0.0))), Template(((0, 0.2), (31, 0.8)))], tmp_path / "sc.json")
    (tmp_path / "p.pred").write_text("mean(vehicle_speed[0:32]) > 0.3\nmax(vehicle_speed[0:32]) > 2\n")
    commands = {
        "synth-data": ["synth-data", "--count", "16", "--length", "32", "--seed", "1", "--out", "n.sild"],
        "synth-data (long)": ["synth-data", "--count", "8", "--length", "64", "--seed", "2", "--out", "m.sild"],
        "extract-templates": ["extract-templates", "--data", "n.sild", "--smooth-window", "5", "--min-flat-len", "4",
                              "--out", "t.silt"],
        "train": ["train", "--data", "n.sild", "--long-data", "m.sild", "--model", "tiny", "--epochs", "1",
                  "--batch-size", "8", "--out", "run"],
        "translate": ["translate", "--checkpoint", "run/checkpoint", "--templates", "t.silt", "--n", "3", "--out", "tr.sild"],
        "expand": ["expand", "--checkpoint", "run/checkpoint", "--data", "tr.sild", "--p", "5", "--out", "ex.sild"],
        "compose": ["compose", "--checkpoint", "run/checkpoint", "--scenario", "sc.json", "--n", "4", "--out", "co.sild"],
        "automate": ["automate", "--mock", "--scenario", "sc.json", "--predicate", "p.pred", "--n-sim", "5", "--n-gd", "5",
                     "--out", "auto"],
        "eval": ["eval", "--checkpoint", "run/checkpoint", "--templates", "t.silt", "--out", "eval.json"],
        "plot": ["plot", "--data", "tr.sild", "--templates", "t.silt", "--out", "tr.svg"],
    }
    replayed = 0
    for name, argv in commands.items():
        code = run(argv)
        manifest = tmp_path / f"{argv[-1]}.run.json"
        recorded = json.loads(manifest.read_text())
        if code != recorded["exit_code"] or not recorded["outputs"]:
            problems.append(f"{name} manifest")
            continue
        if run(["--replay", str(manifest)]) != code:
            problems.append(f"{name} replay")
        else:
            replayed += 1
    verdict(9, "determinism and round-trips", not problems,
            "; ".join(problems) or f"SILD/SILT/checkpoint bit-exact, {replayed}/{len(commands)} manifests replayed")
