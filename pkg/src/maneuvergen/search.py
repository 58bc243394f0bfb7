"""Scenario-constrained latent search for maneuvers that cover a branch.

Phase 1 draws mixing weights from the scenario simplex and style codes from
N(0, I), keeping the best draw. Phase 2 reparameterizes the best weights as
logits and runs plain gradient descent on (logits, style code) against the
branch's coverage indicator. The effective weights are always a normalized
sigmoid, so the search never leaves the scenario's latent hull.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .coverage import SearchFn
from .errors import ParameterError, SearchError
from .generation import Scenario, encode_templates, mix_codes, model_dtype
from .synth import SIGNAL_NAMES, Maneuver

LOGIT_CLAMP = 1e-6


@dataclass
class SearchParams:
    n_sim: int = 50
    n_gd: int = 200
    eta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_sim < 0 or self.n_gd < 0:
            raise ParameterError("n_sim and n_gd must be nonnegative")
        if not self.eta > 0:
            raise ParameterError("eta must be positive")


@dataclass
class SearchResult:
    status: str                      # "found", "timeout" or "error"
    branch: int = 0
    maneuver: np.ndarray | None = None
    phase: str | None = None         # "sampling" or "gradient" when found
    trace: list = field(default_factory=list)
    alpha_trace: list = field(default_factory=list)
    alpha: np.ndarray | None = None
    c2: np.ndarray | None = None
    n_sampling: int = 0
    n_gradient: int = 0
    message: str = ""

    @property
    def found(self):
        return self.status == "found"

    @property
    def evaluations(self):
        return self.n_sampling + self.n_gradient

    def to_maneuver(self, signal_names=SIGNAL_NAMES):
        if self.maneuver is None:
            return None
        return Maneuver(self.maneuver, signal_names[: self.maneuver.shape[0]])

    def report(self, params: SearchParams, maneuver_path=None):
        return {
            "status": self.status,
            "branch": self.branch,
            "phase": self.phase,
            "params": {"n_sim": params.n_sim, "n_gd": params.n_gd, "eta": params.eta, "seed": params.seed},
            "trace": [float(s) for s in self.trace],
            "phase_boundaries": {"sampling": [0, self.n_sampling],
                                 "gradient": [self.n_sampling, self.n_sampling + self.n_gradient]},
            "final_alpha": None if self.alpha is None else [float(a) for a in self.alpha],
            "final_c2": None if self.c2 is None else [float(c) for c in self.c2],
            "maneuver_path": None if maneuver_path is None else str(maneuver_path),
            "message": self.message,
        }


class MockGenerator:
    """Closed-form stand-in for the trained translation networks.

    Encoding broadcasts a template to all L channels; generation returns
    ``clamp(c1 + W c2, 0, 1)`` with a fixed, seeded linear map ``W`` of
    small norm.
    """

    def __init__(self, length, n_signals=3, style_dim=8, w_scale=0.02, seed=0, dtype=torch.float64):
        gen = torch.Generator().manual_seed(seed)
        self.length = length
        self.n_signals = n_signals
        self.style_dim = style_dim
        self.dtype = dtype
        self.weight = (w_scale * torch.randn(n_signals * length, style_dim, generator=gen, dtype=torch.float64)).to(dtype)
        self.calls = 0

    def encode_template(self, x1, signal_index=None):
        return x1[:, None, :].expand(-1, self.n_signals, -1).to(self.dtype)

    def generate(self, c1, c2):
        self.calls += 1
        shift = (c2 @ self.weight.T).reshape(c2.shape[0], self.n_signals, self.length)
        return torch.clamp(c1 + shift, 0.0, 1.0)


def _branch_rng(seed, branch):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(branch)]))


def _indicator(search, h, branch):
    return search(h)[0, branch]


def automate(model, scenario: Scenario, search: SearchFn, branch: int = 0, params: SearchParams = SearchParams()) -> SearchResult:
    """Search the scenario's latent simplex for a maneuver with indicator < 0."""
    if not 0 <= branch < search.n_branches:
        raise ParameterError(f"branch {branch} outside [0, {search.n_branches})")
    result = SearchResult(status="timeout", branch=branch)
    if params.n_sim == 0 and params.n_gd == 0:
        result.message = "zero search budget"
        return result

    rng = _branch_rng(params.seed, branch)
    dtype = model_dtype(model)
    codes = encode_templates(model, scenario.templates)
    k = scenario.k
    style_dim = model.style_dim

    def decode(alpha, c2):
        return model.generate(mix_codes(alpha[None].to(dtype), codes), c2[None].to(dtype))

    s_min = math.inf
    best_alpha = best_c2 = None
    with torch.no_grad():
        for _ in range(params.n_sim):
            alpha = rng.dirichlet(np.ones(k))
            c2 = rng.standard_normal(style_dim)
            h = decode(torch.from_numpy(alpha), torch.from_numpy(c2))
            s = float(_indicator(search, h, branch))
            result.n_sampling += 1
            result.trace.append(s)
            result.alpha_trace.append(alpha)
            if s < 0:
                result.status, result.phase = "found", "sampling"
                result.maneuver = h[0].numpy()
                result.alpha, result.c2 = alpha, c2
                return result
            if s < s_min:
                s_min, best_alpha, best_c2 = s, alpha, c2

    if best_alpha is None:
        best_alpha = np.full(k, 1.0 / k)
        best_c2 = np.zeros(style_dim)
    result.alpha, result.c2 = best_alpha, best_c2

    clipped = np.clip(best_alpha, LOGIT_CLAMP, 1 - LOGIT_CLAMP)
    gamma = torch.tensor(np.log(clipped / (1 - clipped)), dtype=torch.float64, requires_grad=True)
    c2 = torch.tensor(best_c2, dtype=torch.float64, requires_grad=True)
    for step in range(params.n_gd):
        a = torch.sigmoid(gamma)
        alpha = a / a.sum()
        h = decode(alpha, c2)
        s = _indicator(search, h, branch)
        result.n_gradient += 1
        s_val = s.item()
        result.trace.append(s_val)
        result.alpha_trace.append(alpha.detach().numpy().copy())
        result.alpha = alpha.detach().numpy().copy()
        result.c2 = c2.detach().numpy().copy()
        if s_val < 0:
            result.status, result.phase = "found", "gradient"
            result.maneuver = h[0].detach().numpy()
            return result
        if s.requires_grad:
            g_gamma, g_c2 = torch.autograd.grad(s, [gamma, c2], allow_unused=True)
        else:
            g_gamma = g_c2 = None
        g_gamma = torch.zeros_like(gamma) if g_gamma is None else g_gamma
        g_c2 = torch.zeros_like(c2) if g_c2 is None else g_c2
        if not (torch.isfinite(g_gamma).all() and torch.isfinite(g_c2).all()):
            raise SearchError(f"non-finite gradient at gradient step {step} (branch {branch})")
        with torch.no_grad():
            gamma -= params.eta * g_gamma
            c2 -= params.eta * g_c2
    return result


def automate_multi(model, scenario: Scenario, search: SearchFn, params: SearchParams = SearchParams(),
                   parallel: bool = False, max_workers=None) -> list[SearchResult]:
    """One independent search per branch indicator; errors stay within their branch."""

    def run(branch):
        try:
            return automate(model, scenario, search, branch, params)
        except (SearchError, ValueError, RuntimeError) as exc:
            return SearchResult(status="error", branch=branch, message=str(exc))

    branches = range(search.n_branches)
    if parallel and search.n_branches > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(run, branches))
    return [run(b) for b in branches]


def write_report(result: SearchResult, params: SearchParams, path, maneuver_path=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(result.report(params, maneuver_path), indent=2))
    return path
