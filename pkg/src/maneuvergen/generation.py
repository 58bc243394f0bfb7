"""Inference-time generation: translation, expansion and scenario mixing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .errors import ParameterError, ShapeError
from .metrics import ssim_1d
from .networks import assemble_and_crop
from .synth import SIGNAL_NAMES, Maneuver
from .templates import Template, load_template_json

__all__ = [
    "Scenario",
    "ssim_1d",
    "sample_simplex",
    "draw_alphas",
    "mix_codes",
    "encode_templates",
    "translate",
    "expand_maneuver",
    "generate_from_scenario",
    "envelope_compliance",
]


@dataclass
class Scenario:
    """K templates whose content codes span the admissible region."""

    templates: list

    def __post_init__(self):
        self.templates = list(self.templates)
        if not self.templates:
            raise ParameterError("a scenario needs at least one template")
        lengths = {t.length for t in self.templates}
        if len(lengths) != 1:
            raise ParameterError(f"scenario templates differ in length: {sorted(lengths)}")

    @property
    def k(self):
        return len(self.templates)

    @property
    def length(self):
        return self.templates[0].length

    @classmethod
    def load(cls, path):
        loaded = load_template_json(path)
        return cls(loaded if isinstance(loaded, list) else [loaded])


def model_dtype(model):
    dtype = getattr(model, "dtype", None)
    if isinstance(dtype, torch.dtype):
        return dtype
    return next(model.parameters()).dtype


def _names(n_signals):
    return SIGNAL_NAMES[:n_signals] if n_signals <= len(SIGNAL_NAMES) else tuple(f"s{i}" for i in range(n_signals))


def sample_simplex(k: int, seed=None) -> np.ndarray:
    """One draw from the symmetric Dirichlet Dir(1, ..., 1) of order ``k``.

    ``seed`` may be an int, None or a ``numpy.random.Generator``.
    """
    if k < 1:
        raise ParameterError(f"simplex order must be >= 1, got {k}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.dirichlet(np.ones(k))


def draw_alphas(k: int, n: int, seed) -> np.ndarray:
    """The (n, k) mixing weights ``generate_from_scenario`` uses for ``seed``."""
    rng = np.random.default_rng(seed)
    return np.stack([sample_simplex(k, rng) for _ in range(n)]) if n else np.zeros((0, k))


def mix_codes(alphas, codes):
    """Convex combination of stacked content codes.

    ``alphas`` is (n, K) and ``codes`` (K, C, T'); returns (n, C, T').
    """
    if alphas.shape[-1] != codes.shape[0]:
        raise ShapeError(f"{alphas.shape[-1]} weights for {codes.shape[0]} codes")
    return torch.tensordot(alphas, codes, dims=([1], [0]))


@torch.no_grad()
def _encode_one(model, template: Template, dtype):
    x1 = torch.as_tensor(template.values, dtype=dtype)[None]
    return model.encode_template(x1, template.signal_index)[0]


def encode_templates(model, templates: Sequence[Template]):
    """Content codes of each template, encoded one at a time, stacked as (K, C, T')."""
    dtype = model_dtype(model)
    return torch.stack([_encode_one(model, t, dtype) for t in templates])


def _style_draws(model, n, seed, dtype):
    gen = torch.Generator().manual_seed(int(seed))
    return torch.randn(n, model.style_dim, generator=gen, dtype=torch.float64).to(dtype)


def _to_maneuvers(x):
    arr = x.detach().cpu().numpy()
    names = _names(arr.shape[1])
    return [Maneuver(a, names) for a in arr]


@torch.no_grad()
def translate(model, template: Template, n_samples: int, seed: int = 0) -> list[Maneuver]:
    """``n_samples`` maneuvers G2(E1(template), c2) with fresh style draws."""
    if n_samples < 0:
        raise ParameterError("n_samples must be nonnegative")
    if n_samples == 0:
        return []
    dtype = model_dtype(model)
    c1 = _encode_one(model, template, dtype)
    c2 = _style_draws(model, n_samples, seed, dtype)
    codes = c1[None].repeat(n_samples, *([1] * c1.ndim))
    return _to_maneuvers(model.generate(codes, c2))


@torch.no_grad()
def generate_from_scenario(model, scenario: Scenario, n_samples: int, seed: int = 0, alphas=None) -> list[Maneuver]:
    """Decode random points of the scenario's latent simplex.

    Mixing weights come from ``draw_alphas(K, n_samples, seed)`` unless
    ``alphas`` (n_samples, K) is given; style codes are drawn exactly as in
    ``translate`` for the same seed.
    """
    if n_samples < 0:
        raise ParameterError("n_samples must be nonnegative")
    if n_samples == 0:
        return []
    dtype = model_dtype(model)
    codes = encode_templates(model, scenario.templates)
    if alphas is None:
        alphas = draw_alphas(scenario.k, n_samples, seed)
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (n_samples, scenario.k):
        raise ShapeError(f"alphas must be ({n_samples}, {scenario.k}), got {alphas.shape}")
    c2 = _style_draws(model, n_samples, seed, dtype)
    mixed = mix_codes(torch.as_tensor(alphas, dtype=dtype), codes)
    return _to_maneuvers(model.generate(mixed, c2))


def resolve_offset(p, extra):
    if p == "center":
        if extra % 2:
            raise ParameterError("center offset needs an even M - N")
        return extra // 2
    p = int(p)
    if not 0 <= p <= extra:
        raise ParameterError(f"offset {p} outside [0, {extra}]")
    return p


@torch.no_grad()
def expand_maneuver(model, x12, p="center", c3_seed: int = 0) -> Maneuver:
    """Extend an L x N maneuver to L x M; x12 sits intact at offset (M - N) - p."""
    values = x12.values if isinstance(x12, Maneuver) else np.asarray(x12)
    dtype = model_dtype(model)
    x = torch.as_tensor(values, dtype=dtype)[None]
    extra = model.cfg.m - x.shape[-1]
    p = resolve_offset(p, extra)
    gen = torch.Generator().manual_seed(int(c3_seed))
    c3 = torch.randn(1, model.expansion_dim, generator=gen, dtype=torch.float64).to(dtype)
    f1, f2 = model.expand(x, c3)
    return _to_maneuvers(assemble_and_crop(f1, x, f2, p))[0]


def envelope_compliance(maneuvers: Sequence[Maneuver], templates: Sequence[Template], channel: int = 0, margin: float = 0.1) -> np.ndarray:
    """Per maneuver, the fraction of samples of ``channel`` within the templates' min/max envelope +- margin."""
    stack = np.stack([t.values for t in templates])
    lo = stack.min(axis=0) - margin
    hi = stack.max(axis=0) + margin
    out = []
    for m in maneuvers:
        x = m.values[channel]
        out.append(np.mean((x >= lo) & (x <= hi)))
    return np.asarray(out)
