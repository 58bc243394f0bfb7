"""End-to-end optimization of the composite objective, and cycle-SSIM evaluation."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import ParameterError, ShapeError, TrainingError
from .losses import (
    DISCRIMINATOR_TERMS,
    GENERATOR_TERMS,
    Batch,
    composite_discriminator,
    composite_generator,
    discriminator_terms,
    generator_terms,
)
from .metrics import ssim_1d
from .networks import ManeuverGAN, ModelConfig, save_checkpoint
from .templates import Template

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "epoch", *GENERATOR_TERMS, *DISCRIMINATOR_TERMS, "gen_total", "dis_total", "wall_time")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr_gen: float = 2e-4
    lr_dis: float = 2e-4
    betas: tuple = (0.5, 0.999)
    seed: int = 0
    eval_samples_per_template: int = 4

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.lr_gen < 0 or self.lr_dis < 0:
            raise ParameterError("learning rates must be nonnegative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ParameterError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class PairedArrays:
    """Templates, their signal indices, and the maneuvers they were cut from."""

    x1: np.ndarray
    signal_index: np.ndarray
    x2: np.ndarray

    def __len__(self):
        return len(self.x1)


def paired_arrays(pairs, mode="cycle") -> PairedArrays:
    """Flatten ``build_paired_dataset`` output into training arrays.

    ``mode="cycle"`` keeps one pair per maneuver, taking channel ``i % L``
    for the i-th maneuver; ``mode="all"`` keeps every channel.
    """
    x1, idx, x2 = [], [], []
    for i, (templates, maneuver) in enumerate(pairs):
        chosen = templates if mode == "all" else [templates[i % len(templates)]]
        for tpl in chosen:
            x1.append(tpl.values)
            idx.append(tpl.signal_index)
            x2.append(maneuver.values)
    if not x1:
        raise ParameterError("paired dataset is empty")
    return PairedArrays(
        np.asarray(x1, dtype=np.float32),
        np.asarray(idx, dtype=np.int64),
        np.asarray(x2, dtype=np.float32),
    )


def build_model(cfg: ModelConfig | None = None, seed: int = 0) -> ManeuverGAN:
    torch.manual_seed(seed)
    return ManeuverGAN(cfg)


@dataclass
class TrainResult:
    metrics: list = field(default_factory=list)
    checkpoint: Path | None = None

    def column(self, name):
        return np.array([row[name] for row in self.metrics])


def _check_finite(terms, step):
    for name, value in terms.items():
        if not math.isfinite(float(value.detach())):
            raise TrainingError(f"non-finite loss term {name!r} ({float(value.detach())}) at step {step}")


def _set_requires_grad(params, flag):
    for p in params:
        p.requires_grad_(flag)


def train(
    model: ManeuverGAN,
    paired: PairedArrays,
    long_maneuvers: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    checkpoint_dir=None,
    log_path=None,
    max_steps: int | None = None,
) -> TrainResult:
    """Alternate one discriminator and one generator-group update per step."""
    mcfg = model.cfg
    if len(paired) == 0 or len(long_maneuvers) == 0:
        raise ParameterError("training needs non-empty paired and long-maneuver datasets")
    if paired.x2.shape[1:] != (mcfg.n_signals, mcfg.n) or paired.x1.shape[1] != mcfg.n:
        raise ShapeError(f"paired data shape {paired.x2.shape[1:]} does not match config n={mcfg.n}")
    if long_maneuvers.shape[1:] != (mcfg.n_signals, mcfg.m):
        raise ShapeError(f"long maneuvers shape {long_maneuvers.shape[1:]} does not match config m={mcfg.m}")

    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt_g = torch.optim.Adam(model.generator_parameters(), lr=cfg.lr_gen, betas=cfg.betas)
    opt_d = torch.optim.Adam(model.discriminator_parameters(), lr=cfg.lr_dis, betas=cfg.betas)
    x1_all = torch.from_numpy(paired.x1)
    idx_all = torch.from_numpy(paired.signal_index)
    x2_all = torch.from_numpy(paired.x2)
    x3_all = torch.from_numpy(np.asarray(long_maneuvers, dtype=np.float32))
    extra = mcfg.m - mcfg.n

    writer = None
    fh = None
    if log_path is not None:
        log_path = Path(log_path)
        new = not log_path.exists() or log_path.stat().st_size == 0
        fh = open(log_path, "a", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        if new:
            writer.writeheader()

    result = TrainResult()
    model.train()
    start = time.perf_counter()
    step = 0
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(paired))
            for lo in range(0, len(order) - cfg.batch_size + 1, cfg.batch_size):
                if max_steps is not None and step >= max_steps:
                    break
                sel = torch.from_numpy(order[lo:lo + cfg.batch_size])
                sel3 = torch.from_numpy(rng.integers(0, len(x3_all), size=cfg.batch_size))
                b = cfg.batch_size
                batch = Batch(
                    x1=x1_all[sel],
                    signal_index=idx_all[sel],
                    x2=x2_all[sel],
                    x3=x3_all[sel3],
                    c2=torch.randn(b, mcfg.style_dim, generator=gen),
                    c3=torch.randn(b, mcfg.expansion_dim, generator=gen),
                    p=torch.randint(0, extra + 1, (b,), generator=gen),
                )

                opt_d.zero_grad(set_to_none=True)
                dterms = discriminator_terms(model, batch)
                dis_total = composite_discriminator(dterms)
                _check_finite(dterms, step)
                dis_total.backward()
                opt_d.step()

                d_params = model.discriminator_parameters()
                _set_requires_grad(d_params, False)
                try:
                    opt_g.zero_grad(set_to_none=True)
                    gterms = generator_terms(model, batch)
                    _check_finite(gterms, step)
                    gen_total = composite_generator(gterms, mcfg)
                    gen_total.backward()
                    opt_g.step()
                finally:
                    _set_requires_grad(d_params, True)

                row = {"step": step, "epoch": epoch}
                row.update({k: v.item() for k, v in gterms.items()})
                row.update({k: v.item() for k, v in dterms.items()})
                row["gen_total"] = gen_total.item()
                row["dis_total"] = dis_total.item()
                row["wall_time"] = time.perf_counter() - start
                result.metrics.append(row)
                if writer is not None:
                    writer.writerow(row)
                step += 1
            log.info("epoch %d done, step %d, gen %.4f dis %.4f", epoch, step,
                     result.metrics[-1]["gen_total"] if result.metrics else float("nan"),
                     result.metrics[-1]["dis_total"] if result.metrics else float("nan"))
    finally:
        if fh is not None:
            fh.close()
    model.eval()
    if checkpoint_dir is not None:
        result.checkpoint = save_checkpoint(model, checkpoint_dir, extra={"train": cfg.to_dict(), "steps": step})
    return result


def _as_template_arrays(templates):
    if isinstance(templates, PairedArrays):
        return templates.x1, templates.signal_index
    if not templates:
        raise ParameterError("need at least one template")
    x1 = np.stack([t.values for t in templates]).astype(np.float32)
    idx = np.array([t.signal_index for t in templates], dtype=np.int64)
    return x1, idx


@torch.no_grad()
def cycle_reconstructions(model, x1, signal_index, c2):
    """X121 = G1(E2(G2(E1(X1), c2))[0]) for a batch."""
    c1 = model.encode_template(x1, signal_index)
    x12 = model.generate(c1, c2)
    c1_hat, _ = model.encode_maneuver(x12)
    return model.decode_template(c1_hat, signal_index)


@torch.no_grad()
def evaluate_cycle_ssim(
    model,
    templates: Sequence[Template] | PairedArrays,
    n_draws: int = 4,
    seed: int = 0,
    window: int = 32,
    chunk: int = 256,
) -> float:
    """Grand mean SSIM between each template and ``n_draws`` cycle translations."""
    x1, idx = _as_template_arrays(templates)
    gen = torch.Generator().manual_seed(seed)
    style_dim = model.style_dim
    window = min(window, x1.shape[1])
    scores = []
    for lo in range(0, len(x1), chunk):
        xb = torch.from_numpy(x1[lo:lo + chunk])
        ib = torch.from_numpy(idx[lo:lo + chunk])
        k = len(xb)
        c2 = torch.randn(n_draws, k, style_dim, generator=gen)
        xr = xb.repeat(n_draws, 1)
        ir = ib.repeat(n_draws)
        rec = cycle_reconstructions(model, xr, ir, c2.reshape(n_draws * k, style_dim)).double().numpy()
        for a, b in zip(xr.double().numpy(), rec):
            scores.append(ssim_1d(a, b, window))
    return float(np.mean(scores))
