"""Adversarial, pairing, cycle and reconstruction objectives.

All L1 terms are mean absolute errors per element, averaged over the batch.
Least-squares adversarial terms use targets 1 (real) and 0 (fake).
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ShapeError
from .networks import assemble_and_crop

GENERATOR_TERMS = ("gen_tran", "gen_exp", "pair", "cyc", "id1", "id2", "cr2", "cr3")
DISCRIMINATOR_TERMS = ("dis_tran", "dis_exp")


def _same(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def lsgan_gen(score_fake):
    return ((score_fake - 1) ** 2).mean()


def lsgan_dis(score_real, score_fake):
    return ((score_real - 1) ** 2).mean() + (score_fake ** 2).mean()


# translation and expansion stages share the least-squares form
lsgan_gen_translation = lsgan_gen
lsgan_dis_translation = lsgan_dis
lsgan_gen_expansion = lsgan_gen
lsgan_dis_expansion = lsgan_dis


def pairing_loss(x12, x2, signal_index):
    """L1 between channel l of the translated and of the real maneuver."""
    _same(x12, x2, "pairing_loss")
    rows = torch.arange(x12.shape[0])
    return (x12[rows, signal_index] - x2[rows, signal_index]).abs().mean()


def cycle_loss(x121, x1):
    _same(x121, x1, "cycle_loss")
    return (x121 - x1).abs().mean()


def identity_recon(x, x_rec):
    _same(x, x_rec, "identity_recon")
    return (x - x_rec).abs().mean()


def code_recon_translation(c1, c2, c1_hat, c2_hat):
    """Mean absolute error over the concatenated (c1, c2) code."""
    _same(c1, c1_hat, "code_recon_translation")
    _same(c2, c2_hat, "code_recon_translation")
    total = (c1 - c1_hat).abs().sum() + (c2 - c2_hat).abs().sum()
    return total / (c1.numel() + c2.numel())


def code_recon_expansion(c3, c3_hat):
    _same(c3, c3_hat, "code_recon_expansion")
    return (c3 - c3_hat).abs().mean()


def composite_generator(terms, cfg):
    return (
        cfg.lambda_gen * (terms["gen_tran"] + terms["gen_exp"])
        + cfg.lambda_pair * terms["pair"]
        + cfg.lambda_cyc * terms["cyc"]
        + cfg.lambda_id * (terms["id1"] + terms["id2"])
        + cfg.lambda_cr * (terms["cr2"] + terms["cr3"])
    )


def composite_discriminator(terms):
    return terms["dis_tran"] + terms["dis_exp"]


@dataclass
class Batch:
    """One minibatch plus the latent draws used for it."""

    x1: torch.Tensor        # (B, N) templates
    signal_index: torch.Tensor  # (B,)
    x2: torch.Tensor        # (B, L, N) paired maneuvers
    x3: torch.Tensor        # (B3, L, M) long maneuvers
    c2: torch.Tensor        # (B, d_s)
    c3: torch.Tensor        # (B, d_e)
    p: torch.Tensor         # (B,) crop offsets


def generator_terms(model, batch: Batch):
    """Every generator-side term for one batch, keyed by GENERATOR_TERMS."""
    x1, l, x2 = batch.x1, batch.signal_index, batch.x2
    c1 = model.encode_template(x1, l)
    x12 = model.generate(c1, batch.c2)
    c1_hat, c2_hat = model.encode_maneuver(x12)
    x121 = model.decode_template(c1_hat, l)
    f1, f2 = model.expand(x12, batch.c3)
    x13 = assemble_and_crop(f1, x12, f2, batch.p)
    c3_hat = model.encode_expansion(f1, f2)

    x1_rec = model.decode_template(c1, l)
    x2_rec = model.generate(*model.encode_maneuver(x2))
    return {
        "gen_tran": lsgan_gen_translation(model.discriminate(x12)),
        "gen_exp": lsgan_gen_expansion(model.discriminate_expansion(x13)),
        "pair": pairing_loss(x12, x2, l),
        "cyc": cycle_loss(x121, x1),
        "id1": identity_recon(x1, x1_rec),
        "id2": identity_recon(x2, x2_rec),
        "cr2": code_recon_translation(c1, batch.c2, c1_hat, c2_hat),
        "cr3": code_recon_expansion(batch.c3, c3_hat),
    }


def discriminator_terms(model, batch: Batch):
    with torch.no_grad():
        c1 = model.encode_template(batch.x1, batch.signal_index)
        x12 = model.generate(c1, batch.c2)
        f1, f2 = model.expand(x12, batch.c3)
        x13 = assemble_and_crop(f1, x12, f2, batch.p)
    return {
        "dis_tran": lsgan_dis_translation(model.discriminate(batch.x2), model.discriminate(x12)),
        "dis_exp": lsgan_dis_expansion(model.discriminate_expansion(batch.x3), model.discriminate_expansion(x13)),
    }
