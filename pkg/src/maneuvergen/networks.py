"""Encoders, generators and discriminators of the two-stage translation model.

Translation stage (1-D, fully convolutional):

* ``e1``: template (+ one-hot signal index planes) -> content code c1
* ``g2``: (c1, style code c2) -> maneuver
* ``e2``: maneuver -> (c1, c2)
* ``g1``: c1 -> template
* ``d2``: maneuver -> least-squares realism score

Expansion stage (2-D over the folded timeline):

* ``g3``: (maneuver, expansion code c3) -> preceding and succeeding parts
* ``e3``: (preceding, succeeding) -> c3
* ``d3``: long maneuver -> least-squares realism score
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, ParameterError, ShapeError

MAX_TEMPLATE_LENGTH = 512


def _is_pow2(n):
    return n > 0 and n & (n - 1) == 0


@dataclass
class ModelConfig:
    n: int = 512
    m: int = 1024
    n_signals: int = 3
    width: int = 64
    max_width: int = 256
    depth: int = 4
    kernel: int = 5
    content_channels: int = 64
    style_dim: int = 8
    expansion_dim: int = 8
    fold: int = 32
    exp_width: int = 32
    exp_depth: int = 3
    disc_width: int = 64
    disc_depth: int = 4
    lambda_gen: float = 1.0
    lambda_pair: float = 1.0
    lambda_cyc: float = 1.0
    lambda_id: float = 10.0
    lambda_cr: float = 1.0

    def __post_init__(self):
        if not (_is_pow2(self.n) and _is_pow2(self.m)):
            raise ConfigError("n and m must be powers of two")
        if self.n > self.m:
            raise ConfigError("n must not exceed m")
        if self.n < 2 ** self.depth:
            raise ConfigError(f"n={self.n} too short for depth {self.depth}")
        if self.kernel % 2 == 0:
            raise ConfigError("kernel size must be odd")
        if self.n % self.fold or self.m % self.fold:
            raise ConfigError("fold must divide both n and m")
        for name in ("lambda_gen", "lambda_pair", "lambda_cyc", "lambda_id", "lambda_cr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    @property
    def code_length(self):
        return self.n // 2 ** self.depth

    def channels(self, level):
        return min(self.width * 2 ** level, self.max_width)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def tiny_config(**overrides):
    """Small configuration for gradient checks and unit tests."""
    kw = dict(n=32, m=64, width=8, max_width=16, depth=2, content_channels=8,
              style_dim=4, expansion_dim=4, fold=8, exp_width=8, exp_depth=2,
              disc_width=8, disc_depth=2)
    kw.update(overrides)
    return ModelConfig(**kw)


def desk_config(**overrides):
    """Configuration used for CPU-scale training runs (N = 128)."""
    kw = dict(n=128, m=256, width=32, max_width=64, depth=3, content_channels=32,
              style_dim=8, expansion_dim=8, fold=16, exp_width=16, exp_depth=2,
              disc_width=32, disc_depth=3)
    kw.update(overrides)
    return ModelConfig(**kw)


def _act():
    return nn.LeakyReLU(0.2)


class Encoder1d(nn.Module):
    def __init__(self, cfg, in_ch, out_ch):
        super().__init__()
        k = cfg.kernel
        layers = [nn.Conv1d(in_ch, cfg.channels(0), k, padding=k // 2), _act()]
        for i in range(cfg.depth):
            layers += [nn.Conv1d(cfg.channels(i), cfg.channels(i + 1), k, stride=2, padding=k // 2), _act()]
        layers.append(nn.Conv1d(cfg.channels(cfg.depth), out_ch, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Decoder1d(nn.Module):
    def __init__(self, cfg, in_ch, out_ch):
        super().__init__()
        k = cfg.kernel
        layers = [nn.Conv1d(in_ch, cfg.channels(cfg.depth), k, padding=k // 2), _act()]
        for i in reversed(range(cfg.depth)):
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv1d(cfg.channels(i + 1), cfg.channels(i), k, padding=k // 2),
                _act(),
            ]
        layers += [nn.Conv1d(cfg.channels(0), out_ch, k, padding=k // 2), nn.Sigmoid()]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class TemplateEncoder(nn.Module):
    """E1: template plus one-hot signal-index planes -> content code."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.net = Encoder1d(cfg, 1 + cfg.n_signals, cfg.content_channels)

    def forward(self, x1, signal_index):
        planes = F.one_hot(signal_index.long(), self.cfg.n_signals).to(x1.dtype)
        planes = planes[:, :, None].expand(-1, -1, x1.shape[-1])
        return self.net(torch.cat([x1[:, None, :], planes], dim=1))


class ManeuverGenerator(nn.Module):
    """G2: content code and style vector -> L-channel maneuver."""

    def __init__(self, cfg):
        super().__init__()
        self.net = Decoder1d(cfg, cfg.content_channels + cfg.style_dim, cfg.n_signals)

    def forward(self, c1, c2):
        style = c2[:, :, None].expand(-1, -1, c1.shape[-1])
        return self.net(torch.cat([c1, style], dim=1))


class ManeuverEncoder(nn.Module):
    """E2: maneuver -> (content code, style vector)."""

    def __init__(self, cfg):
        super().__init__()
        self.content = Encoder1d(cfg, cfg.n_signals, cfg.content_channels)
        self.style = Encoder1d(cfg, cfg.n_signals, cfg.style_dim)

    def forward(self, x):
        return self.content(x), self.style(x).mean(dim=-1)


class TemplateDecoder(nn.Module):
    """G1: content code plus one-hot signal-index planes -> template.

    A realistic maneuver does not reveal which of its channels a template
    described, so the reverse translation is told, exactly like E1.
    """

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.net = Decoder1d(cfg, cfg.content_channels + cfg.n_signals, 1)

    def forward(self, c1, signal_index):
        planes = F.one_hot(signal_index.long(), self.cfg.n_signals).to(c1.dtype)
        planes = planes[:, :, None].expand(-1, -1, c1.shape[-1])
        return self.net(torch.cat([c1, planes], dim=1))[:, 0]


class PatchDiscriminator1d(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        k = cfg.kernel
        layers = []
        ch = cfg.n_signals
        for i in range(cfg.disc_depth):
            out = min(cfg.disc_width * 2 ** i, 4 * cfg.disc_width)
            layers += [nn.Conv1d(ch, out, k, stride=2, padding=k // 2), _act()]
            ch = out
        layers.append(nn.Conv1d(ch, 1, k, padding=k // 2))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x).mean(dim=(1, 2))


def fold(x, width):
    """(B, C, T) -> (B, C, T / width, width): stack consecutive chunks as rows."""
    b, c, t = x.shape
    return x.reshape(b, c, t // width, width)


def unfold(x):
    b, c, r, w = x.shape
    return x.reshape(b, c, r * w)


class UNet2d(nn.Module):
    def __init__(self, in_ch, out_ch, width, depth):
        super().__init__()
        self.stem = nn.Sequential(nn.Conv2d(in_ch, width, 3, padding=1), _act())
        self.down = nn.ModuleList()
        self.up = nn.ModuleList()
        chans = [width * 2 ** i for i in range(depth + 1)]
        for i in range(depth):
            self.down.append(nn.Sequential(nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1), _act()))
        for i in reversed(range(depth)):
            self.up.append(nn.Sequential(nn.Conv2d(chans[i + 1] + chans[i], chans[i], 3, padding=1), _act()))
        self.head = nn.Conv2d(width, out_ch, 3, padding=1)

    def forward(self, x):
        h = self.stem(x)
        skips = []
        for layer in self.down:
            skips.append(h)
            h = layer(h)
        for layer in self.up:
            skip = skips.pop()
            h = F.interpolate(h, size=skip.shape[-2:], mode="nearest")
            h = layer(torch.cat([h, skip], dim=1))
        return self.head(h)


class Expander(nn.Module):
    """G3: jointly generates the parts preceding and succeeding a maneuver.

    The maneuver is placed in the middle of a zero canvas of length 2M - N,
    together with a mask plane and the broadcast expansion code; the canvas
    is folded into rows of ``cfg.fold`` samples and processed by a 2-D U-Net.
    """

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.net = UNet2d(cfg.n_signals + 1 + cfg.expansion_dim, cfg.n_signals, cfg.exp_width, cfg.exp_depth)

    def forward(self, x12, c3):
        b, L, n = x12.shape
        extra = self.cfg.m - n
        if extra % self.cfg.fold:
            raise ShapeError(f"m - n = {extra} is not a multiple of fold={self.cfg.fold}")
        pad = x12.new_zeros(b, L, extra)
        signal = torch.cat([pad, x12, pad], dim=-1)
        mask = torch.zeros_like(signal[:, :1])
        mask[..., extra:extra + n] = 1.0
        code = c3[:, :, None].expand(-1, -1, signal.shape[-1])
        canvas = fold(torch.cat([signal, mask, code], dim=1), self.cfg.fold)
        out = torch.sigmoid(unfold(self.net(canvas)))
        return out[..., :extra], out[..., extra + n:]


class ExpansionEncoder(nn.Module):
    """E3: (preceding, succeeding) parts -> expansion code."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        layers = []
        ch = cfg.n_signals
        for i in range(cfg.exp_depth + 1):
            out = cfg.exp_width * 2 ** i
            layers += [nn.Conv2d(ch, out, 3, stride=2 if i else 1, padding=1), _act()]
            ch = out
        self.net = nn.Sequential(*layers)
        self.head = nn.Linear(ch, cfg.expansion_dim)

    def forward(self, f1, f2):
        h = self.net(fold(torch.cat([f1, f2], dim=-1), self.cfg.fold))
        return self.head(h.mean(dim=(2, 3)))


class PatchDiscriminator2d(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        layers = []
        ch = cfg.n_signals
        for i in range(cfg.exp_depth + 1):
            out = cfg.exp_width * 2 ** i
            layers += [nn.Conv2d(ch, out, 3, stride=2, padding=1), _act()]
            ch = out
        layers.append(nn.Conv2d(ch, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(fold(x, self.cfg.fold)).mean(dim=(1, 2, 3))


def assemble_and_crop(f1, x12, f2, p):
    """Concatenate (f1, x12, f2) along time and take the length-M window at ``p``.

    ``p`` is an int or a (B,) integer tensor; x12 ends up at offset
    ``(M - N) - p`` of the window.
    """
    extra = f1.shape[-1]
    if f2.shape[-1] != extra:
        raise ShapeError("preceding and succeeding parts must have equal length")
    n = x12.shape[-1]
    m = extra + n
    full = torch.cat([f1, x12, f2], dim=-1)
    if isinstance(p, torch.Tensor):
        if p.ndim == 0:
            p = int(p)
        else:
            if torch.any(p < 0) or torch.any(p > extra):
                raise ParameterError(f"crop offsets must lie in [0, {extra}]")
            idx = p.long()[:, None] + torch.arange(m, device=full.device)
            idx = idx[:, None, :].expand(-1, full.shape[1], -1)
            return torch.gather(full, -1, idx)
    if not 0 <= p <= extra:
        raise ParameterError(f"crop offset {p} outside [0, {extra}]")
    return full[..., p:p + m]


class ManeuverGAN(nn.Module):
    """All learnable networks plus thin, shape-checked entry points."""

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.e1 = TemplateEncoder(self.cfg)
        self.g1 = TemplateDecoder(self.cfg)
        self.e2 = ManeuverEncoder(self.cfg)
        self.g2 = ManeuverGenerator(self.cfg)
        self.e3 = ExpansionEncoder(self.cfg)
        self.g3 = Expander(self.cfg)
        self.d2 = PatchDiscriminator1d(self.cfg)
        self.d3 = PatchDiscriminator2d(self.cfg)

    @property
    def style_dim(self):
        return self.cfg.style_dim

    @property
    def expansion_dim(self):
        return self.cfg.expansion_dim

    def generator_modules(self):
        return [self.e1, self.g1, self.e2, self.g2, self.e3, self.g3]

    def discriminator_modules(self):
        return [self.d2, self.d3]

    def generator_parameters(self):
        return [p for mod in self.generator_modules() for p in mod.parameters()]

    def discriminator_parameters(self):
        return [p for mod in self.discriminator_modules() for p in mod.parameters()]

    def _check_length(self, t):
        hi = max(MAX_TEMPLATE_LENGTH, self.cfg.n)
        if not _is_pow2(t) or t < 2 ** self.cfg.depth or t > hi:
            raise ShapeError(f"length {t} must be a power of two in [{2 ** self.cfg.depth}, {hi}]")

    def _check_code(self, c1):
        if c1.ndim != 3 or c1.shape[1] != self.cfg.content_channels:
            raise ShapeError(f"content code must be (B, {self.cfg.content_channels}, T'), got {tuple(c1.shape)}")

    def _signal_index(self, signal_index, batch):
        if not isinstance(signal_index, torch.Tensor):
            signal_index = torch.full((batch,), int(signal_index), dtype=torch.long)
        if signal_index.shape != (batch,):
            raise ShapeError(f"signal index must be an int or ({batch},) tensor, got {tuple(signal_index.shape)}")
        if torch.any(signal_index < 0) or torch.any(signal_index >= self.cfg.n_signals):
            raise ShapeError(f"signal index outside [0, {self.cfg.n_signals})")
        return signal_index

    def encode_template(self, x1, signal_index):
        """E1. ``x1`` is (B, N) and ``signal_index`` an int or (B,) tensor."""
        if x1.ndim != 2:
            raise ShapeError(f"templates must be (B, N), got {tuple(x1.shape)}")
        self._check_length(x1.shape[-1])
        return self.e1(x1, self._signal_index(signal_index, x1.shape[0]))

    def generate(self, c1, c2):
        """G2."""
        self._check_code(c1)
        if c2.ndim != 2 or c2.shape != (c1.shape[0], self.cfg.style_dim):
            raise ShapeError(f"style code must be ({c1.shape[0]}, {self.cfg.style_dim}), got {tuple(c2.shape)}")
        return self.g2(c1, c2)

    def encode_maneuver(self, x):
        """E2."""
        if x.ndim != 3 or x.shape[1] != self.cfg.n_signals:
            raise ShapeError(f"maneuvers must be (B, {self.cfg.n_signals}, N), got {tuple(x.shape)}")
        self._check_length(x.shape[-1])
        return self.e2(x)

    def decode_template(self, c1, signal_index):
        """G1, conditioned on the signal the template describes."""
        self._check_code(c1)
        return self.g1(c1, self._signal_index(signal_index, c1.shape[0]))

    def discriminate(self, x):
        """D2, one score per sample."""
        if x.ndim != 3 or x.shape[1] != self.cfg.n_signals:
            raise ShapeError(f"maneuvers must be (B, {self.cfg.n_signals}, N), got {tuple(x.shape)}")
        self._check_length(x.shape[-1])
        return self.d2(x)

    def discriminate_expansion(self, x):
        """D3, one score per sample."""
        if x.ndim != 3 or x.shape[1:] != (self.cfg.n_signals, self.cfg.m):
            raise ShapeError(f"expanded maneuvers must be (B, {self.cfg.n_signals}, {self.cfg.m}), got {tuple(x.shape)}")
        return self.d3(x)

    def expand(self, x12, c3):
        """G3 -> (F1, F2), each of length M - N."""
        if x12.ndim != 3 or x12.shape[1] != self.cfg.n_signals:
            raise ShapeError(f"maneuvers must be (B, {self.cfg.n_signals}, N), got {tuple(x12.shape)}")
        if x12.shape[-1] > self.cfg.m:
            raise ShapeError("maneuver longer than the expansion length")
        if c3.shape != (x12.shape[0], self.cfg.expansion_dim):
            raise ShapeError(f"expansion code must be ({x12.shape[0]}, {self.cfg.expansion_dim})")
        return self.g3(x12, c3)

    def encode_expansion(self, f1, f2):
        """E3."""
        return self.e3(f1, f2)


def save_checkpoint(model: ManeuverGAN, path, extra=None) -> Path:
    """Write ``manifest.json`` and ``params.bin`` (little-endian float32) into ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = []
    offset = 0
    with open(path / "params.bin", "wb") as fh:
        for name, tensor in model.state_dict().items():
            arr = tensor.detach().cpu().numpy().astype("<f4")
            fh.write(arr.tobytes())
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.nbytes
    manifest = {"config": model.cfg.to_dict(), "tensors": tensors, "extra": extra or {}}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return path


def load_checkpoint(path) -> ManeuverGAN:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    model = ManeuverGAN(ModelConfig.from_dict(manifest["config"]))
    buf = (path / "params.bin").read_bytes()
    state = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=entry["offset"])
        state[entry["name"]] = torch.from_numpy(arr.reshape(entry["shape"]).copy())
    model.load_state_dict(state)
    model.eval()
    return model


def checkpoint_extra(path):
    return json.loads((Path(path) / "manifest.json").read_text()).get("extra", {})
