"""Piecewise-linear templates extracted from recorded signals.

Extraction smooths the signal with a centered moving average, differentiates
it with a 1-D Sobel kernel, keeps long runs of near-zero slope as flat
regions, and joins consecutive flat regions with straight edges.

SILT container: the SILD header (magic ``b"SILT"``, L = 1) followed by one
record per template::

    values        T float32
    signal_index  u32
    n_breakpoints u32
    breakpoints   n_breakpoints * (u32 time_index, float32 value)
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, TruncatedFileError
from .synth import _HEADER, HEADER_SIZE, SILD_VERSION, Maneuver, read_header

SILT_MAGIC = b"SILT"
_RECORD_HEAD = struct.Struct("<II")
_BREAKPOINT = np.dtype([("t", "<u4"), ("v", "<f4")])


@dataclass(frozen=True)
class ExtractParams:
    smooth_window: int = 21
    flat_slope_eps: float = 0.002
    min_flat_len: int = 10


@dataclass(eq=False)
class Template:
    """A 1-D sketch of one signal: linear interpolation of its breakpoints."""

    breakpoints: tuple
    signal_index: int = 0
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bps = tuple((int(t), float(np.float32(v))) for t, v in self.breakpoints)
        if len(bps) < 2:
            raise ParameterError("a template needs at least two breakpoints")
        ts = np.array([t for t, _ in bps])
        if ts[0] != 0 or np.any(np.diff(ts) <= 0):
            raise ParameterError("breakpoint times must start at 0 and strictly increase")
        vs = np.array([v for _, v in bps])
        if np.any(vs < 0) or np.any(vs > 1):
            raise ParameterError("template values must lie in [0, 1]")
        if self.signal_index < 0:
            raise ParameterError("signal_index must be nonnegative")
        self.breakpoints = bps
        self.values = np.interp(np.arange(ts[-1] + 1), ts, vs)

    @property
    def length(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Template):
            return NotImplemented
        return self.signal_index == other.signal_index and self.breakpoints == other.breakpoints

    def to_json(self):
        return {"signal_index": self.signal_index, "breakpoints": [list(bp) for bp in self.breakpoints]}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(tuple(bp) for bp in obj["breakpoints"]), int(obj["signal_index"]))


def smooth(signal, window: int) -> np.ndarray:
    """Centered moving average with edge replication."""
    x = np.asarray(signal, dtype=float)
    if window < 1 or window % 2 == 0 or window > x.size:
        raise ParameterError(f"window must be odd and within [1, {x.size}], got {window}")
    if window == 1:
        return x.copy()
    half = window // 2
    padded = np.pad(x, half, mode="edge")
    csum = np.concatenate([[0.0], np.cumsum(padded)])
    return (csum[window:] - csum[:-window]) / window


def sobel_1d(signal) -> np.ndarray:
    """Central difference (-1, 0, +1) / 2 with edge replication."""
    x = np.asarray(signal, dtype=float)
    if x.size < 3:
        raise ParameterError("sobel_1d needs at least 3 samples")
    padded = np.pad(x, 1, mode="edge")
    return (padded[2:] - padded[:-2]) / 2.0


def _runs(mask):
    """(start, stop) half-open index pairs of True runs in ``mask``."""
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def extract_template(signal, signal_index: int = 0, params: ExtractParams = ExtractParams()) -> Template:
    x = np.asarray(signal, dtype=float)
    T = x.size
    if T < max(params.min_flat_len, 3):
        raise ParameterError(f"signal of length {T} is shorter than min_flat_len")
    window = min(params.smooth_window, T if T % 2 else T - 1)
    s = smooth(x, window)
    slope = sobel_1d(s)
    flat = [(a, b) for a, b in _runs(np.abs(slope) <= params.flat_slope_eps)
            if b - a >= params.min_flat_len]

    if not flat:
        n = params.min_flat_len
        lo, hi = np.clip([x[:n].mean(), x[-n:].mean()], 0, 1)
        return Template(((0, lo), (T - 1, hi)), signal_index)

    # Smoothing erodes each flat region by up to half a window at every
    # corner; grow the regions back, never past the midpoint of the gap.
    half = window // 2
    grown = []
    for i, (a, b) in enumerate(flat):
        prev_b = flat[i - 1][1] if i else None
        next_a = flat[i + 1][0] if i + 1 < len(flat) else None
        lo = 0 if prev_b is None else max(a - half, (prev_b + a) // 2 + 1)
        hi = T if next_a is None else min(b + half, (b + next_a) // 2)
        if i == 0 and a > half:
            lo = a - half
        if i + 1 == len(flat) and T - b > half:
            hi = b + half
        level = float(np.clip(x[a:b].mean(), 0, 1))
        grown.append((lo, hi - 1, level))

    bps = []
    if grown[0][0] > 0:
        bps.append((0, float(np.clip(s[0], 0, 1))))
    for lo, last, level in grown:
        if bps and bps[-1][0] >= lo:
            lo = bps[-1][0] + 1
        bps.append((lo, level))
        if last > lo:
            bps.append((last, level))
    if bps[-1][0] < T - 1:
        bps.append((T - 1, float(np.clip(s[-1], 0, 1))))
    return Template(tuple(bps), signal_index)


def build_paired_dataset(maneuvers: Sequence[Maneuver], params: ExtractParams = ExtractParams()):
    """One template per channel for every maneuver: ``[(templates, maneuver), ...]``."""
    if not maneuvers:
        return []
    shapes = {m.values.shape for m in maneuvers}
    if len(shapes) != 1:
        raise ParameterError(f"maneuvers differ in shape: {sorted(shapes)}")
    return [
        (tuple(extract_template(row, l, params) for l, row in enumerate(m.values)), m)
        for m in maneuvers
    ]


def save_templates(templates: Sequence[Template], path) -> Path:
    path = Path(path)
    T = templates[0].length if templates else 0
    if any(t.length != T for t in templates):
        raise ParameterError("all templates in a SILT file must share one length")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SILT_MAGIC, SILD_VERSION, len(templates), 1, T))
        for tpl in templates:
            fh.write(tpl.values.astype("<f4").tobytes())
            fh.write(_RECORD_HEAD.pack(tpl.signal_index, len(tpl.breakpoints)))
            fh.write(np.array(list(tpl.breakpoints), dtype=_BREAKPOINT).tobytes())
    return path


def load_templates(path) -> list[Template]:
    path = Path(path)
    buf = path.read_bytes()
    count, _, T = read_header(buf, path, magic=SILT_MAGIC)
    out = []
    pos = HEADER_SIZE
    for _ in range(count):
        need = pos + 4 * T + _RECORD_HEAD.size
        if len(buf) < need:
            raise TruncatedFileError(path, need, len(buf))
        pos += 4 * T
        signal_index, n_bp = _RECORD_HEAD.unpack_from(buf, pos)
        pos += _RECORD_HEAD.size
        need = pos + _BREAKPOINT.itemsize * n_bp
        if len(buf) < need:
            raise TruncatedFileError(path, need, len(buf))
        bp = np.frombuffer(buf, dtype=_BREAKPOINT, count=n_bp, offset=pos)
        pos = need
        out.append(Template(tuple((int(t), float(v)) for t, v in bp), int(signal_index)))
    if pos != len(buf):
        raise TruncatedFileError(path, pos, len(buf))
    return out


def load_template_json(path) -> Template | list[Template]:
    """Read a hand-authored template, or a list of them, from JSON."""
    obj = json.loads(Path(path).read_text())
    if isinstance(obj, dict) and "templates" in obj:
        obj = obj["templates"]
    if isinstance(obj, list):
        return [Template.from_json(o) for o in obj]
    return Template.from_json(obj)


def save_template_json(templates, path) -> Path:
    path = Path(path)
    if isinstance(templates, Template):
        obj = templates.to_json()
    else:
        obj = {"templates": [t.to_json() for t in templates]}
    path.write_text(json.dumps(obj, indent=2))
    return path
