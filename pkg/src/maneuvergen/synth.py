"""Synthetic driveline recordings and the SILD dataset container.

A deliberately simple longitudinal model stands in for fleet data: a random
schedule of stop / accelerate / cruise / decelerate segments drives the
vehicle speed, a hysteretic shift map picks the gear, and engine speed
follows the gear ratio. All three channels are normalized to [0, 1].

SILD layout (little endian)::

    magic   4s   b"SILD"
    version u32  1
    count   u32
    L       u16
    T       u16
    body    count * L * T float32, row-major per maneuver
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import ClassVar, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    ParameterError,
    TruncatedFileError,
    VersionMismatchError,
)

SIGNAL_NAMES = ("vehicle_speed", "engine_speed", "selected_gear")
SEGMENT_KINDS = ("stop", "accelerate", "cruise", "decelerate")

SILD_MAGIC = b"SILD"
SILD_VERSION = 1
_HEADER = struct.Struct("<4sIIHH")
HEADER_SIZE = _HEADER.size  # 16


def _default_up(n_gears=12):
    # up[0] is the takeoff threshold (gear 0 -> 1)
    return [0.02] + [round(float(v), 6) for v in np.geomspace(0.06, 0.85, n_gears - 1)]


def _default_down(n_gears=12):
    up = _default_up(n_gears)
    return [round(0.75 * u, 6) for u in up]


@dataclass
class Maneuver:
    """An L x T block of normalized signal samples recorded at 1 Hz."""

    values: np.ndarray
    signal_names: tuple = SIGNAL_NAMES
    sample_rate: ClassVar[float] = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ParameterError(f"maneuver values must be 2-D, got shape {self.values.shape}")
        self.signal_names = tuple(self.signal_names)
        if len(self.signal_names) != self.values.shape[0]:
            raise ParameterError(
                f"{len(self.signal_names)} signal names for {self.values.shape[0]} channels"
            )

    @property
    def n_signals(self):
        return self.values.shape[0]

    @property
    def duration(self):
        return self.values.shape[1]

    def channel(self, name):
        return self.values[self.signal_names.index(name)]


@dataclass
class SimConfig:
    duration_s: int = 512
    n_gears: int = 12
    idle_frac: float = 0.12
    shift_up_speeds: list = field(default_factory=_default_up)
    shift_down_speeds: list = field(default_factory=_default_down)
    accel_limit: float = 0.02
    decel_limit: float = 0.04
    segment_mix: dict = field(
        default_factory=lambda: {"stop": 0.2, "accelerate": 0.3, "cruise": 0.3, "decelerate": 0.2}
    )
    segment_len: tuple = (20, 160)
    lead_segments: tuple = ()
    cruise_jitter: float = 0.003
    engine_noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        self.segment_len = tuple(self.segment_len)
        self.lead_segments = tuple(self.lead_segments)
        self.validate()

    def validate(self):
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.n_gears <= 0:
            raise ConfigError("n_gears must be positive")
        if not 0.0 < self.idle_frac < 1.0:
            raise ConfigError("idle_frac must lie in (0, 1)")
        up = np.asarray(self.shift_up_speeds, dtype=float)
        down = np.asarray(self.shift_down_speeds, dtype=float)
        if up.shape != (self.n_gears,) or down.shape != (self.n_gears,):
            raise ConfigError(
                f"need {self.n_gears} up and down thresholds, got {up.size} and {down.size}"
            )
        if np.any(np.diff(up) <= 0) or np.any(np.diff(down) <= 0):
            raise ConfigError("shift thresholds must be strictly increasing in gear index")
        # down[g] is stored at index g - 1
        if np.any(up - down <= 0):
            raise ConfigError("hysteresis violated: need up[g] > down[g + 1] for every gear")
        if up[0] <= 0 or up[-1] > 1 or down[0] <= 0:
            raise ConfigError("shift thresholds must lie in (0, 1]")
        if self.accel_limit <= 0 or self.decel_limit <= 0:
            raise ConfigError("accel/decel limits must be positive")
        unknown = set(self.segment_mix) - set(SEGMENT_KINDS)
        if unknown:
            raise ConfigError(f"unknown segment kinds {sorted(unknown)}")
        probs = np.array([self.segment_mix.get(k, 0.0) for k in SEGMENT_KINDS], dtype=float)
        if np.any(probs < 0) or probs.sum() <= 0:
            raise ConfigError("segment_mix must be nonnegative with positive mass")
        if not 1 <= self.segment_len[0] <= self.segment_len[1]:
            raise ConfigError("segment_len must be an ordered pair of positive integers")
        for kind in self.lead_segments:
            if kind not in SEGMENT_KINDS:
                raise ConfigError(f"unknown lead segment {kind!r}")

    @property
    def takeoff_speed(self):
        return float(self.shift_up_speeds[0])

    def gear_ratios(self):
        """Engine-speed fraction per unit vehicle speed, indexed by gear (0 unused)."""
        up = np.asarray(self.shift_up_speeds, dtype=float)
        tops = np.append(up[1:], 1.0)
        return np.concatenate([[0.0], 0.8 / tops])

    def to_dict(self):
        d = asdict(self)
        d["segment_len"] = list(self.segment_len)
        d["lead_segments"] = list(self.lead_segments)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def takeoff_config(duration_s=512, **overrides):
    """Preset whose maneuvers start at standstill, roll off and then cruise."""
    kw = dict(
        duration_s=duration_s,
        lead_segments=("stop", "accelerate", "cruise"),
        segment_mix={"accelerate": 0.4, "cruise": 0.6},
    )
    kw.update(overrides)
    return SimConfig(**kw)


def _segment_schedule(config, rng):
    kinds = list(SEGMENT_KINDS)
    probs = np.array([config.segment_mix.get(k, 0.0) for k in kinds], dtype=float)
    probs /= probs.sum()
    lo, hi = config.segment_len
    schedule = np.empty(config.duration_s, dtype=object)
    t = 0
    i = 0
    while t < config.duration_s:
        if i < len(config.lead_segments):
            kind = config.lead_segments[i]
        else:
            kind = kinds[rng.choice(len(kinds), p=probs)]
        length = int(rng.integers(lo, hi + 1))
        schedule[t:t + length] = kind
        t += length
        i += 1
    return schedule


def _shift(gear, v, up, down, n_gears):
    while gear < n_gears and v > up[gear]:
        gear += 1
    while gear > 0 and v < down[gear - 1]:
        gear -= 1
    return gear


def simulate_maneuver(config: SimConfig, seed: int | None = None) -> Maneuver:
    """Simulate one maneuver of ``config.duration_s`` seconds.

    ``seed`` defaults to ``config.seed``. The same (config, seed) pair always
    yields the same samples.
    """
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    T = config.duration_s
    G = config.n_gears
    up = np.asarray(config.shift_up_speeds, dtype=float)
    down = np.asarray(config.shift_down_speeds, dtype=float)
    ratios = config.gear_ratios()

    schedule = _segment_schedule(config, rng)
    v = 0.0 if schedule[0] == "stop" else float(rng.uniform(0.0, 0.5))
    gear = _shift(0, v, up, down, G)

    speed = np.empty(T)
    gears = np.empty(T, dtype=int)
    target = v
    for t in range(T):
        kind = schedule[t]
        if t == 0 or kind != schedule[t - 1]:
            if kind == "accelerate":
                target = float(rng.uniform(v, 1.0))
            elif kind == "decelerate":
                target = float(rng.uniform(0.0, v))
        if kind == "stop":
            v = max(0.0, v - config.decel_limit * rng.uniform(0.6, 1.0))
        elif kind == "accelerate":
            v = min(target, v + config.accel_limit * rng.uniform(0.3, 1.0))
        elif kind == "decelerate":
            v = max(target, v - config.decel_limit * rng.uniform(0.3, 1.0))
        elif v > 0.0:
            v = float(np.clip(v + rng.normal(0.0, config.cruise_jitter), 0.0, 1.0))
        gear = _shift(gear, v, up, down, G)
        speed[t] = v
        gears[t] = gear

    noise = rng.uniform(-config.engine_noise, config.engine_noise, size=T)
    engine = config.idle_frac + (1.0 - config.idle_frac) * ratios[gears] * speed + noise
    engine = np.clip(engine, config.idle_frac, 1.0)
    engine[gears == 0] = config.idle_frac

    values = np.stack([speed, engine, gears / G])
    return Maneuver(values.astype(np.float32))


def _manifest_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_dataset(maneuvers: Sequence[Maneuver] | np.ndarray, path, manifest=None):
    """Write maneuvers to a SILD file; ``manifest`` (a dict) goes to ``<path>.json``."""
    path = Path(path)
    if isinstance(maneuvers, np.ndarray):
        block = np.asarray(maneuvers, dtype="<f4")
        if block.ndim != 3:
            raise ParameterError(f"expected (count, L, T) array, got shape {block.shape}")
    elif len(maneuvers) == 0:
        block = np.zeros((0, len(SIGNAL_NAMES), 0), dtype="<f4")
    else:
        shapes = {m.values.shape for m in maneuvers}
        if len(shapes) != 1:
            raise ParameterError(f"maneuvers differ in shape: {sorted(shapes)}")
        block = np.stack([m.values for m in maneuvers]).astype("<f4")
    count, L, T = block.shape
    if L > 0xFFFF or T > 0xFFFF:
        raise ParameterError("L and T must fit in 16 bits")
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(SILD_MAGIC, SILD_VERSION, count, L, T))
            fh.write(np.ascontiguousarray(block).tobytes())
        if manifest is not None:
            _manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise OSError(f"failed to write dataset {path}: {exc}") from exc
    return path


def read_header(buf, path="<buffer>", magic=SILD_MAGIC):
    if len(buf) < HEADER_SIZE:
        raise TruncatedFileError(path, HEADER_SIZE, len(buf))
    got, version, count, L, T = _HEADER.unpack_from(buf, 0)
    if got != magic:
        raise BadMagicError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != SILD_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {SILD_VERSION}")
    return count, L, T


def load_array(path) -> np.ndarray:
    """Load a SILD file as a float32 array of shape (count, L, T)."""
    path = Path(path)
    buf = path.read_bytes()
    count, L, T = read_header(buf, path)
    expected = HEADER_SIZE + 4 * count * L * T
    if len(buf) != expected:
        raise TruncatedFileError(path, expected, len(buf))
    body = np.frombuffer(buf, dtype="<f4", offset=HEADER_SIZE, count=count * L * T)
    return body.reshape(count, L, T).astype(np.float32)


def load_dataset(path, signal_names=None) -> list[Maneuver]:
    block = load_array(path)
    if signal_names is None:
        manifest = _manifest_path(path)
        if manifest.exists():
            signal_names = json.loads(manifest.read_text()).get("signal_names")
    if signal_names is None:
        signal_names = SIGNAL_NAMES[: block.shape[1]]
    return [Maneuver(m, signal_names) for m in block]


def maneuver_seeds(seed, count):
    return np.random.default_rng(seed).integers(0, 2**63 - 1, size=count, dtype=np.int64)


def simulate_batch(config: SimConfig, count: int, seed: int, T: int | None = None) -> np.ndarray:
    if T is not None and T != config.duration_s:
        config = SimConfig.from_dict({**config.to_dict(), "duration_s": T})
    if count == 0:
        return np.zeros((0, len(SIGNAL_NAMES), config.duration_s), dtype=np.float32)
    return np.stack(
        [simulate_maneuver(config, int(s)).values for s in maneuver_seeds(seed, count)]
    )


def build_dataset(config: SimConfig, count: int, T: int, seed: int, path) -> Path:
    """Simulate ``count`` maneuvers of length ``T`` and write them as SILD."""
    if T <= 0 or T & (T - 1):
        raise ParameterError(f"T must be a positive power of two, got {T}")
    if count < 0:
        raise ParameterError("count must be nonnegative")
    block = simulate_batch(config, count, seed, T)
    cfg = {**config.to_dict(), "duration_s": T}
    manifest = {
        "format": "SILD",
        "version": SILD_VERSION,
        "config": cfg,
        "seed": int(seed),
        "count": int(count),
        "T": int(T),
        "signal_names": list(SIGNAL_NAMES),
    }
    return save_dataset(block, path, manifest)
