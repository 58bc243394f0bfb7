"""Windowed structural similarity for 1-D signals on the [0, 1] range."""
import numpy as np

from .errors import ParameterError

K1 = 0.01
K2 = 0.03


def _window_sums(x, window):
    c = np.concatenate([[0.0], np.cumsum(x)])
    return c[window:] - c[:-window]


def ssim_map(a, b, window=32):
    """SSIM of every length-``window`` sliding window (stride 1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError(f"ssim_1d needs equal-length vectors, got {a.shape} and {b.shape}")
    if window < 1 or a.size < window:
        raise ParameterError(f"signals of length {a.size} are shorter than window {window}")
    c1 = K1 ** 2
    c2 = K2 ** 2
    # center first so the second moments do not cancel catastrophically
    shift = 0.5 * (a.mean() + b.mean())
    a = a - shift
    b = b - shift
    mu_a = _window_sums(a, window) / window
    mu_b = _window_sums(b, window) / window
    var_a = _window_sums(a * a, window) / window - mu_a * mu_a
    var_b = _window_sums(b * b, window) / window - mu_b * mu_b
    cov = _window_sums(a * b, window) / window - mu_a * mu_b
    mu_a = mu_a + shift
    mu_b = mu_b + shift
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    return lum * cs


def ssim_1d(a, b, window: int = 32) -> float:
    """Mean windowed SSIM, clamped below at 0.

    Stabilizers are (0.01)^2 and (0.03)^2 for a dynamic range of 1. Window
    statistics are population moments (no Bessel correction).
    """
    return float(max(0.0, ssim_map(a, b, window).mean()))
