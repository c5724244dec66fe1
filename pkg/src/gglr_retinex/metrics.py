"""Quality metrics: lightness order error (no-reference) and MSE/PSNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class MetricUnavailable(NotImplementedError):
    pass


@dataclass(frozen=True)
class LoeResult:
    value: float
    rows: int
    cols: int


def _as_array(img) -> np.ndarray:
    a = img.data if hasattr(img, "data") else np.asarray(img, dtype=float)
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    return a


def lightness(img) -> np.ndarray:
    return _as_array(img).max(axis=2)


def downsample_grid(height: int, width: int, down_to: int):
    """Row/column sample indices giving about ``down_to`` columns, aspect kept."""
    cols = min(width, down_to)
    rows = max(1, min(height, int(round(height * cols / width))))
    ri = np.floor((np.arange(rows) + 0.5) * height / rows).astype(int)
    ci = np.floor((np.arange(cols) + 0.5) * width / cols).astype(int)
    return ri, ci


def loe(original, enhanced, down_to: int = 50) -> LoeResult:
    """Fraction of ordered pixel pairs whose lightness order differs.

    Both images are subsampled on the same grid; for every pair (x, y) of
    sampled pixels the indicator [L_o(x) >= L_o(y)] xor [L_e(x) >= L_e(y)] is
    averaged over all M^2 pairs.
    """
    if down_to < 2:
        raise ValueError("down_to must be >= 2")
    lo, le = lightness(original), lightness(enhanced)
    if lo.shape != le.shape:
        raise ValueError(f"image size mismatch: {lo.shape} vs {le.shape}")
    ri, ci = downsample_grid(lo.shape[0], lo.shape[1], down_to)
    a = lo[np.ix_(ri, ci)].ravel()
    b = le[np.ix_(ri, ci)].ravel()
    order_a = a[:, None] >= a[None, :]
    order_b = b[:, None] >= b[None, :]
    value = np.count_nonzero(order_a ^ order_b) / a.size ** 2
    return LoeResult(float(value), ri.size, ci.size)


def mse_psnr(a, b):
    """MSE over all samples and PSNR in dB for unit peak (inf when identical)."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"image size mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)
    return mse, psnr


def mdm(original, enhanced):
    raise MetricUnavailable("metric unavailable: MDM is not implemented")


METRICS = {
    "loe": lambda a, b: loe(a, b).value,
    "mse": lambda a, b: mse_psnr(a, b)[0],
    "psnr": lambda a, b: mse_psnr(a, b)[1],
    "mdm": mdm,
}


def get_metric(name: str):
    try:
        return METRICS[name]
    except KeyError:
        raise KeyError(f"unknown metric {name!r}; known: {sorted(METRICS)}") from None
