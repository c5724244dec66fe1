"""Synthetic low-light scenes with known reflectance and illumination."""

from __future__ import annotations

import numpy as np


def pwc_reflectance(height: int, width: int, regions: int = 8, low: float = 0.3, high: float = 1.0,
                    rng=None) -> np.ndarray:
    """Piecewise-constant map: nearest-seed (Voronoi) cells with random flat values."""
    rng = np.random.default_rng(rng)
    seeds = rng.uniform([0, 0], [height, width], size=(regions, 2))
    values = rng.uniform(low, high, size=regions)
    yy, xx = np.mgrid[0:height, 0:width]
    d2 = (yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2
    return values[np.argmin(d2, axis=-1)]


def planar_illumination(height: int, width: int, lo: float = 0.08, hi: float = 0.35) -> np.ndarray:
    """Smooth diagonal ramp from ``lo`` (top-left) to ``hi`` (bottom-right)."""
    yy, xx = np.mgrid[0:height, 0:width]
    t = (yy / max(height - 1, 1) + xx / max(width - 1, 1)) / 2.0
    return lo + (hi - lo) * t


def low_light_scene(height: int, width: int, regions: int = 8, rng=None):
    """Returns ``(illumination, reflectance, observation)`` as 2D arrays in [0, 1]."""
    r = pwc_reflectance(height, width, regions, rng=rng)
    l = planar_illumination(height, width)
    return l, r, np.clip(l * r, 0.0, 1.0)
