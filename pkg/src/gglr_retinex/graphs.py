"""Line graphs over patch rows/columns, their Laplacians and gradient-graph variants.

A patch row (or column) of N pixels becomes a path-like graph whose nodes are
joined within ``neighborhood_radius`` hops by bilateral weights. The same
construction on first differences of the signal gives the gradient graph; its
Laplacian pulled back through the difference operator is the signed GNG
Laplacian used to regularise illumination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import SparseSymMatrix, matvec


@dataclass(frozen=True)
class GraphParams:
    sigma_r: float = 1.0
    sigma_l: float = 0.2
    sigma_c: float = 1.0
    neighborhood_radius: int = 2
    # drop edges lighter than this; None keeps every generated edge
    prune_below: Optional[float] = None

    def __post_init__(self):
        if min(self.sigma_r, self.sigma_l, self.sigma_c) <= 0:
            raise ValueError("bandwidths must be positive")
        if self.neighborhood_radius < 1:
            raise ValueError("neighborhood_radius must be >= 1")

    def bandwidth(self, which: str) -> float:
        if which not in ("sigma_r", "sigma_l"):
            raise ValueError(f"bandwidth must be 'sigma_r' or 'sigma_l', got {which!r}")
        return getattr(self, which)


@dataclass(frozen=True)
class LineGraph:
    n: int
    neighborhood_radius: int
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray

    @property
    def weights(self):
        """Edges as a list of ``(i, j, w)`` with ``i < j``."""
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.i, self.j, self.w)]

    @property
    def num_edges(self) -> int:
        return int(self.w.size)


def bilateral_weight(v_i, v_j, pos_i, pos_j, sigma_v: float, sigma_c: float):
    """exp(-(v_i - v_j)^2 / sigma_v^2 - ||c_i - c_j||^2 / sigma_c^2).

    Positions may be scalars (1D index) or coordinate tuples.
    """
    dv = np.asarray(v_i, dtype=float) - np.asarray(v_j, dtype=float)
    dc = np.atleast_1d(np.asarray(pos_i, dtype=float) - np.asarray(pos_j, dtype=float))
    return np.exp(-(dv ** 2) / sigma_v ** 2 - np.sum(dc ** 2, axis=-1) / sigma_c ** 2)


def neighbor_pairs(n: int, radius: int):
    """All index pairs (i, j), i < j, with j - i <= radius, ordered by i then j."""
    i, j = np.triu_indices(n, k=1)
    keep = (j - i) <= radius
    return i[keep], j[keep]


def line_weights(values: np.ndarray, sigma_v: float, sigma_c: float, radius: int):
    """Bilateral weights for every row of a 2D array at once.

    ``values`` has shape (m, n); returns (i, j, w) with w of shape (m, E).
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    i, j = neighbor_pairs(values.shape[1], radius)
    dv = values[:, i] - values[:, j]
    w = np.exp(-(dv * dv) / sigma_v ** 2 - ((j - i) ** 2) / sigma_c ** 2)
    return i, j, w


def build_line_graph(values, params: GraphParams, bandwidth: str = "sigma_r") -> LineGraph:
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise ValueError("a line graph needs at least 2 nodes")
    i, j, w = line_weights(values[None, :], params.bandwidth(bandwidth), params.sigma_c,
                           params.neighborhood_radius)
    w = w[0]
    if params.prune_below is not None:
        keep = w >= params.prune_below
        i, j, w = i[keep], j[keep], w[keep]
    return LineGraph(values.size, params.neighborhood_radius, i, j, w)


def laplacian_coo(n: int, i, j, w):
    """Triplets of L = diag(W 1) - W for an edge list, full symmetric pattern."""
    w = np.asarray(w, dtype=float)
    deg = np.bincount(i, weights=w, minlength=n) + np.bincount(j, weights=w, minlength=n)
    idx = np.arange(n)
    return (np.concatenate([idx, i, j]), np.concatenate([idx, j, i]), np.concatenate([deg, -w, -w]))


def laplacian(g: LineGraph) -> SparseSymMatrix:
    return SparseSymMatrix.from_coo(g.n, *laplacian_coo(g.n, g.i, g.j, g.w))


@dataclass(frozen=True)
class GradientOperator:
    """(n-1) x n forward difference, (F x)_i = x_{i+1} - x_i."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("gradient needs at least 2 samples")

    def apply(self, x) -> np.ndarray:
        return apply_gradient(x)

    def apply_transpose(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        out = np.zeros(self.n)
        out[1:] += g
        out[:-1] -= g
        return out

    def dense(self) -> np.ndarray:
        F = np.zeros((self.n - 1, self.n))
        k = np.arange(self.n - 1)
        F[k, k] = -1.0
        F[k, k + 1] = 1.0
        return F


def apply_gradient(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("gradient needs a 1D signal with at least 2 samples")
    return np.diff(values)


def gng_coo(rows, cols, vals):
    """Triplets of F^T M F given triplets of an (n-1)x(n-1) matrix M.

    Uses F^T e_i = e_{i+1} - e_i, so each entry M_ij spreads to four pixel pairs.
    The input must list both (i, j) and (j, i) for off-diagonal entries.
    """
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    vals = np.asarray(vals, dtype=float)
    out_r = np.concatenate([rows + 1, rows + 1, rows, rows])
    out_c = np.concatenate([cols + 1, cols, cols + 1, cols])
    out_v = np.concatenate([vals, -vals, -vals, vals])
    return out_r, out_c, out_v


def gng_laplacian(gradient_graph_laplacian: SparseSymMatrix, n: int) -> SparseSymMatrix:
    """Gradient-induced nodal graph Laplacian F^T Lbar F (n x n, signed, PSD)."""
    if gradient_graph_laplacian.n != n - 1:
        raise ValueError(
            f"gradient-graph Laplacian must be {n - 1}x{n - 1} for n={n}, got {gradient_graph_laplacian.n}"
        )
    return SparseSymMatrix.from_coo(n, *gng_coo(*gradient_graph_laplacian.coo()))


def gradient_graph(values, params: GraphParams) -> LineGraph:
    """Gradient graph of a signal: bilateral graph (sigma_l) over its first differences."""
    return build_line_graph(apply_gradient(np.asarray(values, dtype=float).ravel()), params, "sigma_l")


def glr(L: SparseSymMatrix, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ matvec(L, x))


def glr_edgewise(g: LineGraph, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(g.w * (x[g.i] - x[g.j]) ** 2))


def gglr(values, params: GraphParams, weights_from=None) -> float:
    """x^T F^T Lbar F x with the gradient graph built from ``weights_from`` (default: x)."""
    x = np.asarray(values, dtype=float).ravel()
    src = x if weights_from is None else np.asarray(weights_from, dtype=float).ravel()
    Lbar = laplacian(gradient_graph(src, params))
    return glr(gng_laplacian(Lbar, x.size), x)
