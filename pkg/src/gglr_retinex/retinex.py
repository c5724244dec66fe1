"""Patch-wise Retinex decomposition with GLR (reflectance) and GGLR (illumination).

Each N x N patch alternates two quadratic solves with graphs rebuilt from the
current estimates:

    (diag(l)^2 + mu_r * sum_k [H_k^T L_rk H_k + G_k^T L_ck G_k]) r = l * y
    (diag(r)^2 + mu_l * sum_k [H_k^T Lg_rk H_k + G_k^T Lg_ck G_k]) l = r * y

where H_k / G_k pick row / column k of the row-major patch vector, L are
bilateral line-graph Laplacians and Lg their gradient-induced (GNG) versions.
The enhanced intensity is l**gamma * r.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import correlate1d

from .graphs import GraphParams, line_weights
from .linalg import SparseSymMatrix, SolveReport, build_jacobi, cg_solve, matvec


class PatchConvergenceError(RuntimeError):
    def __init__(self, origin, kind: str, report: SolveReport):
        self.origin = origin
        self.kind = kind
        self.report = report
        super().__init__(
            f"{kind} CG solve did not converge for patch at {origin}: "
            f"{report.iterations} iterations, relative residual {report.final_relative_residual:.3e}"
        )


@dataclass(frozen=True)
class RetinexParams:
    mu_r: float = 1.0
    mu_l: float = 0.1
    sigma_r: float = 1.0
    sigma_l: float = 0.2
    sigma_c: float = 1.0
    neighborhood_radius: int = 2
    gamma: float = 0.5
    patch_size: int = 5
    outer_iters: int = 10
    outer_tol: float = 1e-3
    cg_tol: float = 1e-6
    cg_max_iter: Optional[int] = None
    l_floor: float = 1e-3
    r_floor: float = 1e-3
    r_cap: float = 10.0
    blur_sigma: float = 5.0
    precondition: bool = True
    estimate_kappa: bool = False
    # chroma is only rescaled where the input intensity exceeds this
    color_floor: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if min(self.outer_tol, self.cg_tol, self.l_floor, self.r_floor, self.blur_sigma) <= 0:
            raise ValueError("tolerances, floors and blur sigma must be positive")
        if self.mu_r < 0 or self.mu_l < 0:
            raise ValueError("regularisation weights must be non-negative")
        if self.patch_size < 2:
            raise ValueError("patch_size must be >= 2")
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be >= 1")
        if self.r_cap <= self.r_floor or self.l_floor >= 1.0:
            raise ValueError("inconsistent clamp bounds")

    def graph_params(self) -> GraphParams:
        return GraphParams(self.sigma_r, self.sigma_l, self.sigma_c, self.neighborhood_radius)


@dataclass
class PlanarImage:
    """H x W x C float image with samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ValueError(f"expected H x W x {{1,3}} image, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("image contains non-finite samples")
        self.data = np.clip(d, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class PatchSystem:
    n: int
    y: np.ndarray
    l: np.ndarray
    r: np.ndarray
    mu_r: float = 1.0
    mu_l: float = 0.1
    origin: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        for name in ("y", "l", "r"):
            v = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if v.size != self.n * self.n:
                raise ValueError(f"{name} must have {self.n * self.n} entries, got {v.size}")
            setattr(self, name, v)


# ---------------------------------------------------------------------------
# initialisation

def rgb_to_hsv_v(img: PlanarImage) -> PlanarImage:
    return PlanarImage(img.data.max(axis=2))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    t = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2D array, replicate-edge padding."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    a = img.data[:, :, 0] if isinstance(img, PlanarImage) else np.asarray(img, dtype=float)
    k = gaussian_kernel(sigma)
    out = correlate1d(a, k, axis=0, mode="nearest")
    out = correlate1d(out, k, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def initialize(y, params: RetinexParams, v=None):
    """Initial illumination (blurred V channel) and reflectance (y / l).

    ``y`` is the 2D intensity; ``v`` the V channel to blur (defaults to ``y``).
    """
    y = np.asarray(y, dtype=float)
    v = y if v is None else np.asarray(v, dtype=float)
    l0 = np.maximum(gaussian_blur(v, params.blur_sigma), params.l_floor)
    r0 = np.clip(y / l0, params.r_floor, params.r_cap)
    return l0, r0


# ---------------------------------------------------------------------------
# assembly

def row_selection(n: int, k: int) -> np.ndarray:
    """Vector indices picked by H_k (0-based row k of a row-major n x n patch)."""
    return k * n + np.arange(n)


def col_selection(n: int, k: int) -> np.ndarray:
    """Vector indices picked by G_k (0-based column k)."""
    return k + n * np.arange(n)


def _selections(n: int):
    return [row_selection(n, k) for k in range(n)], [col_selection(n, k) for k in range(n)]


def _assemble(weights, y, fidelity, row_mats, col_mats, mu):
    n = int(round(math.sqrt(weights.size)))
    if n * n != weights.size:
        raise ValueError("patch vectors must have square length")
    if len(row_mats) != n or len(col_mats) != n:
        raise ValueError(f"need {n} row and {n} column matrices, got {len(row_mats)} and {len(col_mats)}")
    rows_sel, cols_sel = _selections(n)
    idx = np.arange(n * n)
    rr, cc, vv = [idx], [idx], [weights ** 2]
    for sel, L in zip(rows_sel + cols_sel, list(row_mats) + list(col_mats)):
        if L.n != n:
            raise ValueError(f"regulariser matrices must be {n}x{n}, got {L.n}x{L.n}")
        i, j, v = L.coo()
        rr.append(sel[i])
        cc.append(sel[j])
        vv.append(mu * v)
    A = SparseSymMatrix.from_coo(n * n, np.concatenate(rr), np.concatenate(cc), np.concatenate(vv))
    return A, fidelity * y


def assemble_reflectance_system(ps: PatchSystem, row_laplacians: Sequence[SparseSymMatrix],
                                col_laplacians: Sequence[SparseSymMatrix]):
    """Coefficient matrix and right-hand side of the reflectance normal equations."""
    return _assemble(ps.l, ps.y, ps.l, row_laplacians, col_laplacians, ps.mu_r)


def assemble_illumination_system(ps: PatchSystem, row_gng: Sequence[SparseSymMatrix],
                                 col_gng: Sequence[SparseSymMatrix]):
    """Same embedding with GNG Laplacians, fidelity weight r and mu_l."""
    return _assemble(ps.r, ps.y, ps.r, row_gng, col_gng, ps.mu_l)


def _line_triplets(lines: np.ndarray, sigma_v: float, gp: GraphParams, gradient: bool):
    """Laplacian (or GNG) triplets for every line of a 2D array.

    Returns local ``(i, j)`` index arrays shared by all lines and values of shape
    (m, K), one row per line.
    """
    n = lines.shape[1]
    if gradient:
        i, j, w = line_weights(np.diff(lines, axis=1), sigma_v, gp.sigma_c, gp.neighborhood_radius)
        m = n - 1
    else:
        i, j, w = line_weights(lines, sigma_v, gp.sigma_c, gp.neighborhood_radius)
        m = n
    deg = np.zeros((lines.shape[0], m))
    np.add.at(deg, (slice(None), i), w)
    np.add.at(deg, (slice(None), j), w)
    idx = np.arange(m)
    ti = np.concatenate([idx, i, j])
    tj = np.concatenate([idx, j, i])
    tv = np.concatenate([deg, -w, -w], axis=1)
    if gradient:
        ti, tj, tv = (np.concatenate([ti + 1, ti + 1, ti, ti]),
                      np.concatenate([tj + 1, tj, tj + 1, tj]),
                      np.concatenate([tv, -tv, -tv, tv], axis=1))
    return ti, tj, tv


def _batch_laplacians(lines, sigma_v, gp, gradient):
    ti, tj, tv = _line_triplets(lines, sigma_v, gp, gradient)
    n = lines.shape[1]
    return [SparseSymMatrix.from_coo(n, ti, tj, v) for v in tv]


def reflectance_laplacians(r, params: RetinexParams):
    """Per-row and per-column bilateral Laplacians built from the current reflectance."""
    r = np.asarray(r, dtype=float)
    n = int(round(math.sqrt(r.size)))
    patch = r.reshape(n, n)
    gp = params.graph_params()
    return (_batch_laplacians(patch, gp.sigma_r, gp, False),
            _batch_laplacians(patch.T, gp.sigma_r, gp, False))


def illumination_gng_laplacians(l, params: RetinexParams):
    """Per-row and per-column GNG Laplacians built from the current illumination."""
    l = np.asarray(l, dtype=float)
    n = int(round(math.sqrt(l.size)))
    patch = l.reshape(n, n)
    gp = params.graph_params()
    return (_batch_laplacians(patch, gp.sigma_l, gp, True),
            _batch_laplacians(patch.T, gp.sigma_l, gp, True))


def _fast_system(weights, y, signal, sigma_v, mu, gp: GraphParams, gradient: bool):
    """Assemble a patch system straight from batched triplets.

    Equivalent to building the 2N line matrices and calling the public
    assemble functions, without the per-line matrix objects.
    """
    n = int(round(math.sqrt(signal.size)))
    patch = signal.reshape(n, n)
    k = np.arange(n)[:, None]
    ti, tj, tv = _line_triplets(patch, sigma_v, gp, gradient)
    row_r, row_c = k * n + ti, k * n + tj
    ti, tj, cv = _line_triplets(patch.T, sigma_v, gp, gradient)
    col_r, col_c = k + n * ti, k + n * tj
    idx = np.arange(n * n)
    A = SparseSymMatrix.from_coo(
        n * n,
        np.concatenate([idx, row_r.ravel(), col_r.ravel()]),
        np.concatenate([idx, row_c.ravel(), col_c.ravel()]),
        np.concatenate([weights ** 2, mu * tv.ravel(), mu * cv.ravel()]),
    )
    return A, weights * y


# ---------------------------------------------------------------------------
# objectives (explicit, slice-based; used to check the assembled systems)

def _regulariser_value(x, row_mats, col_mats):
    n = len(row_mats)
    patch = np.asarray(x, dtype=float).reshape(n, n)
    total = 0.0
    for k in range(n):
        total += patch[k] @ matvec(row_mats[k], patch[k])
        total += patch[:, k] @ matvec(col_mats[k], patch[:, k])
    return float(total)


def reflectance_objective(r, l, y, row_laplacians, col_laplacians, mu_r: float) -> float:
    r = np.asarray(r, dtype=float)
    fid = np.sum((np.asarray(y) - np.asarray(l) * r) ** 2)
    return float(fid + mu_r * _regulariser_value(r, row_laplacians, col_laplacians))


def illumination_objective(l, r, y, row_gng, col_gng, mu_l: float) -> float:
    l = np.asarray(l, dtype=float)
    fid = np.sum((np.asarray(y) - np.asarray(r) * l) ** 2)
    return float(fid + mu_l * _regulariser_value(l, row_gng, col_gng))


# ---------------------------------------------------------------------------
# solving

def _solve(A, b, params: RetinexParams, kind: str, origin, x0=None):
    precond = build_jacobi(A) if params.precondition else None
    x, rep = cg_solve(A, b, tol=params.cg_tol, max_iter=params.cg_max_iter, precond=precond,
                      x0=x0, estimate_kappa=params.estimate_kappa)
    if not rep.converged:
        raise PatchConvergenceError(origin, kind, rep)
    return x, rep


def _rel_change(new, old) -> float:
    return float(np.max(np.abs(new - old)) / max(np.max(np.abs(old)), 1e-300))


@dataclass
class PatchRecord:
    origin: Tuple[int, int]
    outer_iterations: int
    reports: List[Tuple[str, SolveReport]]


def solve_patch(ps: PatchSystem, params: RetinexParams):
    """Alternate reflectance and illumination solves until both settle.

    Returns ``(l, r, reports)`` where ``reports`` lists ``(kind, SolveReport)``
    in execution order, ``kind`` being ``"reflectance"`` or ``"illumination"``.
    """
    l = np.clip(ps.l, params.l_floor, 1.0)
    r = np.clip(ps.r, params.r_floor, params.r_cap)
    gp = params.graph_params()
    reports: List[Tuple[str, SolveReport]] = []
    for _ in range(params.outer_iters):
        l_prev, r_prev = l, r

        A, b = _fast_system(l, ps.y, r, gp.sigma_r, ps.mu_r, gp, gradient=False)
        r, rep = _solve(A, b, params, "reflectance", ps.origin)
        r = np.clip(r, params.r_floor, params.r_cap)
        reports.append(("reflectance", rep))

        A, b = _fast_system(r, ps.y, l, gp.sigma_l, ps.mu_l, gp, gradient=True)
        l, rep = _solve(A, b, params, "illumination", ps.origin)
        l = np.clip(l, params.l_floor, 1.0)
        reports.append(("illumination", rep))

        if max(_rel_change(l, l_prev), _rel_change(r, r_prev)) <= params.outer_tol:
            break
    return l, r, reports


def gamma_correct(l, r, gamma: float) -> np.ndarray:
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return np.clip(np.power(np.asarray(l, dtype=float), gamma) * np.asarray(r, dtype=float), 0.0, 1.0)


# ---------------------------------------------------------------------------
# whole image

@dataclass
class EnhanceReport:
    patches: List[PatchRecord] = field(default_factory=list)
    wall_time: float = 0.0
    height: int = 0
    width: int = 0


def patch_origins(height: int, width: int, n: int):
    return [(i, j) for i in range(0, height, n) for j in range(0, width, n)]


def enhance_image(img: PlanarImage, params: RetinexParams = RetinexParams(), threads: int = 1,
                  order: Optional[Sequence[int]] = None):
    """Enhance ``img`` patch by patch; returns ``(PlanarImage, EnhanceReport)``.

    ``order`` permutes the patch processing order (results do not depend on it).
    """
    t0 = time.perf_counter()
    n = params.patch_size
    if img.height % n or img.width % n:
        raise ValueError(
            f"image is {img.height}x{img.width}; height and width must be divisible by "
            f"patch size {n} (crop or resize first)"
        )
    v = img.data.max(axis=2)
    l0, r0 = initialize(v, params)
    origins = patch_origins(img.height, img.width, n)

    def work(idx):
        i, j = origins[idx]
        sl = (slice(i, i + n), slice(j, j + n))
        ps = PatchSystem(n, v[sl], l0[sl], r0[sl], params.mu_r, params.mu_l, origin=(i, j))
        l, r, reps = solve_patch(ps, params)
        outer = sum(1 for kind, _ in reps if kind == "reflectance")
        return idx, gamma_correct(l, r, params.gamma).reshape(n, n), PatchRecord((i, j), outer, reps)

    seq = list(range(len(origins))) if order is None else list(order)
    if sorted(seq) != list(range(len(origins))):
        raise ValueError("order must be a permutation of the patch indices")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, seq))
    else:
        results = [work(k) for k in seq]

    x = np.empty_like(v)
    records: List[Optional[PatchRecord]] = [None] * len(origins)
    for idx, patch_out, rec in results:
        i, j = origins[idx]
        x[i:i + n, j:j + n] = patch_out
        records[idx] = rec

    out = restore_color(img.data, v, x, params.color_floor)
    report = EnhanceReport(records, time.perf_counter() - t0, img.height, img.width)
    return PlanarImage(out), report


def restore_color(rgb: np.ndarray, v_in: np.ndarray, v_out: np.ndarray, floor: float) -> np.ndarray:
    """Scale every channel by v_out / v_in; where v_in <= floor emit gray v_out."""
    if rgb.shape[2] == 1:
        return np.clip(v_out[:, :, None], 0.0, 1.0)
    ok = v_in > floor
    ratio = np.where(ok, v_out / np.where(ok, v_in, 1.0), 0.0)
    out = rgb * ratio[:, :, None]
    out = np.where(ok[:, :, None], out, v_out[:, :, None])
    return np.clip(out, 0.0, 1.0)
