"""Retinex low-light enhancement with graph Laplacian regularisers solved by Jacobi-preconditioned CG."""

from .graphs import GraphParams, LineGraph, bilateral_weight, build_line_graph, gng_laplacian, laplacian
from .linalg import SparseSymMatrix, SolveReport, build_jacobi, cg_solve, estimate_condition_number, matvec
from .metrics import loe, mse_psnr
from .retinex import PlanarImage, RetinexParams, enhance_image, solve_patch

__version__ = "0.1.0"

__all__ = [
    "GraphParams", "LineGraph", "bilateral_weight", "build_line_graph", "gng_laplacian", "laplacian",
    "SparseSymMatrix", "SolveReport", "build_jacobi", "cg_solve", "estimate_condition_number", "matvec",
    "loe", "mse_psnr", "PlanarImage", "RetinexParams", "enhance_image", "solve_patch",
]
