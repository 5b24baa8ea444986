"""Matrix-free Poisson fusion of a dense relative prior with sparse anchors.

The unknown pixels solve ``A_UU x_U = (L E - L v)_U`` where ``L`` is the
negative 5-point Laplacian (diagonal +4), ``E`` the prior and ``v`` the
zero-extended Dirichlet field. ``A_UU`` is applied by masking one stencil
pass over the full raster, so memory stays image-sized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import direction_stencil, step
from .errors import DimensionError, GridError, NumericalError
from .grid import (
    IndexPartition,
    as_depth,
    assemble_dirichlet_field,
    build_partition,
    check_min_size,
    check_same_shape,
)


@dataclass(frozen=True)
class CgSettings:
    rel_tolerance: float = 1e-8
    max_iterations: int | None = None
    # reserved: only None (no preconditioning) is implemented
    preconditioner: str | None = None

    def __post_init__(self):
        if not 0.0 < self.rel_tolerance < 1.0:
            raise ValueError(f"rel_tolerance must lie in (0, 1), got {self.rel_tolerance}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.preconditioner is not None:
            raise ValueError(f"unsupported preconditioner {self.preconditioner!r}")

    def iteration_cap(self, n_unknown: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return int(10 * math.sqrt(n_unknown)) + 100


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_rel_residual: float
    converged: bool


class TouchCounter:
    """Counts stencil applications and the raster pixels they visit."""

    def __init__(self):
        self.applications = 0
        self.pixels = 0

    def record(self, n_pixels: int) -> None:
        self.applications += 1
        self.pixels += n_pixels


def apply_laplacian(grid) -> np.ndarray:
    """Negative 5-point Laplacian on interior pixels; border output is 0."""
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise GridError(f"grid must be 2-D, got shape {g.shape}")
    check_min_size(g.shape)
    out = np.zeros_like(g)
    out[1:-1, 1:-1] = (
        4.0 * g[1:-1, 1:-1] - g[:-2, 1:-1] - g[2:, 1:-1] - g[1:-1, :-2] - g[1:-1, 2:]
    )
    return out


def _masked_stencil(x: np.ndarray, unknown_mask: np.ndarray, counter: TouchCounter | None) -> np.ndarray:
    # x is zero on known pixels; the mask discards rows outside U
    out = np.zeros_like(x)
    c = out[1:-1, 1:-1]
    np.multiply(x[1:-1, 1:-1], 4.0, out=c)
    c -= x[:-2, 1:-1]
    c -= x[2:, 1:-1]
    c -= x[1:-1, :-2]
    c -= x[1:-1, 2:]
    out *= unknown_mask
    if counter is not None:
        counter.record(x.size)
    return out


def apply_restricted_operator(x_u, partition: IndexPartition) -> np.ndarray:
    """Apply ``A_UU`` to a vector over the unknown pixels."""
    x_u = np.asarray(x_u, dtype=np.float64)
    if x_u.shape != partition.unknown.shape:
        raise DimensionError(
            f"vector has length {x_u.size}, partition has {partition.unknown.size} unknowns"
        )
    grid = partition.scatter(x_u)
    return partition.gather(_masked_stencil(grid, partition.unknown_mask, None))


def build_rhs(prior, dirichlet, partition: IndexPartition) -> np.ndarray:
    prior = as_depth(prior, "prior", allow_negative=True)
    dirichlet = as_depth(dirichlet, "dirichlet", allow_negative=True)
    check_same_shape(prior=prior, dirichlet=dirichlet)
    if partition.shape != prior.shape:
        raise DimensionError(f"partition built for {partition.shape}, rasters are {prior.shape}")
    return partition.gather(apply_laplacian(prior) - apply_laplacian(dirichlet))


def _cg_grid(b: np.ndarray, unknown_mask: np.ndarray, tol: float, cap: int,
             counter: TouchCounter | None) -> tuple[np.ndarray, SolveReport]:
    """Unpreconditioned CG on raster-shaped vectors that vanish off ``U``."""
    x = np.zeros_like(b)
    b_norm = math.sqrt(float(np.vdot(b, b)))
    if b_norm == 0.0:
        return x, SolveReport(0, 0.0, True)
    mask = np.ascontiguousarray(unknown_mask, dtype=np.bool_)
    r = b.copy()
    p = np.zeros_like(b)
    rr = float(np.vdot(r, r))
    beta = 0.0
    threshold = tol * b_norm
    it = 0
    while it < cap:
        pap = direction_stencil(p, r, beta, mask)
        if counter is not None:
            counter.record(b.size)
        if not math.isfinite(pap) or pap <= 0.0:
            raise NumericalError(f"CG breakdown at iteration {it}: <p, Ap> = {pap}")
        rr_new = step(x, r, p, mask, rr / pap)
        it += 1
        if not math.isfinite(rr_new):
            raise NumericalError(f"non-finite residual at iteration {it}")
        if math.sqrt(rr_new) <= threshold:
            # confirm against the true residual; restart from it if drift hid the error
            r = b - _masked_stencil(x, mask, counter)
            rr_new = float(np.vdot(r, r))
            rel = math.sqrt(rr_new) / b_norm
            if rel <= tol:
                return x, SolveReport(it, rel, True)
            beta = 0.0
        else:
            beta = rr_new / rr
        rr = rr_new
    r_true = b - _masked_stencil(x, mask, counter)
    rel = math.sqrt(float(np.vdot(r_true, r_true))) / b_norm
    return x, SolveReport(it, rel, rel <= tol)


def conjugate_gradient(rhs, partition: IndexPartition, settings: CgSettings | None = None,
                       counter: TouchCounter | None = None) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A_UU x = rhs`` from a zero initial guess.

    Non-convergence is reported through ``SolveReport.converged``; a
    non-finite residual raises :class:`NumericalError`.
    """
    settings = settings or CgSettings()
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != partition.unknown.shape:
        raise DimensionError(
            f"rhs has length {rhs.size}, partition has {partition.unknown.size} unknowns"
        )
    if not np.all(np.isfinite(rhs)):
        raise NumericalError("rhs contains non-finite values")
    b = partition.scatter(rhs)
    cap = settings.iteration_cap(partition.unknown.size)
    x, report = _cg_grid(b, partition.unknown_mask, settings.rel_tolerance, cap, counter)
    return partition.gather(x), report


def densify(sparse, prior, settings: CgSettings | None = None,
            counter: TouchCounter | None = None) -> tuple[np.ndarray, SolveReport]:
    """Fuse ``prior`` with the anchors in ``sparse`` into a dense metric map.

    Anchor pixels are copied verbatim; border pixels without a measurement
    keep the prior value; every other pixel comes from the Poisson solve.
    The result is not clamped.
    """
    sparse = as_depth(sparse, "sparse")
    prior = as_depth(prior, "prior", allow_negative=True)
    check_same_shape(sparse=sparse, prior=prior)
    partition = build_partition(sparse)
    dirichlet = assemble_dirichlet_field(sparse, prior, partition)
    rhs = build_rhs(prior, dirichlet, partition)
    x_u, report = conjugate_gradient(rhs, partition, settings, counter)
    out = dirichlet.copy()
    out.ravel()[partition.unknown] = x_u
    return out, report


def scale_shift_align(prior, sparse) -> tuple[np.ndarray, float, float]:
    """Least-squares fit ``a * prior + b`` to the anchors, with ``a > 0``.

    If the unconstrained slope is not positive it is clamped to 1e-6 and the
    shift refit for that slope.
    """
    prior = as_depth(prior, "prior", allow_negative=True)
    sparse = as_depth(sparse, "sparse")
    check_same_shape(prior=prior, sparse=sparse)
    sel = sparse > 0
    n = int(sel.sum())
    if n < 2:
        raise GridError(f"scale/shift alignment needs at least 2 anchors, got {n}")
    e = prior[sel]
    d = sparse[sel]
    e_mean = e.mean()
    d_mean = d.mean()
    var = float(np.sum((e - e_mean) ** 2))
    if var == 0.0:
        raise GridError("prior is constant over the anchor pixels; scale is undetermined")
    a = float(np.sum((e - e_mean) * (d - d_mean))) / var
    if a <= 0.0:
        a = 1e-6
    b = float(d_mean - a * e_mean)
    return a * prior + b, a, b
