"""Ellipsoid values, factorizations, membership tests and ball/sphere samplers.

An ellipsoid is stored as a center ``c`` and a symmetric positive-definite
shape matrix ``P`` and describes the set ``{x : (x-c)^T P^{-1} (x-c) <= 1}``,
equivalently ``{c + L u : ||u|| <= 1}`` with ``L`` the lower Cholesky factor
of ``P``.  All quadratic forms are evaluated through the Cholesky factor by
triangular solves; ``P`` is never inverted explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite, SingularTransform

# Relative eigenvalue floor below which a shape matrix counts as degenerate.
PD_RTOL = 1e-12


def _as_locked(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor ``L`` with ``L L^T`` equal to some shape matrix."""

    lower: np.ndarray

    def __post_init__(self):
        lower = _as_locked(self.lower)
        if lower.ndim != 2 or lower.shape[0] != lower.shape[1]:
            raise DimensionMismatch(f"factor must be square, got {lower.shape}")
        if np.any(np.diag(lower) <= 0.0):
            raise NotPositiveDefinite("Cholesky factor has a non-positive diagonal entry")
        object.__setattr__(self, "lower", lower)


@dataclass(frozen=True)
class Ellipsoid:
    """Validated ellipsoid (center, SPD shape matrix).

    Construction symmetrizes ``shape`` as ``(S + S^T)/2`` to absorb solver
    round-off, then rejects matrices whose smallest eigenvalue is at or below
    ``PD_RTOL * lambda_max``.  Instances are immutable and safe to share.
    """

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        center = _as_locked(np.atleast_1d(self.center))
        shape = np.array(self.shape, dtype=float)
        if center.ndim != 1:
            raise DimensionMismatch("center must be a vector")
        if shape.ndim != 2 or shape.shape[0] != shape.shape[1]:
            raise DimensionMismatch(f"shape matrix must be square, got {shape.shape}")
        if shape.shape[0] != center.size:
            raise DimensionMismatch(
                f"center has dim {center.size} but shape matrix is {shape.shape[0]}x{shape.shape[0]}"
            )
        asym = np.max(np.abs(shape - shape.T))
        if asym > 1e-12 * (1.0 + np.max(np.abs(shape))):
            raise NotPositiveDefinite(f"shape matrix is not symmetric (max asymmetry {asym:.3e})")
        shape = 0.5 * (shape + shape.T)
        eigs = np.linalg.eigvalsh(shape)
        if eigs[0] <= PD_RTOL * max(eigs[-1], 0.0) or eigs[0] <= 0.0:
            raise NotPositiveDefinite(
                f"shape matrix is not positive definite (eigenvalues in [{eigs[0]:.3e}, {eigs[-1]:.3e}])"
            )
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", _as_locked(shape))

    @property
    def dim(self) -> int:
        return self.center.size

    @cached_property
    def _chol_lower(self) -> np.ndarray:
        try:
            return _as_locked(np.linalg.cholesky(self.shape))
        except np.linalg.LinAlgError as err:  # pragma: no cover - guarded by eig check
            raise NotPositiveDefinite("Cholesky factorization broke down") from err

    def cholesky(self) -> CholeskyFactor:
        """Lower Cholesky factor of the shape matrix."""
        return CholeskyFactor(self._chol_lower)

    def quadratic_form(self, x: np.ndarray) -> float:
        """Evaluate ``(x-c)^T P^{-1} (x-c)`` via a triangular solve."""
        x = np.asarray(x, dtype=float)
        if x.shape != self.center.shape:
            raise DimensionMismatch(f"point has shape {x.shape}, expected {self.center.shape}")
        z = scipy.linalg.solve_triangular(self._chol_lower, x - self.center, lower=True)
        return float(z @ z)

    def contains(self, x: np.ndarray, slack: float = 0.0) -> bool:
        """Membership test: quadratic form at most ``1 + slack``."""
        if slack < 0.0:
            raise ValueError("slack must be nonnegative")
        return self.quadratic_form(x) <= 1.0 + slack

    def quadratic_form_many(self, pts: np.ndarray) -> np.ndarray:
        """Quadratic forms for a batch of points, one per row."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionMismatch(f"points must be (m, {self.dim}), got {pts.shape}")
        z = scipy.linalg.solve_triangular(self._chol_lower, (pts - self.center).T, lower=True)
        return np.einsum("ij,ij->j", z, z)

    def boundary_points(self, n: int = 200) -> np.ndarray:
        """Equally-spaced boundary polyline (2-D only), for plot data export."""
        if self.dim != 2:
            raise DimensionMismatch("boundary polyline only defined for 2-D ellipsoids")
        ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=True)
        circle = np.column_stack([np.cos(ang), np.sin(ang)])
        return self.center + circle @ self._chol_lower.T


def make_ellipsoid(center: np.ndarray, shape: np.ndarray) -> Ellipsoid:
    """Validated ellipsoid construction (symmetrizes before the PD check)."""
    return Ellipsoid(np.asarray(center, dtype=float), np.asarray(shape, dtype=float))


def ensure_pd(shape: np.ndarray, rtol: float = 1e-11) -> np.ndarray:
    """Symmetrize and floor the spectrum of a nearly-PD matrix.

    Solver output can sit right at the degeneracy threshold; bumping the
    smallest eigenvalue only ever enlarges the ellipsoid, so containment
    semantics are preserved.
    """
    shape = np.asarray(shape, dtype=float)
    sym = 0.5 * (shape + shape.T)
    eigs = np.linalg.eigvalsh(sym)
    floor = rtol * (1.0 + max(eigs[-1], 0.0))
    if eigs[0] < floor:
        sym = sym + (floor - eigs[0]) * np.eye(sym.shape[0])
    return sym


def point_ellipsoid(center: np.ndarray, eps: float | None = None) -> Ellipsoid:
    """Numerically tiny ball around ``center``.

    Used where a degenerate (single-point) uncertainty set must still carry a
    valid Cholesky factor.  Default radius^2 is ``1e-12 * (1 + ||center||^2)``.
    """
    center = np.asarray(center, dtype=float)
    if eps is None:
        eps = 1e-12 * (1.0 + float(center @ center))
    return Ellipsoid(center, eps * np.eye(center.size))


def cholesky(e: Ellipsoid) -> CholeskyFactor:
    return e.cholesky()


def contains(e: Ellipsoid, x: np.ndarray, slack: float = 0.0) -> bool:
    return e.contains(x, slack)


def affine_image(e: Ellipsoid, A: np.ndarray, b: np.ndarray | None = None) -> Ellipsoid:
    """Image ellipsoid under ``x -> A x + b`` for square nonsingular ``A``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"transform must be square, got {A.shape}")
    if A.shape[0] != e.dim:
        raise DimensionMismatch(f"transform is {A.shape[0]}-dim but ellipsoid is {e.dim}-dim")
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise SingularTransform("transform matrix is singular")
    b = np.zeros(e.dim) if b is None else np.asarray(b, dtype=float)
    shape = A @ e.shape @ A.T
    return Ellipsoid(A @ e.center + b, 0.5 * (shape + shape.T))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_unit_ball(dim: int, n: int, seed=0) -> np.ndarray:
    """``n`` points uniform in the closed unit ball of ``R^dim``.

    Gaussian directions scaled by radius ``U^(1/dim)``; returns an (n, dim)
    array with every row norm at most 1.
    """
    if dim < 1 or n < 1:
        raise ValueError("dim and n must be positive")
    rng = _rng(seed)
    dirs = _nonzero_gaussian(rng, n, dim)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / dim)
    return dirs * radii[:, None]


def sample_unit_sphere(dim: int, n: int, seed=0, deterministic: bool = False) -> np.ndarray:
    """``n`` points on the unit sphere of ``R^dim``.

    With ``deterministic=True`` (2-D only) the points form the equal-angle
    grid ``2*pi*k/n``, which makes small boundary-sample counts reproducible.
    """
    if dim < 1 or n < 1:
        raise ValueError("dim and n must be positive")
    if deterministic:
        if dim != 2:
            raise DimensionMismatch("deterministic sphere grid is only defined for dim=2")
        ang = 2.0 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(ang), np.sin(ang)])
    rng = _rng(seed)
    dirs = _nonzero_gaussian(rng, n, dim)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _nonzero_gaussian(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    # Redraw the (measure-zero) rows whose norm underflows.
    out = rng.standard_normal((n, dim))
    norms = np.linalg.norm(out, axis=1)
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        out[bad] = rng.standard_normal((int(np.sum(bad)), dim))
        norms = np.linalg.norm(out, axis=1)
    return out


def sample_in_ellipsoid(e: Ellipsoid, n: int, seed=0) -> np.ndarray:
    """``n`` points uniform in ``e`` (affine image of uniform ball samples)."""
    u = sample_unit_ball(e.dim, n, seed)
    return e.center + u @ e.cholesky().lower.T
