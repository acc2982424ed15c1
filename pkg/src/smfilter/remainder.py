"""Ellipsoidal bounding of linearization remainders.

The exact requirement -- one constraint per point of the unit ball -- is a
semi-infinite program.  It is relaxed by sampling: draw points ``u^i``,
evaluate the remainder, and fit the minimum-trace ellipsoid containing the
sampled values via the Schur-complement LMI

    [ -1             (d_i - e)^T ]
    [ d_i - e        -P          ]  <= 0        for every sample i.

For the range-bearing measurement map the remainder set's boundary is the
image of the unit circle whenever the position ellipse stays clear of the
sensor radial ``{x <= a, y = b}``, so boundary-only sampling suffices there;
``check_boundary_applicable`` decides that precondition in closed form.

``bound_remainder_interval`` provides the coarser alternative used for
comparison: a natural interval extension of the remainder over the ball's
bounding box, covered by a minimum-trace axis-aligned ellipsoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram, LmiBlock, SolverOptions
from .dynamics import RangeBearingMap, RemainderEval
from .ellipsoids import (
    CholeskyFactor,
    Ellipsoid,
    point_ellipsoid,
    sample_unit_ball,
    sample_unit_sphere,
)
from .errors import DimensionMismatch, IntervalBlowup, SmFilterError, SolverFailure

#: Samples whose spread stays below this (relative) threshold count as a
#: single point and produce a point ellipsoid instead of an SDP solve.
DEGENERATE_RTOL = 1e-10


@dataclass(frozen=True)
class SamplePlan:
    """How to sample the unit ball when bounding a remainder.

    ``boundary`` mode samples the sphere; with ``deterministic=True`` and a
    2-D remainder it uses the equal-angle grid (reproducible small counts).
    ``ball`` mode samples uniformly from the closed ball.  For remainders of
    other dimensions the deterministic flag falls back to seeded random
    sphere points.
    """

    mode: str = "boundary"
    count: int = 50
    deterministic: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("boundary", "ball"):
            raise ValueError(f"unknown sample mode {self.mode!r}")
        if self.count < 1:
            raise ValueError("sample count must be positive")

    def draw(self, dim: int, seed_offset: int = 0) -> np.ndarray:
        seed = self.seed + seed_offset
        if self.mode == "boundary":
            return sample_unit_sphere(
                dim, self.count, seed, deterministic=self.deterministic and dim == 2
            )
        return sample_unit_ball(dim, self.count, seed)


@dataclass(frozen=True)
class BoundaryApplicability:
    holds: bool
    reason: str


def radial_line_constants(base: np.ndarray, factor: np.ndarray, a: float, b: float) -> tuple[float, float]:
    """Coefficients (c, d) of the zero line ``c*u1 + d*u2 = 0`` of the remainder.

    Along this line the position ``base + E u`` stays on the ray from the
    sensor through ``base``, so the range-bearing remainder vanishes.
    """
    E = factor.lower if isinstance(factor, CholeskyFactor) else np.asarray(factor, dtype=float)
    x, y = float(base[0]), float(base[1])
    c = E[0, 0] * (y - b) - E[1, 0] * (x - a)
    d = E[0, 1] * (y - b) - E[1, 1] * (x - a)
    return c, d


def check_boundary_applicable(base: np.ndarray, factor: np.ndarray | CholeskyFactor,
                              a: float, b: float) -> BoundaryApplicability:
    """Does the position ellipse miss the sensor radial ``{x <= a, y = b}``?

    The chord of the ellipse on the line ``y = b`` is an interval in x found
    from the quadratic form; the radial is hit iff that chord is nonempty and
    starts at or left of ``a``.
    """
    base = np.asarray(base, dtype=float)
    E = factor.lower if isinstance(factor, CholeskyFactor) else np.asarray(factor, dtype=float)
    if base.shape != (2,) or E.shape != (2, 2):
        raise DimensionMismatch("applicability check needs the 2-D position block")
    P = E @ E.T
    S = np.linalg.inv(P)
    beta = b - base[1]
    # (t - c1) solves s00 t'^2 + 2 s01 beta t' + (s11 beta^2 - 1) <= 0
    disc = (S[0, 1] * beta) ** 2 - S[0, 0] * (S[1, 1] * beta**2 - 1.0)
    if disc < 0.0:
        return BoundaryApplicability(True, "ellipse does not reach the line y = b")
    t_lo = base[0] + (-S[0, 1] * beta - math.sqrt(disc)) / S[0, 0]
    if t_lo <= a:
        return BoundaryApplicability(
            False, f"ellipse meets the radial: chord on y = b starts at x = {t_lo:.6g} <= {a:.6g}"
        )
    return BoundaryApplicability(True, f"chord on y = b starts at x = {t_lo:.6g} > {a:.6g}")


def min_trace_ellipsoid(points: np.ndarray, backend, options: SolverOptions | None = None,
                        report_sink: list | None = None) -> Ellipsoid:
    """Minimum-trace ellipsoid containing a finite point set (SDP).

    The returned shape matrix gets its smallest eigenvalue floored so the
    Cholesky factor exists, and is rescaled minimally if solver slack left
    any input point outside.  Both adjustments only ever enlarge the set.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, k = pts.shape
    program = ConicProgram()
    center = program.vector("center", k)
    shape = program.matrix("shape", k, symmetric=True)

    def center_term(v):
        out = np.zeros((k + 1, k + 1))
        out[0, 1:] = -np.asarray(v).reshape(k)
        out[1:, 0] = -np.asarray(v).reshape(k)
        return out

    def shape_term(M):
        out = np.zeros((k + 1, k + 1))
        out[1:, 1:] = -np.asarray(M)
        return out

    for p in pts:
        const = np.zeros((k + 1, k + 1))
        const[0, 0] = -1.0
        const[0, 1:] = p
        const[1:, 0] = p
        program.add_lmi(LmiBlock(const, [("center", center_term), ("shape", shape_term)]))
    program.minimize_trace(shape)

    report = backend.solve(program, options)
    if report_sink is not None:
        report_sink.append(report)
    if report.status != "optimal":
        raise SolverFailure(f"enclosing-ellipsoid SDP failed: {report.status} ({report.solver_status})")

    c = np.asarray(report.assignments["center"]).reshape(k)
    P = np.asarray(report.assignments["shape"])
    P = 0.5 * (P + P.T)
    eigs = np.linalg.eigvalsh(P)
    floor = 1e-12 * (1.0 + max(eigs[-1], 0.0))
    if eigs[0] < floor:
        P = P + (floor - eigs[0]) * np.eye(k)
    ell = Ellipsoid(c, P)
    worst = float(np.max(ell.quadratic_form_many(pts)))
    if worst > 1.0:
        ell = Ellipsoid(c, P * worst)
    return ell


def bound_remainder(ev: RemainderEval, plan: SamplePlan, backend,
                    options: SolverOptions | None = None, inflation: float = 1.0,
                    seed_offset: int = 0, report_sink: list | None = None) -> Ellipsoid:
    """Ellipsoid covering the sampled remainder values of ``ev``.

    Coincident samples (linear maps) short-circuit to a point ellipsoid with
    shape ``eps*I``, ``eps = 1e-12*(1+||center||^2)``.  ``inflation``
    multiplies the shape matrix post-solve for callers wanting margin.
    """
    if inflation < 1.0:
        raise ValueError("inflation factor must be >= 1")
    us = plan.draw(ev.in_dim, seed_offset)
    vals = ev.values(us)
    if plan.count < ev.out_dim + 1:
        raise ValueError(f"need at least {ev.out_dim + 1} samples to fit a {ev.out_dim}-D ellipsoid")

    mean = vals.mean(axis=0)
    spread = float(np.max(np.abs(vals - mean))) if len(vals) else 0.0
    if spread <= DEGENERATE_RTOL * (1.0 + float(np.max(np.abs(mean)))):
        return point_ellipsoid(mean)

    ell = min_trace_ellipsoid(vals, backend, options, report_sink)
    if inflation != 1.0:
        ell = Ellipsoid(ell.center, ell.shape * inflation)
    return ell


# -- interval-arithmetic alternative ----------------------------------------


@dataclass(frozen=True)
class Interval:
    """Closed interval with the handful of operations the bearing map needs."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    def __add__(self, other):
        o = _as_interval(other)
        return Interval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        return self + (-_as_interval(other))

    def __rsub__(self, other):
        return _as_interval(other) + (-self)

    def __mul__(self, other):
        o = _as_interval(other)
        prods = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(min(prods), max(prods))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _as_interval(other)
        if o.lo <= 0.0 <= o.hi:
            raise IntervalBlowup(f"division by an interval containing zero: [{o.lo}, {o.hi}]")
        return self * Interval(1.0 / o.hi, 1.0 / o.lo)

    def square(self) -> "Interval":
        if self.lo >= 0.0:
            return Interval(self.lo**2, self.hi**2)
        if self.hi <= 0.0:
            return Interval(self.hi**2, self.lo**2)
        return Interval(0.0, max(self.lo**2, self.hi**2))

    def sqrt(self) -> "Interval":
        if self.hi < 0.0:
            raise ValueError("sqrt of a negative interval")
        return Interval(math.sqrt(max(self.lo, 0.0)), math.sqrt(self.hi))

    def atan(self) -> "Interval":
        return Interval(math.atan(self.lo), math.atan(self.hi))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _as_interval(x) -> Interval:
    return x if isinstance(x, Interval) else Interval(float(x), float(x))


def _interval_bearing(dx: Interval, dy: Interval) -> Interval:
    # Quadrant-resolved arctangent; the enclosure is only bounded when the
    # x-offset interval is sign-definite (and, for negative x, the bearing
    # does not straddle the +-pi cut).
    if dx.lo > 0.0:
        return (dy / dx).atan()
    if dx.hi < 0.0:
        if dy.lo > 0.0:
            return (dy / dx).atan() + math.pi
        if dy.hi < 0.0:
            return (dy / dx).atan() - math.pi
        raise IntervalBlowup("bearing interval straddles the +-pi branch cut")
    raise IntervalBlowup("x-offset interval contains zero; bearing enclosure unbounded")


def range_bearing_remainder_box(rb: RangeBearingMap, base: np.ndarray,
                                factor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Natural interval enclosure of the 2-D range-bearing remainder.

    Uses the bounding box ``[-1, 1]^2`` of the unit disk, so the box is a
    superset of the true remainder range (possibly by a wide margin; that is
    the point of the comparison).
    """
    base = np.asarray(base, dtype=float)
    E = np.asarray(factor, dtype=float)
    z1 = Interval(base[0] - abs(E[0, 0]) - abs(E[0, 1]), base[0] + abs(E[0, 0]) + abs(E[0, 1]))
    z2 = Interval(base[1] - abs(E[1, 0]) - abs(E[1, 1]), base[1] + abs(E[1, 0]) + abs(E[1, 1]))
    dx = z1 - rb.a
    dy = z2 - rb.b
    rng = (dx.square() + dy.square()).sqrt()
    brg = _interval_bearing(dx, dy)
    h0 = rb.h(base)
    je = rb.jac(base) @ E
    lin = [Interval(-float(np.sum(np.abs(je[i]))), float(np.sum(np.abs(je[i])))) for i in range(2)]
    d1 = rng - h0[0] - lin[0]
    d2 = brg - h0[1] - lin[1]
    return np.array([d1.lo, d2.lo]), np.array([d1.hi, d2.hi])


def box_trace_ellipsoid(lo: np.ndarray, hi: np.ndarray) -> Ellipsoid:
    """Minimum-trace axis-aligned ellipsoid through the vertices of a box.

    For half-widths r the optimal diagonal is ``p_i = r_i * sum(r)``; zero
    widths are floored so the shape matrix stays positive definite.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    total = float(np.sum(r))
    if total <= 0.0:
        return point_ellipsoid(mid)
    diag = r * total
    eps = 1e-12 * (1.0 + float(mid @ mid))
    diag = np.maximum(diag, eps)
    return Ellipsoid(mid, np.diag(diag))


def bound_remainder_interval(ev: RemainderEval) -> Ellipsoid:
    """Interval-arithmetic remainder bound (comparison baseline).

    Only maps with a natural interval extension are supported: linear maps
    (zero remainder) and the reduced 2-D range-bearing remainder.
    """
    if ev.linear:
        return point_ellipsoid(np.zeros(ev.out_dim))
    if ev.rb_map is not None:
        lo, hi = range_bearing_remainder_box(ev.rb_map, ev.base, ev.factor)
        return box_trace_ellipsoid(lo, hi)
    raise SmFilterError("no interval form available for this remainder evaluator")
