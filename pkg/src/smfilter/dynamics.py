"""System models: process/measurement maps, analytic Jacobians, remainder evaluators.

Two concrete models are provided.  ``make_cv_tracking_model`` builds the
4-state constant-velocity tracker observed through range and bearing from a
sensor at the origin.  ``make_linear_model`` builds a fully linear system
(zero linearization remainder), useful as a containment oracle.

A linearization remainder evaluator represents

    delta(u) = g(base + E u) - g(base) - J_g(base) E u,    ||u|| <= 1,

the exact Taylor remainder of a map ``g`` over the unit-ball parametrization
of an ellipsoid with Cholesky factor ``E``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, OnSensorRadial, OutOfBall

BALL_SLACK = 1e-12


def wrap_angle(theta):
    """Wrap angles to the interval (-pi, pi]."""
    out = np.asarray(theta, dtype=float)
    wrapped = out - 2.0 * np.pi * np.ceil((out - np.pi) / (2.0 * np.pi))
    return wrapped if wrapped.ndim else float(wrapped)


@dataclass(frozen=True)
class RangeBearingMap:
    """Range and bearing to a sensor at (a, b), two-argument arctangent.

    The map is smooth everywhere except the radial ``{x <= a, y = b}``
    (the bearing branch cut); evaluation on the radial raises.
    """

    a: float = 0.0
    b: float = 0.0

    def _offsets(self, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pos = np.asarray(pos, dtype=float)
        dx = pos[..., 0] - self.a
        dy = pos[..., 1] - self.b
        if np.any((dy == 0.0) & (dx <= 0.0)):
            raise OnSensorRadial(f"point on the sensor radial of ({self.a}, {self.b})")
        return dx, dy

    def h(self, pos: np.ndarray) -> np.ndarray:
        dx, dy = self._offsets(pos)
        return np.stack([np.hypot(dx, dy), np.arctan2(dy, dx)], axis=-1)

    def jac(self, pos: np.ndarray) -> np.ndarray:
        dx, dy = self._offsets(pos)
        r = np.hypot(dx, dy)
        return np.array([[dx / r, dy / r], [-dy / r**2, dx / r**2]])

    def jac_many(self, pos: np.ndarray) -> np.ndarray:
        """Stacked 2x2 Jacobians for an (m, 2) batch of positions."""
        dx, dy = self._offsets(pos)
        r = np.hypot(dx, dy)
        out = np.empty(pos.shape[:-1] + (2, 2))
        out[..., 0, 0] = dx / r
        out[..., 0, 1] = dy / r
        out[..., 1, 0] = -dy / r**2
        out[..., 1, 1] = dx / r**2
        return out


def make_offset_range_bearing(a: float, b: float) -> RangeBearingMap:
    """Range-bearing measurement map for a sensor at (a, b)."""
    return RangeBearingMap(float(a), float(b))


@dataclass(frozen=True)
class DynamicsModel:
    """Process map, measurement map and their analytic Jacobians.

    ``f_matrix``/``h_matrix`` are set when the corresponding map is linear
    (the remainder is then identically zero).  ``sensor`` marks a
    range-bearing measurement acting on the first two state coordinates,
    which unlocks the reduced 2-D remainder treatment and the radial
    applicability test.  ``angular_meas`` lists measurement coordinates that
    live on the circle; residuals in those coordinates are wrapped.
    """

    state_dim: int
    meas_dim: int
    f: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    jac_f: Callable[[np.ndarray], np.ndarray]
    jac_h: Callable[[np.ndarray], np.ndarray]
    f_matrix: np.ndarray | None = None
    h_matrix: np.ndarray | None = None
    sensor: tuple[float, float] | None = None
    angular_meas: tuple[int, ...] = ()
    f_many: Callable[[np.ndarray], np.ndarray] | None = None
    h_many: Callable[[np.ndarray], np.ndarray] | None = None

    def wrap_residual(self, resid: np.ndarray) -> np.ndarray:
        """Wrap the angular coordinates of a measurement residual."""
        if not self.angular_meas:
            return resid
        out = np.array(resid, dtype=float)
        out[..., list(self.angular_meas)] = wrap_angle(out[..., list(self.angular_meas)])
        return out

    def apply_f(self, states: np.ndarray) -> np.ndarray:
        if self.f_many is not None:
            return self.f_many(states)
        return np.apply_along_axis(self.f, -1, states)

    def apply_h(self, states: np.ndarray) -> np.ndarray:
        if self.h_many is not None:
            return self.h_many(states)
        return np.apply_along_axis(self.h, -1, states)


class RemainderEval:
    """Exact Taylor remainder of one map around a base point.

    ``kind`` records whether this is a process or measurement remainder.
    ``linear`` marks maps with identically zero remainder; ``rb_map`` is set
    for the 2-D reduced range-bearing remainder and enables the interval
    and boundary-sampling treatments.  Instances are immutable once built.
    """

    __slots__ = ("base", "factor", "kind", "func", "out_dim", "linear",
                 "rb_map", "func_many", "_f0", "_je")

    def __init__(self, base, factor, kind, func, jac_at_base, out_dim,
                 linear=False, rb_map=None, func_many=None):
        base = np.asarray(base, dtype=float)
        factor = np.asarray(factor, dtype=float)
        if factor.shape[0] != base.size:
            raise DimensionMismatch("factor row count must match base dimension")
        self.base = base
        self.factor = factor
        self.kind = kind
        self.func = func
        self.out_dim = int(out_dim)
        self.linear = bool(linear)
        self.rb_map = rb_map
        self.func_many = func_many
        self._f0 = np.asarray(func(base), dtype=float)
        self._je = np.asarray(jac_at_base, dtype=float) @ factor

    @property
    def in_dim(self) -> int:
        return self.factor.shape[1]

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.in_dim,):
            raise DimensionMismatch(f"u must have shape ({self.in_dim},), got {u.shape}")
        if np.linalg.norm(u) > 1.0 + BALL_SLACK:
            raise OutOfBall(f"||u|| = {np.linalg.norm(u):.12f} exceeds 1")
        return self.func(self.base + self.factor @ u) - self._f0 - self._je @ u

    def values(self, us: np.ndarray) -> np.ndarray:
        """Remainder values for an (m, in_dim) batch of ball points."""
        us = np.asarray(us, dtype=float)
        if us.ndim != 2 or us.shape[1] != self.in_dim:
            raise DimensionMismatch(f"batch must be (m, {self.in_dim}), got {us.shape}")
        norms = np.linalg.norm(us, axis=1)
        if np.any(norms > 1.0 + BALL_SLACK):
            raise OutOfBall(f"max ||u|| = {norms.max():.12f} exceeds 1")
        pts = self.base + us @ self.factor.T
        if self.func_many is not None:
            vals = self.func_many(pts)
        else:
            vals = np.stack([self.func(p) for p in pts])
        return vals - self._f0 - us @ self._je.T


def remainder(ev: RemainderEval, u: np.ndarray) -> np.ndarray:
    return ev(u)


def process_remainder(model: DynamicsModel, base: np.ndarray, factor: np.ndarray) -> RemainderEval:
    return RemainderEval(
        base, factor, "process", model.f, model.jac_f(np.asarray(base, dtype=float)),
        model.state_dim, linear=model.f_matrix is not None, func_many=model.f_many,
    )


def measurement_remainder(model: DynamicsModel, base: np.ndarray, factor: np.ndarray) -> RemainderEval:
    return RemainderEval(
        base, factor, "measurement", model.h, model.jac_h(np.asarray(base, dtype=float)),
        model.meas_dim, linear=model.h_matrix is not None, func_many=model.h_many,
    )


def reduced_measurement_remainder(model: DynamicsModel, base: np.ndarray,
                                  factor: np.ndarray) -> RemainderEval:
    """2-D remainder evaluator of a range-bearing measurement.

    The measurement depends on the position block only, so the n-dimensional
    remainder set equals the remainder of the 2-D position map over the
    position-marginal ellipse: with P = E E^T, the marginal has shape
    ``P[:2, :2]`` and the full remainder set is ``{g2(u) : ||u||_2 <= 1}``.
    """
    if model.sensor is None:
        raise DimensionMismatch("model has no range-bearing sensor structure")
    base = np.asarray(base, dtype=float)
    factor = np.asarray(factor, dtype=float)
    rb = RangeBearingMap(*model.sensor)
    pos = base[:2]
    p_pos = (factor @ factor.T)[:2, :2]
    e_pos = np.linalg.cholesky(0.5 * (p_pos + p_pos.T))
    return RemainderEval(
        pos, e_pos, "measurement", rb.h, rb.jac(pos), 2, rb_map=rb, func_many=rb.h,
    )


def make_cv_tracking_model(T: float, F: np.ndarray | None = None) -> DynamicsModel:
    """Constant-velocity tracker with range-bearing measurements from the origin.

    State is (x, y, vx, vy).  The default transition matrix is the standard
    constant-velocity one; pass ``F`` to override the full matrix (e.g. to
    add a velocity cross-coupling term).
    """
    if T <= 0:
        raise ValueError("sampling interval T must be positive")
    if F is None:
        F = np.eye(4)
        F[0, 2] = T
        F[1, 3] = T
    F = np.asarray(F, dtype=float)
    if F.shape != (4, 4):
        raise DimensionMismatch(f"transition matrix must be 4x4, got {F.shape}")
    rb = RangeBearingMap(0.0, 0.0)

    def h(x):
        return rb.h(np.asarray(x, dtype=float)[:2])

    def jac_h(x):
        j2 = rb.jac(np.asarray(x, dtype=float)[:2])
        return np.hstack([j2, np.zeros((2, 2))])

    return DynamicsModel(
        state_dim=4,
        meas_dim=2,
        f=lambda x: F @ np.asarray(x, dtype=float),
        h=h,
        jac_f=lambda x: F,
        jac_h=jac_h,
        f_matrix=F,
        sensor=(0.0, 0.0),
        angular_meas=(1,),
        f_many=lambda xs: np.asarray(xs, dtype=float) @ F.T,
        h_many=lambda xs: rb.h(np.asarray(xs, dtype=float)[..., :2]),
    )


def make_linear_model(F: np.ndarray, H: np.ndarray) -> DynamicsModel:
    """Fully linear system; both linearization remainders vanish identically."""
    F = np.asarray(F, dtype=float)
    H = np.asarray(H, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise DimensionMismatch("F must be square")
    if H.ndim != 2 or H.shape[1] != F.shape[0]:
        raise DimensionMismatch("H column count must match the state dimension")
    return DynamicsModel(
        state_dim=F.shape[0],
        meas_dim=H.shape[0],
        f=lambda x: F @ np.asarray(x, dtype=float),
        h=lambda x: H @ np.asarray(x, dtype=float),
        jac_f=lambda x: F,
        jac_h=lambda x: H,
        f_matrix=F,
        h_matrix=H,
        f_many=lambda xs: np.asarray(xs, dtype=float) @ F.T,
        h_many=lambda xs: np.asarray(xs, dtype=float) @ H.T,
    )
