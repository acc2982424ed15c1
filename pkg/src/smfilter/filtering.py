"""Set-membership filter: SDP prediction, SDP measurement update, filter loop.

Both steps certify containment of the next state set by an ellipsoid through
the same construction: collect every uncertain coordinate into one vector

    prediction:  xi = [1, u, w, v, delta_f, delta_h]
    update:      xi = [1, u, v, delta_h]

so that the state error is ``Phi(xhat_next) xi`` and the measurement pins
``Psi(y) xi = 0``, with each uncertainty block constrained by a quadratic
inequality.  Nonnegative multipliers (one per inequality) turn the
containment requirement into a single matrix inequality; projecting onto an
orthonormal null-space basis of ``Psi`` eliminates the free measurement
multiplier, and a Schur complement yields the block LMI

    [ -P                    Phi N      ]
    [ (Phi N)^T    -N^T Xi N           ]  <= 0,      N = null basis of Psi,

with ``Xi = diag(1 - sum tau, tau_u I, tau_w Q^-1, ...)``.  Minimizing
``tr(P)`` subject to this LMI (plus ``P`` positive definite and ``tau >= 0``)
gives the tightest certified ellipsoid in the sum-of-squared-semiaxes sense.

The multiplier on the scalar slot, ``1 - sum tau``, is deliberately free in
sign; only the individual ``tau`` are constrained.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .conic import ConicProgram, LmiBlock, SolveReport, SolverOptions
from .dynamics import (
    DynamicsModel,
    RemainderEval,
    measurement_remainder,
    process_remainder,
    reduced_measurement_remainder,
)
from .ellipsoids import Ellipsoid, ensure_pd
from .errors import (
    BoundaryNotApplicable,
    DimensionMismatch,
    InfeasiblePrediction,
    InfeasibleUpdate,
    SolverFailure,
)
from .remainder import SamplePlan, bound_remainder, check_boundary_applicable

#: Rank cutoff for the null-space basis, relative to the largest singular value.
NULLSPACE_RTOL = 1e-10


@dataclass
class StepDiagnostics:
    """Per-cycle byproducts kept for auditing a filter run."""

    predicted: Ellipsoid | None = None
    process_bound: Ellipsoid | None = None
    meas_bound_predict: Ellipsoid | None = None
    meas_bound_update: Ellipsoid | None = None
    predict_report: SolveReport | None = None
    update_report: SolveReport | None = None
    wall_time: float = 0.0


@dataclass
class FilterState:
    """Estimation ellipsoid at one step, plus how it was obtained."""

    estimate: Ellipsoid
    step: int
    kind: str = "estimate"  # "estimate" | "predicted"
    diagnostics: StepDiagnostics | None = None

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step index must be nonnegative")


@dataclass
class LmiAssembly:
    """Raw pieces of one step's LMI before program construction.

    ``phi0`` is the state-error map with the decision offset zeroed (the
    center variable enters only through the scalar column).  ``xi_blocks``
    pairs each multiplier name with its slice of the xi vector and the
    matrix it weights.  ``psi_perp`` is an orthonormal null-space basis of
    ``psi`` (the identity when no measurement constrains the step).
    """

    phi0: np.ndarray
    psi: np.ndarray | None
    psi_perp: np.ndarray
    xi_blocks: list[tuple[str, slice, np.ndarray]]
    n: int
    trace_scale: float = 1.0


def _nullspace(psi: np.ndarray) -> np.ndarray:
    basis = scipy.linalg.null_space(psi, rcond=NULLSPACE_RTOL)
    if basis.size == 0:
        raise SolverFailure("measurement matrix has full row space; no null basis")
    return basis


def _inv_sym(M: np.ndarray) -> np.ndarray:
    out = np.linalg.inv(M)
    return 0.5 * (out + out.T)


def assemble_prediction(estimate: Ellipsoid, model: DynamicsModel,
                        y: np.ndarray | None, Q: np.ndarray, R: np.ndarray,
                        process_bound: Ellipsoid, meas_bound: Ellipsoid) -> LmiAssembly:
    """Build Phi, Psi and the Xi partition for the prediction step.

    ``y`` is the measurement taken at the current step; pass None to predict
    without conditioning (the null basis degenerates to the identity).
    """
    n, n1 = model.state_dim, model.meas_dim
    xhat = estimate.center
    E = estimate.cholesky().lower
    Bf = process_bound.cholesky().lower
    Bh = meas_bound.cholesky().lower
    m = 1 + 3 * n + 2 * n1
    s_one = slice(0, 1)
    s_u = slice(1, 1 + n)
    s_w = slice(1 + n, 1 + 2 * n)
    s_v = slice(1 + 2 * n, 1 + 2 * n + n1)
    s_f = slice(1 + 2 * n + n1, 1 + 3 * n + n1)
    s_h = slice(1 + 3 * n + n1, m)

    phi0 = np.zeros((n, m))
    phi0[:, 0] = model.f(xhat) + process_bound.center
    phi0[:, s_u] = model.jac_f(xhat) @ E
    phi0[:, s_w] = np.eye(n)
    phi0[:, s_f] = Bf

    if y is None:
        psi = None
        psi_perp = np.eye(m)
    else:
        psi = np.zeros((n1, m))
        psi[:, 0] = model.wrap_residual(model.h(xhat) + meas_bound.center - np.asarray(y, dtype=float))
        psi[:, s_u] = model.jac_h(xhat) @ E
        psi[:, s_v] = np.eye(n1)
        psi[:, s_h] = Bh
        psi_perp = _nullspace(psi)

    xi_blocks = [
        ("tau_u", s_u, np.eye(n)),
        ("tau_w", s_w, _inv_sym(Q)),
        ("tau_v", s_v, _inv_sym(R)),
        ("tau_f", s_f, np.eye(n)),
        ("tau_h", s_h, np.eye(n1)),
    ]
    del s_one
    return LmiAssembly(phi0, psi, psi_perp, xi_blocks, n,
                       trace_scale=float(np.trace(estimate.shape)))


def assemble_update(predicted: Ellipsoid, model: DynamicsModel, y: np.ndarray,
                    R: np.ndarray, meas_bound: Ellipsoid) -> LmiAssembly:
    """Build Phi, Psi and the Xi partition for the measurement update."""
    n, n1 = model.state_dim, model.meas_dim
    xp = predicted.center
    E = predicted.cholesky().lower
    Bh = meas_bound.cholesky().lower
    m = 1 + n + 2 * n1
    s_u = slice(1, 1 + n)
    s_v = slice(1 + n, 1 + n + n1)
    s_h = slice(1 + n + n1, m)

    phi0 = np.zeros((n, m))
    phi0[:, 0] = xp
    phi0[:, s_u] = E

    psi = np.zeros((n1, m))
    psi[:, 0] = model.wrap_residual(model.h(xp) + meas_bound.center - np.asarray(y, dtype=float))
    psi[:, s_u] = model.jac_h(xp) @ E
    psi[:, s_v] = np.eye(n1)
    psi[:, s_h] = Bh

    xi_blocks = [
        ("tau_u", s_u, np.eye(n)),
        ("tau_v", s_v, _inv_sym(R)),
        ("tau_h", s_h, np.eye(n1)),
    ]
    return LmiAssembly(phi0, psi, _nullspace(psi), xi_blocks, n,
                       trace_scale=float(np.trace(predicted.shape)))


def build_step_program(asm: LmiAssembly) -> ConicProgram:
    """Turn an assembly into the trace-minimizing SDP."""
    n = asm.n
    N = asm.psi_perp
    mp = N.shape[1]
    d = n + mp

    r_one = N[0:1, :]
    g_one = r_one.T @ r_one
    g_taus = [(name, N[s, :].T @ M @ N[s, :]) for name, s, M in asm.xi_blocks]

    program = ConicProgram()
    p_var = program.matrix("P", n, symmetric=True)
    x_var = program.vector("xhat", n)
    for name, _ in g_taus:
        program.scalar(name)

    const = np.zeros((d, d))
    top_right = asm.phi0 @ N
    const[:n, n:] = top_right
    const[n:, :n] = top_right.T
    const[n:, n:] = -g_one

    def p_term(M):
        out = np.zeros((d, d))
        out[:n, :n] = -np.asarray(M)
        return out

    def x_term(v):
        out = np.zeros((d, d))
        blk = -np.asarray(v).reshape(n, 1) @ r_one
        out[:n, n:] = blk
        out[n:, :n] = blk.T
        return out

    def tau_term(g):
        diff = g_one - g

        def fn(t):
            out = np.zeros((d, d))
            out[n:, n:] = float(t) * diff
            return out

        return fn

    terms = [("P", p_term), ("xhat", x_term)]
    terms += [(name, tau_term(g)) for name, g in g_taus]
    program.add_lmi(LmiBlock(const, terms))

    # P positive definite with a scale-aware margin, and tau >= 0.
    eps = 1e-9 * (1.0 + asm.trace_scale)
    program.add_lmi(LmiBlock(np.zeros((n, n)), [("P", lambda M: -np.asarray(M))], strict_margin=eps))
    for name, _ in g_taus:
        program.add_lmi(LmiBlock(np.zeros((1, 1)),
                                 [(name, (lambda t: -np.asarray(t, dtype=float).reshape(1, 1)))]))
    program.minimize_trace(p_var)
    del p_var, x_var
    return program


def solve_assembled(asm: LmiAssembly, backend, options: SolverOptions | None = None
                    ) -> tuple[Ellipsoid | None, SolveReport]:
    """Solve one assembled step; returns the certified ellipsoid and report."""
    program = build_step_program(asm)
    report = backend.solve(program, options)
    if report.status != "optimal":
        return None, report  # callers translate per step kind
    center = np.asarray(report.assignments["xhat"]).reshape(asm.n)
    shape = ensure_pd(np.asarray(report.assignments["P"]))
    return Ellipsoid(center, shape), report


def predict_step(state: FilterState, y: np.ndarray | None, model: DynamicsModel,
                 Q: np.ndarray, R: np.ndarray, process_bound: Ellipsoid,
                 meas_bound: Ellipsoid, backend,
                 options: SolverOptions | None = None) -> FilterState:
    """One prediction: certified ellipsoid for the next state given ``y`` now.

    ``process_bound``/``meas_bound`` are the remainder ellipsoids computed
    around the current center.  Raises InfeasiblePrediction when the solver
    proves the measurement inconsistent with the model bounds.
    """
    asm = assemble_prediction(state.estimate, model, y, Q, R, process_bound, meas_bound)
    ell, report = solve_assembled(asm, backend, options)
    if ell is None:
        if report.status == "infeasible":
            raise InfeasiblePrediction(
                f"prediction SDP infeasible (solver: {report.solver_status})", step=state.step)
        raise SolverFailure(f"prediction SDP failed: {report.solver_status}")
    diag = StepDiagnostics(predicted=ell, process_bound=process_bound,
                           meas_bound_predict=meas_bound, predict_report=report)
    return FilterState(ell, state.step + 1, kind="predicted", diagnostics=diag)


def update_step(predicted: FilterState, y: np.ndarray, model: DynamicsModel,
                R: np.ndarray, meas_bound: Ellipsoid, backend,
                options: SolverOptions | None = None) -> FilterState:
    """One measurement update of a predicted state.

    ``meas_bound`` must be the measurement remainder around the predicted
    center (with the predicted factor).  Raises InfeasibleUpdate when the
    certified set is proved empty.
    """
    asm = assemble_update(predicted.estimate, model, y, R, meas_bound)
    ell, report = solve_assembled(asm, backend, options)
    if ell is None:
        if report.status == "infeasible":
            raise InfeasibleUpdate(
                f"update SDP infeasible (solver: {report.solver_status})", step=predicted.step)
        raise SolverFailure(f"update SDP failed: {report.solver_status}")
    diag = predicted.diagnostics or StepDiagnostics()
    diag.update_report = report
    diag.meas_bound_update = meas_bound
    return FilterState(ell, predicted.step, kind="estimate", diagnostics=diag)


def _measurement_eval(model: DynamicsModel, center: np.ndarray, factor: np.ndarray,
                      plan: SamplePlan, step: int) -> RemainderEval:
    if model.sensor is not None:
        ev = reduced_measurement_remainder(model, center, factor)
        if plan.mode == "boundary":
            applicability = check_boundary_applicable(ev.base, ev.factor, *model.sensor)
            if not applicability.holds:
                raise BoundaryNotApplicable(
                    f"boundary sampling invalid at step {step}: {applicability.reason}", step=step)
        return ev
    return measurement_remainder(model, center, factor)


def run_filter(init: Ellipsoid, measurements, model: DynamicsModel,
               Q: np.ndarray, R: np.ndarray, plan: SamplePlan, backend,
               options: SolverOptions | None = None, inflation: float = 1.0
               ) -> list[FilterState]:
    """Full filter loop over a measurement sequence ``y_0, y_1, ..., y_K``.

    Cycle k bounds both remainders around the current center, predicts with
    ``y_k``, re-bounds the measurement remainder around the predicted center,
    and updates with ``y_{k+1}``; so K+1 measurements produce states
    0, 1, ..., K.  ``measurements[0]`` may be None (prediction without
    conditioning at the first cycle).  Step failures abort the run and carry
    the offending step index.
    """
    measurements = list(measurements)
    states = [FilterState(init, 0)]
    for k in range(len(measurements) - 1):
        state = states[-1]
        t0 = time.perf_counter()
        E = state.estimate.cholesky().lower

        ev_f = process_remainder(model, state.estimate.center, E)
        e_f = bound_remainder(ev_f, plan, backend, options, inflation, seed_offset=3 * k)
        ev_h = _measurement_eval(model, state.estimate.center, E, plan, k)
        e_h = bound_remainder(ev_h, plan, backend, options, inflation, seed_offset=3 * k + 1)

        predicted = predict_step(state, measurements[k], model, Q, R, e_f, e_h, backend, options)

        y_next = measurements[k + 1]
        if y_next is None:
            raise DimensionMismatch(f"measurement {k + 1} is missing; update needs one")
        Ep = predicted.estimate.cholesky().lower
        ev_h2 = _measurement_eval(model, predicted.estimate.center, Ep, plan, k)
        e_h2 = bound_remainder(ev_h2, plan, backend, options, inflation, seed_offset=3 * k + 2)

        new_state = update_step(predicted, y_next, model, R, e_h2, backend, options)
        new_state.diagnostics.wall_time = time.perf_counter() - t0
        states.append(new_state)
    return states
