"""Semidefinite programs with affine LMI blocks and a trace objective.

A program owns scalar/matrix decision variables and a list of blocks, each
meaning ``constant + sum_i contribution_i(var_i) <= 0`` in the semidefinite
order.  Strictly negative-definite requirements are expressed by a positive
``strict_margin`` m, which shifts the block to ``constant + m I + ... <= 0``.

The reference backend canonicalizes blocks into scaled-triangular PSD cone
coordinates and hands them to Clarabel, an interior-point conic solver.  The
model layer is solver-agnostic: anything implementing ``solve(program,
options)`` with the same report contract is a valid backend.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse

import clarabel

from .errors import DimensionMismatch, SolverFailure, UnknownVariable

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ScalarVar:
    name: str


@dataclass(frozen=True)
class MatrixVar:
    name: str
    rows: int
    cols: int
    symmetric: bool

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionMismatch("matrix variable must have positive dimensions")
        if self.symmetric and self.rows != self.cols:
            raise DimensionMismatch("symmetric variable must be square")


Variable = ScalarVar | MatrixVar

# A term maps the value of one variable linearly to a symmetric block
# contribution.  The callable must be linear (zero at zero); this is probed
# at registration time.
Term = tuple[str, Callable[[np.ndarray | float], np.ndarray]]


@dataclass
class LmiBlock:
    """One affine constraint ``constant + strict_margin*I + sum terms(vars) <= 0``."""

    constant: np.ndarray
    terms: list[Term] = field(default_factory=list)
    strict_margin: float = 0.0

    @property
    def dim(self) -> int:
        return self.constant.shape[0]


def _num_params(var: Variable) -> int:
    if isinstance(var, ScalarVar):
        return 1
    if var.symmetric:
        return var.rows * (var.rows + 1) // 2
    return var.rows * var.cols


def _basis_elements(var: Variable):
    """Yield variable values with exactly one free parameter set to 1."""
    if isinstance(var, ScalarVar):
        yield 1.0
        return
    n, m = var.rows, var.cols
    if var.symmetric:
        for c in range(n):
            for r in range(c, n):
                b = np.zeros((n, n))
                b[r, c] = 1.0
                b[c, r] = 1.0
                yield b
    else:
        for c in range(m):
            for r in range(n):
                b = np.zeros((n, m))
                b[r, c] = 1.0
                yield b


def _value_from_params(var: Variable, params: np.ndarray):
    if isinstance(var, ScalarVar):
        return float(params[0])
    n, m = var.rows, var.cols
    if var.symmetric:
        out = np.zeros((n, n))
        k = 0
        for c in range(n):
            for r in range(c, n):
                out[r, c] = params[k]
                out[c, r] = params[k]
                k += 1
        return out
    return params.reshape((m, n)).T


def _zero_value(var: Variable):
    if isinstance(var, ScalarVar):
        return 0.0
    return np.zeros((var.rows, var.cols))


def _svec(S: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization (column-major, off-diagonals x sqrt2)."""
    n = S.shape[0]
    out = np.empty(n * (n + 1) // 2)
    k = 0
    for c in range(n):
        for r in range(c + 1):
            out[k] = S[r, c] if r == c else _SQRT2 * S[r, c]
            k += 1
    return out


@dataclass(frozen=True)
class SolverOptions:
    feasibility_tol: float = 1e-7
    max_iter: int = 200
    verbose: bool = False


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one solve. ``assignments`` is present iff status is optimal."""

    status: str  # "optimal" | "infeasible" | "numerical-failure"
    objective: float | None
    assignments: dict[str, np.ndarray | float] | None
    wall_time: float
    solver_status: str = ""
    max_residual: float = float("nan")


class ConicProgram:
    """SDP model: declared variables, LMI blocks, trace objective."""

    def __init__(self):
        self._vars: dict[str, Variable] = {}
        self._order: list[str] = []
        self.blocks: list[LmiBlock] = []
        self.objective_var: str | None = None

    def scalar(self, name: str) -> ScalarVar:
        return self._register(ScalarVar(name))

    def matrix(self, name: str, rows: int, cols: int | None = None, symmetric: bool = True) -> MatrixVar:
        return self._register(MatrixVar(name, rows, rows if cols is None else cols, symmetric))

    def vector(self, name: str, dim: int) -> MatrixVar:
        """Column-vector convenience: an (n, 1) non-symmetric matrix variable."""
        return self._register(MatrixVar(name, dim, 1, symmetric=False))

    def _register(self, var: Variable) -> Variable:
        if var.name in self._vars:
            raise ValueError(f"variable {var.name!r} already registered")
        self._vars[var.name] = var
        self._order.append(var.name)
        return var

    @property
    def variables(self) -> dict[str, Variable]:
        return dict(self._vars)

    def add_lmi(self, block: LmiBlock) -> None:
        const = np.asarray(block.constant, dtype=float)
        if const.ndim == 0:
            const = const.reshape((1, 1))
        if const.ndim != 2 or const.shape[0] != const.shape[1] or const.shape[0] == 0:
            raise DimensionMismatch(f"LMI constant must be square and non-empty, got shape {const.shape}")
        scale = 1.0 + np.max(np.abs(const))
        if np.max(np.abs(const - const.T)) > 1e-9 * scale:
            raise DimensionMismatch("LMI constant must be symmetric")
        block.constant = 0.5 * (const + const.T)
        d = const.shape[0]
        for name, fn in block.terms:
            if name not in self._vars:
                raise UnknownVariable(name)
            probe = np.asarray(fn(_zero_value(self._vars[name])), dtype=float)
            if probe.shape != (d, d):
                raise DimensionMismatch(
                    f"term for {name!r} produces shape {probe.shape}, block is {d}x{d}"
                )
            if np.max(np.abs(probe)) > 1e-9:
                raise ValueError(f"term for {name!r} is not linear (nonzero at zero)")
        self.blocks.append(block)

    def minimize_trace(self, var: MatrixVar | str) -> None:
        name = var if isinstance(var, str) else var.name
        if name not in self._vars:
            raise UnknownVariable(name)
        v = self._vars[name]
        if not isinstance(v, MatrixVar) or v.rows != v.cols:
            raise DimensionMismatch("trace objective needs a square matrix variable")
        self.objective_var = name

    # -- numeric evaluation (round-trip checks, residuals) -----------------

    def param_layout(self) -> dict[str, tuple[int, int]]:
        layout = {}
        offset = 0
        for name in self._order:
            k = _num_params(self._vars[name])
            layout[name] = (offset, k)
            offset += k
        return layout

    def total_params(self) -> int:
        return sum(_num_params(self._vars[n]) for n in self._order)

    def assignments_from_params(self, x: np.ndarray) -> dict[str, np.ndarray | float]:
        layout = self.param_layout()
        return {
            name: _value_from_params(self._vars[name], x[off : off + k])
            for name, (off, k) in layout.items()
        }

    def evaluate_block(self, block: LmiBlock, assignments: dict) -> np.ndarray:
        out = block.constant + block.strict_margin * np.eye(block.dim)
        for name, fn in block.terms:
            contrib = np.asarray(fn(assignments[name]), dtype=float)
            out = out + 0.5 * (contrib + contrib.T)
        return out

    def max_residual(self, assignments: dict) -> float:
        worst = -np.inf
        for block in self.blocks:
            val = self.evaluate_block(block, assignments)
            worst = max(worst, float(np.linalg.eigvalsh(val)[-1]))
        return worst


def add_lmi(program: ConicProgram, block: LmiBlock) -> ConicProgram:
    program.add_lmi(block)
    return program


def minimize_trace(program: ConicProgram, var: MatrixVar | str) -> ConicProgram:
    program.minimize_trace(var)
    return program


class ClarabelBackend:
    """Reference backend: canonicalize to PSD-triangle cones, solve with Clarabel.

    Strictness margins are folded into block constants.  After an optimal
    solve the assignments are substituted back into every block; if the worst
    eigenvalue residual exceeds the feasibility tolerance the solve is retried
    once at tighter internal tolerances before being reported as a failure.
    """

    def solve(self, program: ConicProgram, options: SolverOptions | None = None) -> SolveReport:
        options = options or SolverOptions()
        t0 = time.perf_counter()
        report = self._solve_once(program, options, tighten=1.0)
        if report.status == "optimal" and report.max_residual > options.feasibility_tol:
            report = self._solve_once(program, options, tighten=1e-3)
            if report.status == "optimal" and report.max_residual > options.feasibility_tol:
                report = SolveReport(
                    status="numerical-failure",
                    objective=None,
                    assignments=None,
                    wall_time=time.perf_counter() - t0,
                    solver_status=report.solver_status,
                    max_residual=report.max_residual,
                )
        return SolveReport(
            status=report.status,
            objective=report.objective,
            assignments=report.assignments,
            wall_time=time.perf_counter() - t0,
            solver_status=report.solver_status,
            max_residual=report.max_residual,
        )

    def _solve_once(self, program: ConicProgram, options: SolverOptions, tighten: float) -> SolveReport:
        if program.objective_var is None:
            raise SolverFailure("no objective set; call minimize_trace first")
        m = program.total_params()
        layout = program.param_layout()

        rows: list[np.ndarray] = []
        bs: list[np.ndarray] = []
        cones = []
        for block in program.blocks:
            d = block.dim
            const = block.constant + block.strict_margin * np.eye(d)
            nrow = d * (d + 1) // 2
            a = np.zeros((nrow, m))
            for name, fn in block.terms:
                off, _ = layout[name]
                for j, basis in enumerate(_basis_elements(program.variables[name])):
                    contrib = np.asarray(fn(basis), dtype=float)
                    contrib = 0.5 * (contrib + contrib.T)
                    col = _svec(contrib) if d > 1 else contrib.reshape(1)
                    a[:, off + j] += col
            rows.append(a)
            bs.append(-_svec(const) if d > 1 else -const.reshape(1))
            cones.append(clarabel.PSDTriangleConeT(d) if d > 1 else clarabel.NonnegativeConeT(1))

        q = np.zeros(m)
        obj_var = program.variables[program.objective_var]
        off, _ = layout[program.objective_var]
        k = 0
        if obj_var.symmetric:
            for c in range(obj_var.rows):
                for r in range(c, obj_var.rows):
                    if r == c:
                        q[off + k] = 1.0
                    k += 1
        else:
            for c in range(obj_var.cols):
                for r in range(obj_var.rows):
                    if r == c:
                        q[off + k] = 1.0
                    k += 1

        A = scipy.sparse.csc_matrix(np.vstack(rows)) if rows else scipy.sparse.csc_matrix((0, m))
        b = np.concatenate(bs) if bs else np.zeros(0)
        P = scipy.sparse.csc_matrix((m, m))

        settings = clarabel.DefaultSettings()
        settings.verbose = options.verbose
        settings.max_iter = options.max_iter
        tol = min(1e-9, options.feasibility_tol * 1e-2) * tighten
        settings.tol_feas = tol
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol

        t0 = time.perf_counter()
        solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
        sol = solver.solve()
        wall = time.perf_counter() - t0

        status = str(sol.status)
        if status in ("Solved", "AlmostSolved"):
            x = np.asarray(sol.x)
            assignments = program.assignments_from_params(x)
            residual = program.max_residual(assignments)
            return SolveReport(
                status="optimal",
                objective=float(sol.obj_val),
                assignments=assignments,
                wall_time=wall,
                solver_status=status,
                max_residual=residual,
            )
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return SolveReport("infeasible", None, None, wall, solver_status=status)
        return SolveReport("numerical-failure", None, None, wall, solver_status=status)


def solve(program: ConicProgram, options: SolverOptions | None = None,
          backend: ClarabelBackend | None = None) -> SolveReport:
    return (backend or ClarabelBackend()).solve(program, options)
