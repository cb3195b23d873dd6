"""Dense convex quadratic- and linear-program solving.

Thin problem/result layer over the Clarabel interior-point solver. Every
optimization problem in the library (SVM hyperplanes, trajectory fitting,
behavior-model estimation) goes through this module so that solver choice,
tolerances, and status handling live in one place.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import clarabel
import numpy as np
import scipy.sparse as sp

DEFAULT_FEASIBILITY_TOL = 1e-6
DEFAULT_OPTIMALITY_TOL = 1e-6
DEFAULT_MAX_ITERATIONS = 20000


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    solution: np.ndarray | None = None
    objective_value: float | None = None

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass
class QuadraticProgram:
    """min 1/2 x'Qx + q'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.

    ``objective_matrix`` must be symmetric positive semidefinite.
    """

    objective_matrix: np.ndarray
    objective_vector: np.ndarray
    linear_equalities: list[tuple[np.ndarray, float]] = field(default_factory=list)
    linear_inequalities: list[tuple[np.ndarray, float]] = field(default_factory=list)

    @property
    def variable_count(self) -> int:
        return len(self.objective_vector)

    def validate(self) -> None:
        n = self.variable_count
        Q = np.asarray(self.objective_matrix, dtype=float)
        if Q.shape != (n, n):
            raise ValueError(f"objective matrix shape {Q.shape} != ({n}, {n})")
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-9:
            raise ValueError("objective matrix is not symmetric")
        for row, _ in self.linear_equalities + self.linear_inequalities:
            if len(row) != n:
                raise ValueError("constraint row has wrong length")


@dataclass
class LinearProgram:
    """min c'x  s.t.  A_eq x = b_eq,  A_in x <= b_in."""

    objective_vector: np.ndarray
    linear_equalities: list[tuple[np.ndarray, float]] = field(default_factory=list)
    linear_inequalities: list[tuple[np.ndarray, float]] = field(default_factory=list)

    @property
    def variable_count(self) -> int:
        return len(self.objective_vector)


def _stack(rows: list[tuple[np.ndarray, float]], n: int) -> tuple[np.ndarray, np.ndarray]:
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    A = np.asarray([np.asarray(r, dtype=float) for r, _ in rows])
    b = np.asarray([float(v) for _, v in rows])
    return A, b


_STATUS_MAP = {
    "Solved": SolveStatus.OPTIMAL,
    "AlmostSolved": SolveStatus.OPTIMAL,
    "PrimalInfeasible": SolveStatus.INFEASIBLE,
    "AlmostPrimalInfeasible": SolveStatus.INFEASIBLE,
    "DualInfeasible": SolveStatus.UNBOUNDED,
    "AlmostDualInfeasible": SolveStatus.UNBOUNDED,
    "MaxIterations": SolveStatus.ITERATION_LIMIT,
    "MaxTime": SolveStatus.ITERATION_LIMIT,
    "NumericalError": SolveStatus.ITERATION_LIMIT,
    "InsufficientProgress": SolveStatus.ITERATION_LIMIT,
}


def _solve_conic(P, q, A_eq, b_eq, A_in, b_in, *, feasibility_tol, optimality_tol,
                 max_iterations) -> SolveResult:
    n = len(q)
    n_eq = A_eq.shape[0]
    n_in = A_in.shape[0]
    if not (n_eq or n_in):
        A = sp.csc_matrix((0, n))
    elif sp.issparse(A_eq) or sp.issparse(A_in):
        A = sp.vstack([sp.csc_matrix(A_eq), sp.csc_matrix(A_in)],
                      format="csc")
    else:
        # one dense stack avoids per-block sparse conversion overhead
        A = sp.csc_matrix(np.vstack([A_eq, A_in]))
    b = np.concatenate([b_eq, b_in])
    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_in:
        cones.append(clarabel.NonnegativeConeT(n_in))

    # normalize the objective magnitude: high-order derivative-energy
    # matrices reach coefficient magnitudes of ~1e10, which stalls the
    # interior-point solver far from optimality; dividing through by the
    # largest coefficient leaves the argmin unchanged
    P_mag = np.abs(P.data).max(initial=0.0) if sp.issparse(P) \
        else np.abs(P).max(initial=0.0)
    scale = max(P_mag, np.abs(q).max(initial=0.0))
    if scale > 1.0:
        P = P / scale
        q = q / scale
    else:
        scale = 1.0

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = min(max_iterations, 2_000_000_000)
    settings.tol_feas = min(feasibility_tol, 1e-8)
    settings.tol_gap_abs = min(optimality_tol, 1e-8)
    settings.tol_gap_rel = min(optimality_tol, 1e-8)

    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    sol = solver.solve()
    status = _STATUS_MAP.get(str(sol.status), SolveStatus.ITERATION_LIMIT)
    if status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
        return SolveResult(status)

    x = np.asarray(sol.x)
    if x.shape != (n,):
        return SolveResult(SolveStatus.ITERATION_LIMIT)
    # final guard: report a solution only if it actually satisfies the
    # constraints to the configured tolerance
    viol = 0.0
    if n_eq:
        viol = max(viol, np.abs(A_eq @ x - b_eq).max())
    if n_in:
        viol = max(viol, (A_in @ x - b_in).max(initial=0.0))
    if viol > feasibility_tol:
        return SolveResult(SolveStatus.ITERATION_LIMIT)
    if status is not SolveStatus.OPTIMAL:
        # the solver can stall below its own (tighter) tolerances on badly
        # conditioned problems; a feasible iterate with a small duality gap
        # is still a certified near-optimum
        gap = abs(float(sol.obj_val) - float(sol.obj_val_dual))
        if not np.isfinite(gap) \
                or gap > optimality_tol * max(1.0, abs(float(sol.obj_val))):
            return SolveResult(SolveStatus.ITERATION_LIMIT)
    return SolveResult(SolveStatus.OPTIMAL, x, float(sol.obj_val) * scale)


def solve_qp(problem: QuadraticProgram, *,
             feasibility_tol: float = DEFAULT_FEASIBILITY_TOL,
             optimality_tol: float = DEFAULT_OPTIMALITY_TOL,
             max_iterations: int = DEFAULT_MAX_ITERATIONS,
             validate: bool = False) -> SolveResult:
    """Solve a convex QP. Returns OPTIMAL/INFEASIBLE/UNBOUNDED/ITERATION_LIMIT."""
    if validate:
        problem.validate()
    n = problem.variable_count
    Q = sp.csc_matrix(np.triu(np.asarray(problem.objective_matrix, dtype=float)))
    q = np.asarray(problem.objective_vector, dtype=float)
    A_eq, b_eq = _stack(problem.linear_equalities, n)
    A_in, b_in = _stack(problem.linear_inequalities, n)
    return _solve_conic(Q, q, A_eq, b_eq, A_in, b_in,
                        feasibility_tol=feasibility_tol,
                        optimality_tol=optimality_tol,
                        max_iterations=max_iterations)


def solve_qp_sparse(Q_upper: sp.csc_matrix, q: np.ndarray,
                    A_eq: sp.csc_matrix, b_eq: np.ndarray,
                    A_in: sp.csc_matrix, b_in: np.ndarray, *,
                    feasibility_tol: float = DEFAULT_FEASIBILITY_TOL,
                    optimality_tol: float = DEFAULT_OPTIMALITY_TOL,
                    max_iterations: int = DEFAULT_MAX_ITERATIONS) -> SolveResult:
    """Sparse entry point for large structured QPs (trajectory optimization)."""
    return _solve_conic(Q_upper, q, A_eq, b_eq, A_in, b_in,
                        feasibility_tol=feasibility_tol,
                        optimality_tol=optimality_tol,
                        max_iterations=max_iterations)


def solve_lp(problem: LinearProgram, *,
             feasibility_tol: float = DEFAULT_FEASIBILITY_TOL,
             optimality_tol: float = DEFAULT_OPTIMALITY_TOL,
             max_iterations: int = DEFAULT_MAX_ITERATIONS) -> SolveResult:
    """Solve an LP with the same status contract as solve_qp."""
    n = problem.variable_count
    c = np.asarray(problem.objective_vector, dtype=float)
    P = sp.csc_matrix((n, n))
    A_eq, b_eq = _stack(problem.linear_equalities, n)
    A_in, b_in = _stack(problem.linear_inequalities, n)
    return _solve_conic(P, c, A_eq, b_eq, A_in, b_in,
                        feasibility_tol=feasibility_tol,
                        optimality_tol=optimality_tol,
                        max_iterations=max_iterations)


def abs_epigraph(coeff_rows: np.ndarray, offsets: np.ndarray, n_base: int):
    """Epigraph transform for sum-of-absolute-values objectives.

    For terms |r_i . x + d_i| introduces slack t_i with
    r_i . x + d_i <= t_i and -(r_i . x + d_i) <= t_i. Returns the
    inequality list over variables [x, t] and the objective vector that sums
    the slacks.
    """
    m = len(offsets)
    inequalities: list[tuple[np.ndarray, float]] = []
    for i in range(m):
        up = np.zeros(n_base + m)
        up[:n_base] = coeff_rows[i]
        up[n_base + i] = -1.0
        inequalities.append((up, -float(offsets[i])))
        dn = np.zeros(n_base + m)
        dn[:n_base] = -coeff_rows[i]
        dn[n_base + i] = -1.0
        inequalities.append((dn, float(offsets[i])))
    objective = np.concatenate([np.zeros(n_base), np.ones(m)])
    return objective, inequalities
