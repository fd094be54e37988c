import logging
import numpy as np
from dataclasses import dataclass
from scipy.optimize import linprog

from ..errors import ArgumentError, CoraError
from ..qp.active_set import (QpProblem, solve_qp, STATUS_OPTIMAL, STATUS_INFEASIBLE)
from .coalition import CoalitionAdvantageTable, draw_coalitions, proper_count

DEFAULT_LAMBDA_REG = 1e-2
VIOLATION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CoreAllocation:
    per_agent: np.ndarray
    epsilon: float
    objective: float
    status: str
    active_constraints: tuple[int, ...]
    iterations: int = 0
    kkt_residual: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    equality_residual: float
    slacks: np.ndarray
    violations: int
    tight: tuple[int, ...]
    tol: float = VIOLATION_TOL

    @property
    def feasible(self) -> bool:
        """Efficient (sums to A_N within tol) and no coalition constraint violated."""
        return self.violations == 0 and self.equality_residual <= self.tol


# ─────────────────────────────────────────────────────────────────────────────
# Regularized least epsilon-core
#
#   variables  x = (A_1..A_n, ε)
#   minimize   ε + λ Σ (A_i − A_N/n)²
#   s.t.       Σ A_i = A_N,   Σ_{i∈C} A_i + ε ≥ A_C,   ε ≥ 0
# ─────────────────────────────────────────────────────────────────────────────

def build_core_qp(table: CoalitionAdvantageTable, lambda_reg: float,
                  warm_start: np.ndarray | None = None) -> tuple[QpProblem, np.ndarray]:
    """QP instance plus a feasible start (equal split or shifted warm start, ε at the max violation)."""
    n = table.n
    A_N = table.grand_advantage
    Q = np.diag(np.r_[np.full(n, 2.0 * lambda_reg), 0.0])
    c = np.r_[np.full(n, -2.0 * lambda_reg * A_N / n), 1.0]
    M = table.membership()
    A_ineq = np.hstack([M, np.ones((len(table), 1))])
    problem = QpProblem(Q=Q, c=c, A_ineq=A_ineq, b_ineq=table.values,
                        a_eq=np.r_[np.ones(n), 0.0], b_eq=A_N,
                        lower=np.r_[np.full(n, -np.inf), 0.0])

    if warm_start is None:
        alloc = np.full(n, A_N / n)
    else:
        alloc = np.asarray(warm_start, dtype=np.float64).reshape(-1)
        if alloc.shape != (n,) or not np.all(np.isfinite(alloc)):
            raise ArgumentError(f"[CoreQP] warm start must be a finite {n}-vector")
        alloc = alloc + (A_N - alloc.sum()) / n
    eps0 = max(0.0, float(np.max(table.values - M @ alloc, initial=0.0)))
    return problem, np.r_[alloc, eps0]


def _core_objective(per_agent: np.ndarray, epsilon: float, grand: float, lambda_reg: float) -> float:
    return float(epsilon + lambda_reg * np.sum((per_agent - grand / len(per_agent)) ** 2))


def solve_core(table: CoalitionAdvantageTable, lambda_reg: float = DEFAULT_LAMBDA_REG,
               warm_start: np.ndarray | None = None, max_iter: int | None = None,
               tol: float = 1e-8) -> CoreAllocation:
    if not lambda_reg > 0:
        raise ArgumentError(f"[CoreSolve] lambda_reg must be > 0, got {lambda_reg}")
    problem, x0 = build_core_qp(table, lambda_reg, warm_start)
    sol = solve_qp(problem, max_iter=max_iter, tol=tol, x0=x0)
    # ε is unbounded above, so the instance is always feasible
    assert sol.status != STATUS_INFEASIBLE

    n = table.n
    per_agent = sol.x[:n].copy()
    epsilon = max(0.0, float(sol.x[n]))
    if sol.status != STATUS_OPTIMAL:
        logging.warning(f"[CoreSolve] stopped at max_iter after {sol.iterations} iterations "
                        f"(kkt residual {sol.kkt_residual:.2e})")
    return CoreAllocation(per_agent=per_agent, epsilon=epsilon,
                          objective=_core_objective(per_agent, epsilon, table.grand_advantage, lambda_reg),
                          status=sol.status, active_constraints=tuple(sol.active_inequalities),
                          iterations=sol.iterations, kkt_residual=sol.kkt_residual)


def solve_least_core(table: CoalitionAdvantageTable, max_iter: int | None = None,
                     tol: float = 1e-8) -> CoreAllocation:
    """
    Unregularized least core: minimize ε first, then pick the allocation closest
    to the equal split among those attaining it.
    """
    n = table.n
    A_N = table.grand_advantage
    M = table.membership()
    m = len(table)

    if m:
        res = linprog(c=np.r_[np.zeros(n), 1.0],
                      A_ub=-np.hstack([M, np.ones((m, 1))]), b_ub=-table.values,
                      A_eq=np.r_[np.ones(n), 0.0][None, :], b_eq=[A_N],
                      bounds=[(None, None)] * n + [(0, None)], method="highs")
        if res.status != 0:
            raise CoraError(f"[LeastCore] linear stage failed: {res.message}")
        alloc = res.x[:n] + (A_N - res.x[:n].sum()) / n
        # exact violation of the shifted point keeps the second stage feasible
        eps_fixed = max(0.0, float(res.x[n]), float(np.max(table.values - M @ alloc)))
    else:
        alloc = np.full(n, A_N / n)
        eps_fixed = 0.0

    problem = QpProblem(Q=2.0 * np.eye(n), c=np.full(n, -2.0 * A_N / n),
                        A_ineq=M, b_ineq=table.values - eps_fixed,
                        a_eq=np.ones(n), b_eq=A_N)
    sol = solve_qp(problem, max_iter=max_iter, tol=tol, x0=alloc)
    per_agent = sol.x.copy()
    return CoreAllocation(per_agent=per_agent, epsilon=eps_fixed, objective=eps_fixed,
                          status=sol.status, active_constraints=tuple(sol.active_inequalities),
                          iterations=sol.iterations, kkt_residual=sol.kkt_residual)


# ─────────────────────────────────────────────────────────────────────────────
# Checks
# ─────────────────────────────────────────────────────────────────────────────

def verify_allocation(table: CoalitionAdvantageTable, alloc, epsilon: float,
                      tol: float = VIOLATION_TOL) -> FeasibilityReport:
    alloc = np.asarray(alloc, dtype=np.float64).reshape(-1)
    if alloc.shape != (table.n,):
        raise ArgumentError(f"[Verify] allocation has {alloc.size} entries, table has n={table.n}")
    slacks = table.membership() @ alloc + epsilon - table.values
    return FeasibilityReport(
        equality_residual=float(abs(alloc.sum() - table.grand_advantage)),
        slacks=slacks,
        violations=int(np.sum(slacks < -tol)),
        tight=tuple(int(k) for k in np.flatnonzero(np.abs(slacks) <= max(tol, 1e-9))),
        tol=float(tol),
    )


def probable_core_rate(table_full: CoalitionAdvantageTable, alloc: CoreAllocation,
                       fresh_samples: int, seed: int) -> float:
    """Share of freshly drawn coalitions (with replacement) whose constraint alloc violates."""
    if len(table_full) != proper_count(table_full.n):
        raise ArgumentError("[ProbableCore] the reference table must cover every proper coalition")
    if fresh_samples < 1:
        raise ArgumentError(f"[ProbableCore] fresh_samples must be >= 1, got {fresh_samples}")
    rng = np.random.default_rng(seed)
    report = verify_allocation(table_full, alloc.per_agent, alloc.epsilon)
    violated = dict(zip(table_full.masks, report.slacks < -VIOLATION_TOL))
    draws = draw_coalitions(table_full.n, fresh_samples, rng)
    return float(np.mean([violated[int(mask)] for mask in draws]))
