import numpy as np
from dataclasses import dataclass
from scipy import linalg

from ..errors import ArgumentError

# ─────────────────────────────────────────────────────────────────────────────
# Dense convex QP
#
#   minimize    ½ xᵀQx + cᵀx
#   subject to  a_eqᵀx = b_eq            (optional, one row)
#               a_kᵀx ≥ b_k              k = 0..m-1
#               x_j ≥ lower_j            (optional, -inf = free)
#
# Sign convention for the certificate:
#   Qx + c + eq_dual·a_eq − Σ_k μ_k a_k − Σ_j ν_j e_j = 0,   μ, ν ≥ 0
# ─────────────────────────────────────────────────────────────────────────────

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible_input"

# eigenvalues of the reduced Hessian below this (relative) level count as flat
_RIDGE = 1e-10


@dataclass(frozen=True, eq=False)
class QpProblem:
    Q: np.ndarray
    c: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: float = 0.0
    lower: np.ndarray | None = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        d = Q.shape[0]
        if d < 1 or Q.shape != (d, d):
            raise ArgumentError(f"[QP] Q must be square with d >= 1, got shape {Q.shape}")
        if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
            raise ArgumentError("[QP] Q is not symmetric")
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        A = np.asarray(self.A_ineq, dtype=np.float64).reshape(-1, d)
        b = np.asarray(self.b_ineq, dtype=np.float64).reshape(-1)
        if c.shape != (d,) or A.shape[0] != b.shape[0]:
            raise ArgumentError("[QP] dimension mismatch between Q, c and inequality rows")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_ineq", A)
        object.__setattr__(self, "b_ineq", b)
        object.__setattr__(self, "b_eq", float(self.b_eq))
        if self.a_eq is not None:
            a_eq = np.asarray(self.a_eq, dtype=np.float64).reshape(-1)
            if a_eq.shape != (d,) or not np.any(a_eq):
                raise ArgumentError("[QP] a_eq must be a nonzero d-vector")
            object.__setattr__(self, "a_eq", a_eq)
        if self.lower is not None:
            lower = np.asarray(self.lower, dtype=np.float64).reshape(-1)
            if lower.shape != (d,):
                raise ArgumentError("[QP] lower bounds must be a d-vector")
            object.__setattr__(self, "lower", lower)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.A_ineq.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.c @ x)


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    eq_dual: float
    ineq_duals: np.ndarray
    bound_duals: np.ndarray
    iterations: int
    kkt_residual: float
    status: str
    working_set: tuple[int, ...]

    @property
    def active_inequalities(self) -> list[int]:
        return [k for k in self.working_set if k < len(self.ineq_duals)]


# ─────────────────────────────────────────────────────────────────────────────
# Helpers
# ─────────────────────────────────────────────────────────────────────────────

def _check_psd(Q: np.ndarray) -> None:
    smallest = linalg.eigvalsh(Q)[0]
    if smallest < -1e-8:
        raise ArgumentError(f"[QP] Q is not positive semidefinite (min eigenvalue {smallest:.3e})")


def _stacked_rows(p: QpProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inequality rows followed by one row per finite lower bound (index m + j)."""
    d = p.dim
    if p.lower is None:
        return p.A_ineq, p.b_ineq, np.zeros(0, dtype=int)
    bounded = np.flatnonzero(np.isfinite(p.lower))
    rows = np.eye(d)[bounded]
    return (np.vstack([p.A_ineq, rows]),
            np.concatenate([p.b_ineq, p.lower[bounded]]),
            bounded)


def _start_point(p: QpProblem, G: np.ndarray, h: np.ndarray, x0, scale: float) -> np.ndarray:
    if x0 is None:
        x = np.zeros(p.dim)
        if p.a_eq is not None:
            x = p.a_eq * (p.b_eq / (p.a_eq @ p.a_eq))
    else:
        x = np.array(x0, dtype=np.float64).reshape(-1)
        if x.shape != (p.dim,):
            raise ArgumentError(f"[QP] start point has shape {x.shape}, expected ({p.dim},)")
    feas_tol = 1e-9 * scale
    if p.a_eq is not None and abs(p.a_eq @ x - p.b_eq) > feas_tol:
        raise ArgumentError("[QP] start point violates the equality constraint")
    if G.shape[0] and np.max(h - G @ x) > feas_tol:
        raise ArgumentError("[QP] start point is infeasible; provide a feasible x0")
    return x


def _eqp_step(Q: np.ndarray, g: np.ndarray, A_w: np.ndarray) -> tuple[np.ndarray, bool]:
    """
    Step of the equality-constrained subproblem on the working set.

    Works in the null space of the working rows. Flat directions of the reduced
    Hessian that still descend are followed as unit rays (the ratio test sizes
    them); otherwise the Newton step over the curved subspace is returned.
    """
    d = Q.shape[0]
    Z = linalg.null_space(A_w) if A_w.shape[0] else np.eye(d)
    if Z.shape[1] == 0:
        return np.zeros(d), False

    H = Z.T @ Q @ Z
    r = Z.T @ g
    w, V = linalg.eigh(H)
    flat = w <= _RIDGE * max(1.0, float(np.max(np.abs(w))))
    rv = V.T @ r

    descent = V[:, flat] @ rv[flat]
    size = np.linalg.norm(descent)
    if size > 1e-12 * (1.0 + np.linalg.norm(r)):
        return Z @ (-descent / size), True

    curved = ~flat
    dz = -(V[:, curved] @ (rv[curved] / w[curved]))
    return Z @ dz, False


def _ratio_test(G, h, x, step, working, is_ray) -> tuple[float, int | None]:
    alpha = np.inf if is_ray else 1.0
    if G.shape[0] == 0:
        return alpha, None
    Gp = G @ step
    thresh = -1e-12 * np.linalg.norm(G, axis=1) * np.linalg.norm(step)
    candidates = Gp < thresh
    if working:
        candidates[list(working)] = False
    idx = np.flatnonzero(candidates)
    if idx.size == 0:
        return alpha, None
    slack = np.maximum(G[idx] @ x - h[idx], 0.0)
    ratios = slack / -Gp[idx]
    # argmin keeps the first (lowest-index) constraint among ties
    best = int(np.argmin(ratios))
    if ratios[best] < alpha:
        return float(ratios[best]), int(idx[best])
    return alpha, None


def _multipliers(A_w: np.ndarray, g: np.ndarray) -> np.ndarray:
    if A_w.shape[0] == 0:
        return np.zeros(0)
    lam, *_ = linalg.lstsq(A_w.T, g)
    return lam


# ─────────────────────────────────────────────────────────────────────────────
# Solver
# ─────────────────────────────────────────────────────────────────────────────

def solve_qp(p: QpProblem, max_iter: int | None = None, tol: float = 1e-8,
             x0: np.ndarray | None = None) -> QpSolution:
    """
    Primal active-set method from a feasible start.

    Entering and leaving constraints are chosen by lowest index (Bland), so the
    method terminates on degenerate vertices. Returns the final iterate with
    status ``max_iter`` if the budget runs out; objective values never increase
    along the iterates, so the final iterate is also the best one.
    """
    _check_psd(p.Q)
    G, h, bounded = _stacked_rows(p)
    m = p.n_ineq
    if max_iter is None:
        max_iter = 50 * (m + 1)

    scale = 1.0 + max(np.max(np.abs(p.c), initial=0.0),
                      np.max(np.abs(p.b_ineq), initial=0.0),
                      abs(p.b_eq))
    x = _start_point(p, G, h, x0, scale)
    eq_rows = p.a_eq[None, :] if p.a_eq is not None else np.zeros((0, p.dim))
    n_eq = eq_rows.shape[0]

    working: list[int] = []
    lam = None
    status = STATUS_MAX_ITER
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        A_w = np.vstack([eq_rows, G[working]]) if working else eq_rows
        g = p.Q @ x + p.c
        step, is_ray = _eqp_step(p.Q, g, A_w)

        if not is_ray and np.max(np.abs(step)) <= 1e-11 * (1.0 + np.max(np.abs(x))):
            lam = _multipliers(A_w, g)
            mu = lam[n_eq:]
            dual_tol = 1e-10 * (1.0 + np.max(np.abs(g)))
            negative = [working[k] for k in range(len(working)) if mu[k] < -dual_tol]
            if not negative:
                status = STATUS_OPTIMAL
                break
            working.remove(min(negative))
            lam = None
            continue

        alpha, blocking = _ratio_test(G, h, x, step, working, is_ray)
        if not np.isfinite(alpha):
            raise ArgumentError("[QP] objective is unbounded below on the feasible set")
        x = x + alpha * step
        if blocking is not None:
            working.append(blocking)
            working.sort()
        lam = None

    # at most two iterations per working set, and no set repeats
    assert iterations <= 2 ** (min(G.shape[0], 62) + 1), "[QP] iteration count exceeds the working-set bound"

    A_w = np.vstack([eq_rows, G[working]]) if working else eq_rows
    if lam is None:
        lam = _multipliers(A_w, p.Q @ x + p.c)

    ineq_duals = np.zeros(m)
    bound_duals = np.zeros(p.dim)
    for k, row in enumerate(working):
        if row < m:
            ineq_duals[row] = lam[n_eq + k]
        else:
            bound_duals[bounded[row - m]] = lam[n_eq + k]
    # stationarity carries +eq_dual·a_eq, the lstsq multiplier enters with −
    eq_dual = float(-lam[0]) if n_eq else 0.0

    partial = QpSolution(x=x, eq_dual=eq_dual, ineq_duals=ineq_duals,
                         bound_duals=bound_duals, iterations=iterations,
                         kkt_residual=np.nan, status=status,
                         working_set=tuple(working))
    residual = kkt_residual(p, partial)
    return QpSolution(x=x, eq_dual=eq_dual, ineq_duals=ineq_duals,
                      bound_duals=bound_duals, iterations=iterations,
                      kkt_residual=residual, status=status,
                      working_set=tuple(working))


def kkt_residual(p: QpProblem, s: QpSolution) -> float:
    """Largest of stationarity, primal/dual feasibility and complementarity errors."""
    x = np.asarray(s.x, dtype=np.float64)
    mu = np.asarray(s.ineq_duals, dtype=np.float64)
    nu = np.asarray(s.bound_duals, dtype=np.float64)
    if x.shape != (p.dim,) or mu.shape != (p.n_ineq,) or nu.shape != (p.dim,):
        raise ArgumentError("[QP] solution dimensions do not match the problem")

    stationarity = p.Q @ x + p.c - p.A_ineq.T @ mu - nu
    parts = []
    if p.a_eq is not None:
        stationarity = stationarity + s.eq_dual * p.a_eq
        parts.append(abs(p.a_eq @ x - p.b_eq))
    parts.append(np.max(np.abs(stationarity)))

    if p.n_ineq:
        slack = p.A_ineq @ x - p.b_ineq
        parts.append(max(0.0, -np.min(slack)))
        parts.append(max(0.0, -np.min(mu)))
        parts.append(np.max(np.abs(mu * slack)))

    if p.lower is not None:
        finite = np.isfinite(p.lower)
        if np.any(finite):
            bslack = x[finite] - p.lower[finite]
            parts.append(max(0.0, -np.min(bslack)))
            parts.append(max(0.0, -np.min(nu[finite])))
            parts.append(np.max(np.abs(nu[finite] * bslack)))
        if np.any(~finite):
            parts.append(np.max(np.abs(nu[~finite])))
    elif np.any(nu):
        parts.append(np.max(np.abs(nu)))

    return float(max(parts))
