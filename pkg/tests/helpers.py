import numpy as np
import torch
from scipy.optimize import minimize

from cora.core.allocation import build_core_qp
from cora.critics.networks import ActionEncoder
from cora.critics.quadratic import TwinQuadraticCritic
from cora.policy.policies import CategoricalPolicy

LOPSIDED_PAYOFF = np.array([[-5.0, 15.0], [-5.0, -5.0]])


def uniform_policies(n: int, k: int) -> list[CategoricalPolicy]:
    """Linear policies with zero weights: uniform at every observation."""
    out = []
    for _ in range(n):
        p = CategoricalPolicy(1, k, hidden=(), bias=False)
        with torch.no_grad():
            for param in p.parameters():
                param.zero_()
        out.append(p)
    return out


def lopsided_pair_quadratic() -> TwinQuadraticCritic:
    """Both heads return the two-agent payoff table at state [1.0], no bias or linear terms."""
    q = TwinQuadraticCritic(1, ActionEncoder.discrete((2, 2)), hidden=(), bias=False)
    out = np.zeros(9)
    out[5:9] = LOPSIDED_PAYOFF.reshape(-1)
    with torch.no_grad():
        for head in q.heads:
            head.body.net[0].weight.copy_(torch.as_tensor(out[:, None]))
    return q


def reference_optimum(table, lambda_reg):
    """Same program through SLSQP, from the equal-split start; None when it does not converge."""
    problem, x0 = build_core_qp(table, lambda_reg)
    n = table.n
    M = table.membership()
    cons = [{"type": "eq", "fun": lambda x: x[:n].sum() - table.grand_advantage}]
    if len(table):
        cons.append({"type": "ineq", "fun": lambda x: M @ x[:n] + x[n] - table.values})
    res = minimize(problem.objective, x0, method="SLSQP", constraints=cons,
                   bounds=[(None, None)] * n + [(0, None)], options={"ftol": 1e-12, "maxiter": 500})
    if not res.success:
        return None, problem
    return res.fun, problem
