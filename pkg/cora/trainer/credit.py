import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core.allocation import solve_core, solve_least_core
from ..core.coalition import CoalitionAdvantageTable, SamplingPlan, sample_coalitions
from ..critics.advantage import EXACT_LIMIT, DEFAULT_MC_SAMPLES, coalition_advantages
from ..errors import ArgumentError
from ..qp.active_set import STATUS_OPTIMAL
from .rollout import RolloutBatch

CREDIT_MODES = ("cora", "cora_no_std", "shared")

# ─────────────────────────────────────────────────────────────────────────────
# Solve statistics, shared by the worker threads of one run
# ─────────────────────────────────────────────────────────────────────────────

_SOLVE_STORE: dict[str, dict] = {}
_SOLVE_LOCK = threading.Lock()


def _record_solve(run_key: str, iterations: int, ms: float, retried: bool, dropped: bool) -> None:
    with _SOLVE_LOCK:
        entry = _SOLVE_STORE.setdefault(run_key, {"solves": 0, "iterations": 0, "max_iterations": 0,
                                                  "ms": 0.0, "retries": 0, "dropped": 0})
        entry["solves"] += 1
        entry["iterations"] += iterations
        entry["max_iterations"] = max(entry["max_iterations"], iterations)
        entry["ms"] += ms
        entry["retries"] += int(retried)
        entry["dropped"] += int(dropped)


def _get_solve_stats(run_key: str) -> dict:
    with _SOLVE_LOCK:
        return dict(_SOLVE_STORE.get(run_key, {}))


def _clear_stats(run_key: str) -> None:
    with _SOLVE_LOCK:
        _SOLVE_STORE.pop(run_key, None)


@dataclass(frozen=True)
class CreditConfig:
    mode: str = "cora"
    plan: SamplingPlan = SamplingPlan("all_proper")
    lambda_reg: float = 1e-2
    mc_samples: int = DEFAULT_MC_SAMPLES
    exact_limit: int = EXACT_LIMIT
    workers: int = 1
    normalize: bool = False

    def __post_init__(self):
        if self.mode not in CREDIT_MODES:
            raise ArgumentError(f"[Credit] unknown mode '{self.mode}', expected one of {CREDIT_MODES}")
        if self.mode == "cora" and not self.lambda_reg > 0:
            raise ArgumentError(f"[Credit] lambda_reg must be > 0 in cora mode, got {self.lambda_reg}")


# ─────────────────────────────────────────────────────────────────────────────
# Table assembly: coalitions from the twin critics, grand value from GAE
# ─────────────────────────────────────────────────────────────────────────────

def build_table(q_critic, policies, state, joint_action, value: float, grand: float,
                plan: SamplingPlan, mc_rng: np.random.Generator, cfg: CreditConfig) -> CoalitionAdvantageTable:
    n = len(policies)
    coalitions = sample_coalitions(n, plan)
    values = coalition_advantages(q_critic, value, state, joint_action, coalitions, policies,
                                  cfg.mc_samples, mc_rng, cfg.exact_limit)
    return CoalitionAdvantageTable(n, tuple(zip(coalitions, values)), grand)


def build_tables(batch: RolloutBatch, q_critic, policies, cfg: CreditConfig,
                 rng: np.random.Generator) -> list[list[CoalitionAdvantageTable]]:
    """Tables indexed [env][step]; every timestep gets its own coalition draw."""
    if batch.advantages is None:
        raise ArgumentError("[Credit] batch has no grand-coalition advantages yet")
    seeds = rng.integers(0, 2**63 - 1, size=(batch.T, batch.E, 2))
    columns = []
    for e in range(batch.E):
        col = []
        for t in range(batch.T):
            plan = cfg.plan.with_seed(int(seeds[t, e, 0]))
            mc_rng = np.random.default_rng(int(seeds[t, e, 1]))
            col.append(build_table(q_critic, policies, batch.obs[t, e], batch.actions[t, e],
                                   float(batch.values[t, e]), float(batch.advantages[t, e]),
                                   plan, mc_rng, cfg))
        columns.append(col)
    return columns


# ─────────────────────────────────────────────────────────────────────────────
# Solving: one env column per task, warm-started along the episode
# ─────────────────────────────────────────────────────────────────────────────

def _solve(table, mode, lambda_reg, warm, max_iter):
    if mode == "cora_no_std":
        return solve_least_core(table, max_iter=max_iter)
    return solve_core(table, lambda_reg, warm_start=warm, max_iter=max_iter)


def solve_column(tables, mode: str, lambda_reg: float, run_key: str = "default"):
    """Allocations for consecutive tables of one env; None marks a dropped step."""
    out = []
    warm = None
    for table in tables:
        start = time.perf_counter()
        alloc = _solve(table, mode, lambda_reg, warm, None)
        retried = dropped = False
        if alloc.status != STATUS_OPTIMAL:
            retried = True
            logging.warning(f"[Credit] QP hit max_iter ({alloc.iterations}), retrying with a doubled budget")
            alloc = _solve(table, mode, lambda_reg, warm, 2 * 50 * (len(table) + 1))
            if alloc.status != STATUS_OPTIMAL:
                dropped = True
                logging.warning("[Credit] QP still at max_iter, step dropped from the actor update")
        _record_solve(run_key, alloc.iterations, (time.perf_counter() - start) * 1000, retried, dropped)
        if dropped:
            out.append(None)
            continue
        warm = alloc.per_agent
        out.append(alloc)
    return out


def assign_credits(batch: RolloutBatch, q_critic, policies, cfg: CreditConfig,
                   rng: np.random.Generator, run_key: str = "default") -> RolloutBatch:
    """Fill ``credits``, ``valid``, ``epsilons`` and ``qp_iters`` on the batch."""
    T, E, n = batch.T, batch.E, batch.n_agents
    if batch.advantages is None:
        raise ArgumentError("[Credit] batch has no grand-coalition advantages yet")

    if cfg.mode == "shared":
        batch.credits = np.repeat(batch.advantages[..., None], n, axis=-1)
        batch.valid = np.ones((T, E), dtype=bool)
        batch.epsilons = np.zeros((T, E))
        batch.qp_iters = np.zeros((T, E), dtype=int)
    else:
        columns = build_tables(batch, q_critic, policies, cfg, rng)
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            # map keeps submission order, so results do not depend on worker count
            results = list(pool.map(lambda col: solve_column(col, cfg.mode, cfg.lambda_reg, run_key), columns))

        batch.credits = np.zeros((T, E, n))
        batch.valid = np.zeros((T, E), dtype=bool)
        batch.epsilons = np.full((T, E), np.nan)
        batch.qp_iters = np.zeros((T, E), dtype=int)
        for e, col in enumerate(results):
            for t, alloc in enumerate(col):
                if alloc is None:
                    continue
                batch.credits[t, e] = alloc.per_agent
                batch.valid[t, e] = True
                batch.epsilons[t, e] = alloc.epsilon
                batch.qp_iters[t, e] = alloc.iterations

    if cfg.normalize and batch.valid.any():
        used = batch.credits[batch.valid]
        batch.credits = (batch.credits - used.mean()) / (used.std() + 1e-8)
    return batch
