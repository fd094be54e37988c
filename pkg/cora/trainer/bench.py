import logging
import time

import numpy as np

from ..core.allocation import DEFAULT_LAMBDA_REG, probable_core_rate, solve_core
from ..core.coalition import (SamplingPlan, implied_delta, proper_count, random_table,
                              sample_coalitions, probable_core_count)
from ..errors import ArgumentError
from ..helper.config import derive_seed
from ..helper.run_io import ci95

BENCH_COLUMNS = ("m", "implied_delta", "violation_ratio", "violation_ratio_ci95",
                 "objective_gap", "objective_gap_ci95", "sampled_ms", "full_ms")

MAX_BENCH_AGENTS = 12


def default_grid(n: int, delta: float = 0.3, Delta: float = 0.1) -> list[int]:
    total = proper_count(n)
    grid = {max(1, int(round(f * total))) for f in (0.05, 0.1, 0.2, 0.3, 0.5, 0.75)}
    grid.add(probable_core_count(n, delta, Delta))
    grid.add(total)
    return sorted(grid)


def run_approx_benchmark(n: int, trials: int, m_grid=None, seed: int = 0,
                         lambda_reg: float = DEFAULT_LAMBDA_REG, fresh_samples: int = 1000,
                         Delta: float = 0.1) -> list[dict]:
    """
    Sampled-constraint QP vs the full solve on random games.

    For each trial the coalition samples for increasing m are prefixes of one
    permutation, so the relaxations are nested.
    """
    if n > MAX_BENCH_AGENTS:
        raise ArgumentError(f"[Bench] n={n} exceeds the {MAX_BENCH_AGENTS}-agent limit")
    if trials < 1:
        raise ArgumentError(f"[Bench] trials must be >= 1, got {trials}")
    grid = sorted(set(m_grid)) if m_grid else default_grid(n)
    if grid[0] < 1 or grid[-1] > proper_count(n):
        raise ArgumentError(f"[Bench] m must lie in [1, {proper_count(n)}]")

    rng = np.random.default_rng(derive_seed(seed, "bench"))
    ratios = {m: [] for m in grid}
    gaps = {m: [] for m in grid}
    times = {m: [] for m in grid}
    full_times = []
    for trial in range(trials):
        full = random_table(n, rng)
        t0 = time.perf_counter()
        full_alloc = solve_core(full, lambda_reg)
        full_times.append((time.perf_counter() - t0) * 1000)

        sample_seed = int(rng.integers(0, 2**63 - 1))
        fresh_seed = int(rng.integers(0, 2**63 - 1))
        for m in grid:
            coalitions = sample_coalitions(n, SamplingPlan("fixed_count", m, seed=sample_seed))
            sub = full.restrict([c.mask for c in coalitions])
            t0 = time.perf_counter()
            alloc = solve_core(sub, lambda_reg)
            times[m].append((time.perf_counter() - t0) * 1000)
            denom = max(abs(full_alloc.objective), 1e-8)
            gaps[m].append(max(0.0, full_alloc.objective - alloc.objective) / denom)
            ratios[m].append(probable_core_rate(full, alloc, fresh_samples, fresh_seed))
        logging.debug(f"[Bench] trial {trial + 1}/{trials} done")

    rows = []
    for m in grid:
        rows.append({
            "m": m,
            "implied_delta": implied_delta(n, m, Delta),
            "violation_ratio": float(np.mean(ratios[m])),
            "violation_ratio_ci95": ci95(ratios[m]),
            "objective_gap": float(np.mean(gaps[m])),
            "objective_gap_ci95": ci95(gaps[m]),
            "sampled_ms": float(np.mean(times[m])),
            "full_ms": float(np.mean(full_times)),
        })
    return rows


def bench_csv(rows) -> str:
    lines = [",".join(BENCH_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) if isinstance(row[c], int) else repr(float(row[c]))
                              for c in BENCH_COLUMNS))
    return "\n".join(lines) + "\n"


class BenchApproxC:
    @classmethod
    def INPUT_TYPES(cls):
        return {
            "optional": {
                "n": ("INT", {"default": 7, "min": 2, "max": MAX_BENCH_AGENTS, "step": 1}),
                "trials": ("INT", {"default": 20, "min": 1, "max": 10**5, "step": 1}),
                "m": ("INT_LIST", {"default": [], "min": 1, "max": 2**MAX_BENCH_AGENTS,
                                   "tooltip": "Sample sizes; empty = a spread up to the full set"}),
                "lambda_reg": ("FLOAT", {"default": DEFAULT_LAMBDA_REG, "min": 1e-12, "max": 1e6, "step": 1e-3}),
                "fresh_samples": ("INT", {"default": 1000, "min": 1, "max": 10**7, "step": 1}),
            },
            "hidden": {"seed": "SEED"},
        }

    RETURN_TYPES = ("CSV",)
    FUNCTION     = "execute"
    CATEGORY     = "cora/trainer"

    def execute(self, n=7, trials=20, m=None, lambda_reg=DEFAULT_LAMBDA_REG, fresh_samples=1000, seed=0):
        rows = run_approx_benchmark(n, trials, m or None, seed or 0, lambda_reg, fresh_samples)
        return (bench_csv(rows),)


COMMAND_CLASS_MAPPINGS = {
    "bench-approx": BenchApproxC,
}

COMMAND_DISPLAY_NAME_MAPPINGS = {
    "bench-approx": "Sampled-coalition approximation benchmark",
}
