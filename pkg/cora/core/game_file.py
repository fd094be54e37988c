import csv
import io
import logging
import time
from pathlib import Path

from ..errors import ArgumentError
from .allocation import DEFAULT_LAMBDA_REG, solve_core, solve_least_core, verify_allocation
from .coalition import CoalitionAdvantageTable

# ─────────────────────────────────────────────────────────────────────────────
# Plain-text game file
#   line 1   n
#   line 2   A_N
#   then     <bitmask> <value>      (bitmask in decimal, bit i = agent i)
# Blank lines and lines starting with '#' are skipped.
# ─────────────────────────────────────────────────────────────────────────────

def read_game_file(path) -> CoalitionAdvantageTable:
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as e:
        raise ArgumentError(f"[GameFile] cannot read {path}: {e}") from e

    lines = [ln.strip() for ln in raw.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if len(lines) < 2:
        raise ArgumentError(f"[GameFile] {path}: expected n and A_N on the first two lines")
    try:
        n = int(lines[0])
        grand = float(lines[1])
        values = {}
        for lineno, ln in enumerate(lines[2:], start=3):
            parts = ln.split()
            if len(parts) != 2:
                raise ArgumentError(f"[GameFile] {path}: entry {lineno} must be '<bitmask> <value>'")
            mask = int(parts[0])
            if mask in values:
                raise ArgumentError(f"[GameFile] {path}: coalition {mask} listed twice")
            values[mask] = float(parts[1])
    except ValueError as e:
        if isinstance(e, ArgumentError):
            raise
        raise ArgumentError(f"[GameFile] {path}: {e}") from e
    return CoalitionAdvantageTable.from_masks(n, grand, values)


def write_game_file(path, table: CoalitionAdvantageTable) -> Path:
    path = Path(path)
    lines = [str(table.n), repr(table.grand_advantage)]
    lines += [f"{c.mask} {v!r}" for c, v in table.entries]
    path.write_text("\n".join(lines) + "\n")
    return path


def allocation_csv(table: CoalitionAdvantageTable, alloc) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["field", "index", "value"])
    for i, a in enumerate(alloc.per_agent):
        writer.writerow(["allocation", i, repr(float(a))])
    writer.writerow(["epsilon", "", repr(alloc.epsilon)])
    writer.writerow(["objective", "", repr(alloc.objective)])
    writer.writerow(["status", "", alloc.status])
    writer.writerow(["iterations", "", alloc.iterations])
    for k in alloc.active_constraints:
        writer.writerow(["active_constraint", k, table.coalitions[k].mask])
    return buf.getvalue()


class CoreSolveC:
    @classmethod
    def INPUT_TYPES(cls):
        return {
            "required": {
                "game_file": ("PATH", {"tooltip": "Plain-text coalition game: n, A_N, then '<bitmask> <value>' lines"}),
            },
            "optional": {
                "lambda_reg": ("FLOAT", {"default": DEFAULT_LAMBDA_REG, "min": 0.0, "max": 1e6, "step": 1e-3,
                                         "tooltip": "Variance penalty; 0 solves the plain least core"}),
                "max_iter": ("INT", {"default": 0, "min": 0, "max": 10**6, "step": 1,
                                     "tooltip": "Active-set iteration budget, 0 = 50·(m+1)"}),
            },
        }

    RETURN_TYPES = ("CSV",)
    FUNCTION     = "execute"
    CATEGORY     = "cora/core"

    def execute(self, game_file, lambda_reg=DEFAULT_LAMBDA_REG, max_iter=0):
        table = read_game_file(game_file)
        start = time.time()
        budget = max_iter or None
        if lambda_reg > 0:
            alloc = solve_core(table, lambda_reg, max_iter=budget)
        else:
            alloc = solve_least_core(table, max_iter=budget)
        elapsed_ms = int((time.time() - start) * 1000)
        report = verify_allocation(table, alloc.per_agent, alloc.epsilon, tol=1e-6)
        logging.info(f"[CoreSolve] n={table.n} m={len(table)} status={alloc.status} "
                     f"iterations={alloc.iterations} violations={report.violations} in {elapsed_ms}ms")
        return (allocation_csv(table, alloc),)


COMMAND_CLASS_MAPPINGS = {
    "core-solve": CoreSolveC,
}

COMMAND_DISPLAY_NAME_MAPPINGS = {
    "core-solve": "Solve regularized least ε-core",
}
