import itertools
import numpy as np
from dataclasses import dataclass
from scipy.optimize import minimize

from ..errors import ArgumentError, CapacityError
from .matrix_game import EnvStepResult

ACTION_BOX = (-5.0, 5.0)
HEIGHT_RANGE = (5.0, 10.0)
WIDTH_RANGE = (1.0, 2.0)
MAX_ORACLE_AGENTS = 5


@dataclass(frozen=True)
class DiffGameSpec:
    n_agents: int = 2
    n_fields: int = 5
    seed: int = 0

    kind = "differential"

    def __post_init__(self):
        if self.n_agents < 2:
            raise ArgumentError(f"[DiffGame] need at least 2 agents, got {self.n_agents}")
        if self.n_fields < 1:
            raise ArgumentError(f"[DiffGame] need at least one potential field, got {self.n_fields}")


class DifferentialGame:
    """
    Repeated single-step game over Gaussian potential fields

        R(x) = Σ_k h_k · exp(−‖x − c_k‖² / σ_k²)

    Each agent controls one coordinate of x in [-5, 5]; the observation is the
    constant vector [1.0].
    """

    kind = "continuous"
    horizon = 1
    obs_dim = 1

    def __init__(self, spec: DiffGameSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.centers = rng.uniform(*ACTION_BOX, size=(spec.n_fields, spec.n_agents))
        self.heights = rng.uniform(*HEIGHT_RANGE, size=spec.n_fields)
        self.widths = rng.uniform(*WIDTH_RANGE, size=spec.n_fields)
        self.n_agents = spec.n_agents
        self.action_sizes = (1,) * spec.n_agents
        self.low, self.high = ACTION_BOX

    @classmethod
    def from_fields(cls, centers, heights, widths) -> "DifferentialGame":
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        game = cls(DiffGameSpec(n_agents=centers.shape[1], n_fields=len(centers)))
        game.centers = centers
        game.heights = np.asarray(heights, dtype=np.float64).reshape(-1)
        game.widths = np.asarray(widths, dtype=np.float64).reshape(-1)
        return game

    def reward_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        d2 = np.sum((x[..., None, :] - self.centers) ** 2, axis=-1)
        return np.sum(self.heights * np.exp(-d2 / self.widths ** 2), axis=-1)

    def reward(self, joint_action) -> float:
        x = np.asarray(joint_action, dtype=np.float64)
        if x.shape != (self.n_agents,) or not np.all(np.isfinite(x)):
            raise ArgumentError(f"[DiffGame] joint action must be {self.n_agents} finite values")
        return float(self.reward_batch(x))

    def observation(self, t: int = 0) -> np.ndarray:
        return np.ones(1)

    def reset(self) -> np.ndarray:
        return self.observation()

    def step(self, joint_action) -> EnvStepResult:
        return EnvStepResult(self.observation(), self.reward(joint_action), True, {"step": 0})

    # ─────────────────────────────────────────────────────────────────────
    # Oracle: dense grid (0.01 for two agents, coarse otherwise) plus field
    # centers as candidates, refined with bounded L-BFGS-B
    # ─────────────────────────────────────────────────────────────────────

    def _refine(self, start) -> tuple[float, np.ndarray]:
        res = minimize(lambda z: -self.reward_batch(z), start, method="L-BFGS-B",
                       bounds=[ACTION_BOX] * self.n_agents,
                       options={"ftol": 1e-14, "gtol": 1e-10, "maxiter": 500})
        return -float(res.fun), np.asarray(res.x)

    def oracle_optimum(self) -> tuple[float, np.ndarray]:
        """(max reward, argmax) over the action box."""
        n = self.n_agents
        if n > MAX_ORACLE_AGENTS:
            raise CapacityError(f"[DiffGame] oracle supports at most {MAX_ORACLE_AGENTS} agents, got {n}")

        step = 0.01 if n == 2 else (0.25 if n == 3 else (0.5 if n == 4 else 1.0))
        axis = np.linspace(ACTION_BOX[0], ACTION_BOX[1], int(round(10 / step)) + 1)
        best_val, best_x = -np.inf, None
        candidates = [np.clip(c, *ACTION_BOX) for c in self.centers]
        top = []
        # chunk over the first coordinate to bound memory
        rest = np.array(list(itertools.product(axis, repeat=n - 1)))
        for x0 in axis:
            pts = np.hstack([np.full((len(rest), 1), x0), rest])
            vals = self.reward_batch(pts)
            k = int(np.argmax(vals))
            top.append((float(vals[k]), pts[k]))
        top.sort(key=lambda p: -p[0])
        candidates += [p for _, p in top[:10]]

        for start in candidates:
            val, x = self._refine(start)
            grid_val = float(self.reward_batch(start))
            if grid_val > val:
                val, x = grid_val, np.asarray(start)
            if val > best_val:
                best_val, best_x = val, x
        return best_val, best_x

    def oracle_optimal_return(self) -> float:
        return self.oracle_optimum()[0]

    def global_center(self) -> np.ndarray:
        """Center of the field whose peak reaches the highest reward."""
        vals = self.reward_batch(np.clip(self.centers, *ACTION_BOX))
        return self.centers[int(np.argmax(vals))]
