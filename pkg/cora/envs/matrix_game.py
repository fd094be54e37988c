import numpy as np
from dataclasses import dataclass, field

from ..errors import ArgumentError, CapacityError

MATRIX_VARIANTS = ("base", "multipeak")
MAX_JOINT_ACTIONS = 10**7

BASE_RANGE = (-10.0, 20.0)
BACKGROUND_RANGE = (-10.0, 0.0)
GLOBAL_PEAK_RANGE = (15.0, 20.0)
LOCAL_PEAK_RANGE = (5.0, 12.0)


@dataclass(frozen=True)
class EnvStepResult:
    obs: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MatrixGameSpec:
    n_agents: int = 2
    n_actions: int = 5
    horizon: int = 10
    variant: str = "base"
    peaks: int = 10
    seed: int = 0

    kind = "matrix"

    def __post_init__(self):
        if self.n_agents < 2:
            raise ArgumentError(f"[MatrixGame] need at least 2 agents, got {self.n_agents}")
        if self.n_actions < 2:
            raise ArgumentError(f"[MatrixGame] need at least 2 actions, got {self.n_actions}")
        if self.horizon < 1:
            raise ArgumentError(f"[MatrixGame] horizon must be >= 1, got {self.horizon}")
        if self.variant not in MATRIX_VARIANTS:
            raise ArgumentError(f"[MatrixGame] unknown variant '{self.variant}', expected one of {MATRIX_VARIANTS}")
        if self.joint_actions > MAX_JOINT_ACTIONS:
            raise CapacityError(f"[MatrixGame] {self.joint_actions} joint actions exceed the {MAX_JOINT_ACTIONS} limit")
        if self.variant == "multipeak" and not 1 <= self.peaks <= self.joint_actions:
            raise ArgumentError(f"[MatrixGame] peaks must lie in [1, {self.joint_actions}], got {self.peaks}")

    @property
    def joint_actions(self) -> int:
        return self.n_actions ** self.n_agents


def build_reward_tensors(spec: MatrixGameSpec):
    """(rewards (horizon, A, .., A), peak flat indices (horizon, peaks) or None)."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.n_actions,) * spec.n_agents
    if spec.variant == "base":
        rewards = rng.uniform(*BASE_RANGE, size=(spec.horizon, *shape))
        return rewards, None

    flat = rng.uniform(*BACKGROUND_RANGE, size=(spec.horizon, spec.joint_actions))
    peaks = np.zeros((spec.horizon, spec.peaks), dtype=np.int64)
    for t in range(spec.horizon):
        # first chosen cell carries the global optimum
        cells = rng.choice(spec.joint_actions, size=spec.peaks, replace=False)
        flat[t, cells[0]] = rng.uniform(*GLOBAL_PEAK_RANGE)
        flat[t, cells[1:]] = rng.uniform(*LOCAL_PEAK_RANGE, size=spec.peaks - 1)
        peaks[t] = cells
    return flat.reshape(spec.horizon, *shape), peaks


class MatrixGame:
    """Repeated team matrix game; the observation is the one-hot step index (zeros once done)."""

    kind = "discrete"

    def __init__(self, spec: MatrixGameSpec):
        self.spec = spec
        self.rewards, self.peaks = build_reward_tensors(spec)
        self.n_agents = spec.n_agents
        self.horizon = spec.horizon
        self.action_sizes = (spec.n_actions,) * spec.n_agents
        self.obs_dim = spec.horizon
        self.t = 0

    def observation(self, t: int) -> np.ndarray:
        obs = np.zeros(self.obs_dim)
        if t < self.horizon:
            obs[t] = 1.0
        return obs

    def reset(self) -> np.ndarray:
        self.t = 0
        return self.observation(0)

    def reward(self, t: int, joint_action) -> float:
        a = np.asarray(joint_action)
        if a.shape != (self.n_agents,):
            raise ArgumentError(f"[MatrixGame] joint action must have {self.n_agents} entries")
        if np.any(a != np.round(a)) or np.any(a < 0) or np.any(a >= self.spec.n_actions):
            raise ArgumentError(f"[MatrixGame] action {a.tolist()} out of range 0..{self.spec.n_actions - 1}")
        return float(self.rewards[(t, *a.astype(int))])

    def step(self, joint_action) -> EnvStepResult:
        if self.t >= self.horizon:
            raise ArgumentError("[MatrixGame] episode already finished, call reset()")
        r = self.reward(self.t, joint_action)
        step = self.t
        self.t += 1
        done = self.t >= self.horizon
        return EnvStepResult(self.observation(self.t), r, done, {"step": step})

    def oracle_optimal_return(self) -> float:
        return float(self.rewards.reshape(self.horizon, -1).max(axis=1).sum())

    def optimal_actions(self) -> np.ndarray:
        """Per step, the joint action that attains the maximum, shape (horizon, n)."""
        flat = self.rewards.reshape(self.horizon, -1).argmax(axis=1)
        return np.stack(np.unravel_index(flat, self.action_sizes), axis=1)


def matrix_oracle(spec: MatrixGameSpec) -> float:
    return MatrixGame(spec).oracle_optimal_return()
