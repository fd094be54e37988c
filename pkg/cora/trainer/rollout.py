import numpy as np
import torch
from dataclasses import dataclass, fields

from ..critics.networks import DTYPE
from ..errors import ArgumentError


@dataclass
class RolloutBatch:
    """Time-major buffer: leading axes (T, E) = (step, parallel env)."""
    obs: np.ndarray
    actions: np.ndarray
    raw_actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    next_obs: np.ndarray
    bootstrap: np.ndarray
    advantages: np.ndarray | None = None
    credits: np.ndarray | None = None
    valid: np.ndarray | None = None
    epsilons: np.ndarray | None = None
    qp_iters: np.ndarray | None = None

    def __post_init__(self):
        lead = self.rewards.shape
        for name in ("obs", "actions", "raw_actions", "log_probs", "values", "dones", "next_obs"):
            if getattr(self, name).shape[:2] != lead:
                raise ArgumentError(f"[Rollout] '{name}' is not aligned with rewards {lead}")

    @property
    def T(self) -> int:
        return self.rewards.shape[0]

    @property
    def E(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_agents(self) -> int:
        return self.actions.shape[2]

    def flat(self, name: str) -> np.ndarray:
        x = getattr(self, name)
        return x.reshape(self.T * self.E, *x.shape[2:])

    def episode_returns(self) -> list[float]:
        """Returns of the episodes that finished inside the batch, env-major order."""
        out = []
        for e in range(self.E):
            acc = 0.0
            for t in range(self.T):
                acc += self.rewards[t, e]
                if self.dones[t, e]:
                    out.append(float(acc))
                    acc = 0.0
        return out

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def collect_rollouts(envs, policies, v_critic, steps: int, generator: torch.Generator | None = None) -> RolloutBatch:
    """
    Run every env for ``steps`` transitions from a fresh reset, resetting on done.
    Log-probs are recorded at sampling time under the current parameters.
    """
    if steps < 1 or not envs:
        raise ArgumentError("[Rollout] need at least one env and one step")
    E, n = len(envs), len(policies)
    obs = np.stack([env.reset() for env in envs])
    obs_dim = obs.shape[1]

    buf = {
        "obs": np.zeros((steps, E, obs_dim)),
        "actions": np.zeros((steps, E, n)),
        "raw_actions": np.zeros((steps, E, n)),
        "log_probs": np.zeros((steps, E, n)),
        "rewards": np.zeros((steps, E)),
        "values": np.zeros((steps, E)),
        "dones": np.zeros((steps, E), dtype=bool),
        "next_obs": np.zeros((steps, E, obs_dim)),
    }
    for t in range(steps):
        buf["obs"][t] = obs
        with torch.no_grad():
            buf["values"][t] = v_critic(torch.as_tensor(obs, dtype=DTYPE)).numpy()
        for i, policy in enumerate(policies):
            action, raw, log_prob = policy.sample(obs, generator)
            buf["actions"][t, :, i] = action.numpy()
            buf["raw_actions"][t, :, i] = raw.numpy()
            buf["log_probs"][t, :, i] = log_prob.numpy()

        next_obs = np.empty_like(obs)
        for e, env in enumerate(envs):
            try:
                result = env.step(buf["actions"][t, e])
            except ArgumentError as err:
                raise ArgumentError(f"[Rollout] env {e} at step {t}: {err}") from err
            buf["rewards"][t, e] = result.reward
            buf["dones"][t, e] = result.done
            buf["next_obs"][t, e] = result.obs
            next_obs[e] = env.reset() if result.done else result.obs
        obs = next_obs

    with torch.no_grad():
        bootstrap = v_critic(torch.as_tensor(buf["next_obs"][-1], dtype=DTYPE)).numpy()
    return RolloutBatch(bootstrap=bootstrap, **buf)
