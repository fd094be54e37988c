import math
import numpy as np
import torch
import torch.nn as nn
from torch.distributions import Categorical, Independent, Normal

from ..critics.networks import DTYPE, DEFAULT_HIDDEN, MLP
from ..errors import ArgumentError

ACTION_LOW = -5.0
ACTION_HIGH = 5.0


def _obs(obs) -> torch.Tensor:
    return torch.as_tensor(np.asarray(obs), dtype=DTYPE)


# ─────────────────────────────────────────────────────────────────────────────
# Categorical policy for discrete games
# ─────────────────────────────────────────────────────────────────────────────

class CategoricalPolicy(nn.Module):
    kind = "discrete"

    def __init__(self, obs_dim: int, n_actions: int, hidden=DEFAULT_HIDDEN, bias: bool = True,
                 seed: int | None = None):
        super().__init__()
        if n_actions < 1:
            raise ArgumentError(f"[Policy] need at least one action, got {n_actions}")
        self.n_actions = int(n_actions)
        self.net = MLP(obs_dim, n_actions, hidden, bias=bias, seed=seed)

    def arch(self) -> dict:
        return {"type": "categorical", "obs_dim": self.net.in_dim, "n_actions": self.n_actions,
                "hidden": list(self.net.hidden), "bias": self.net.bias}

    def distribution(self, obs) -> Categorical:
        return Categorical(logits=self.net(_obs(obs)))

    def _check(self, action) -> torch.Tensor:
        a = torch.as_tensor(np.asarray(action))
        if torch.is_floating_point(a) and torch.any(a != torch.round(a)):
            raise ArgumentError("[Policy] categorical actions must be integers")
        a = a.long()
        if torch.any(a < 0) or torch.any(a >= self.n_actions):
            raise ArgumentError(f"[Policy] action out of support 0..{self.n_actions - 1}")
        return a

    def log_prob(self, obs, action) -> torch.Tensor:
        return self.distribution(obs).log_prob(self._check(action))

    def entropy(self, obs) -> torch.Tensor:
        return self.distribution(obs).entropy()

    def sample(self, obs, generator: torch.Generator | None = None):
        """(env action, raw action, log_prob); raw and env actions coincide."""
        with torch.no_grad():
            dist = self.distribution(obs)
            probs = dist.probs.reshape(-1, self.n_actions)
            a = torch.multinomial(probs, 1, generator=generator).reshape(dist.probs.shape[:-1])
            return a, a, dist.log_prob(a)

    def greedy(self, obs) -> torch.Tensor:
        with torch.no_grad():
            return torch.argmax(self.net(_obs(obs)), dim=-1)

    def probs_numpy(self, obs) -> np.ndarray:
        with torch.no_grad():
            return self.distribution(obs).probs.numpy()

    def sample_numpy(self, obs, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.probs_numpy(obs)
        return rng.choice(self.n_actions, size=size, p=p / p.sum())


# ─────────────────────────────────────────────────────────────────────────────
# Diagonal Gaussian policy, state-independent log-std
# Actions are clamped to the box after sampling; log-probs use the raw draw.
# ─────────────────────────────────────────────────────────────────────────────

class GaussianPolicy(nn.Module):
    kind = "continuous"

    def __init__(self, obs_dim: int, action_dim: int = 1, hidden=DEFAULT_HIDDEN, bias: bool = True,
                 seed: int | None = None, log_std_init: float = 0.0,
                 low: float = ACTION_LOW, high: float = ACTION_HIGH):
        super().__init__()
        self.action_dim = int(action_dim)
        self.low = float(low)
        self.high = float(high)
        self.mean_net = MLP(obs_dim, action_dim, hidden, bias=bias, seed=seed)
        self.log_std = nn.Parameter(torch.full((action_dim,), float(log_std_init), dtype=DTYPE))

    def arch(self) -> dict:
        return {"type": "gaussian", "obs_dim": self.mean_net.in_dim, "action_dim": self.action_dim,
                "hidden": list(self.mean_net.hidden), "bias": self.mean_net.bias,
                "low": self.low, "high": self.high}

    def distribution(self, obs) -> Independent:
        mean = self.mean_net(_obs(obs))
        return Independent(Normal(mean, torch.exp(self.log_std).expand_as(mean)), 1)

    def _raw(self, action) -> torch.Tensor:
        a = torch.as_tensor(np.asarray(action), dtype=DTYPE)
        # one-dimensional actions travel without their trailing axis
        if self.action_dim == 1:
            a = a.unsqueeze(-1)
        return a

    def log_prob(self, obs, action) -> torch.Tensor:
        a = self._raw(action)
        if not torch.all(torch.isfinite(a)):
            raise ArgumentError("[Policy] Gaussian action must be finite")
        return self.distribution(obs).log_prob(a)

    def entropy(self, obs) -> torch.Tensor:
        return self.distribution(obs).entropy()

    def clamp(self, raw: torch.Tensor) -> torch.Tensor:
        return torch.clamp(raw, self.low, self.high)

    def sample(self, obs, generator: torch.Generator | None = None):
        with torch.no_grad():
            dist = self.distribution(obs)
            mean = dist.mean
            noise = torch.randn(mean.shape, generator=generator, dtype=DTYPE)
            raw = mean + torch.exp(self.log_std) * noise
            log_prob = dist.log_prob(raw)
            if self.action_dim == 1:
                raw = raw.squeeze(-1)
            return self.clamp(raw), raw, log_prob

    def greedy(self, obs) -> torch.Tensor:
        with torch.no_grad():
            mean = self.mean_net(_obs(obs))
            if self.action_dim == 1:
                mean = mean.squeeze(-1)
            return self.clamp(mean)

    def mean_numpy(self, obs) -> np.ndarray:
        with torch.no_grad():
            return self.mean_net(_obs(obs)).numpy()

    def probs_numpy(self, obs):
        raise ArgumentError("[Policy] Gaussian policies have no finite action distribution")

    def sample_numpy(self, obs, rng: np.random.Generator, size: int) -> np.ndarray:
        with torch.no_grad():
            mean = self.mean_net(_obs(obs)).numpy().reshape(-1)
            std = torch.exp(self.log_std).numpy()
        draws = rng.normal(mean, std, size=(size, self.action_dim))
        draws = np.clip(draws, self.low, self.high)
        return draws[:, 0] if self.action_dim == 1 else draws


# ─────────────────────────────────────────────────────────────────────────────
# Functional entry points
# ─────────────────────────────────────────────────────────────────────────────

def make_policy(kind: str, obs_dim: int, n_actions: int = 1, hidden=DEFAULT_HIDDEN,
                seed: int | None = None, **kw):
    if kind == "discrete":
        return CategoricalPolicy(obs_dim, n_actions, hidden, seed=seed)
    if kind == "continuous":
        return GaussianPolicy(obs_dim, 1, hidden, seed=seed, **kw)
    raise ArgumentError(f"[Policy] unknown action kind '{kind}'")


def policy_from_arch(arch: dict):
    if arch["type"] == "categorical":
        return CategoricalPolicy(arch["obs_dim"], arch["n_actions"], arch["hidden"], arch["bias"])
    if arch["type"] == "gaussian":
        return GaussianPolicy(arch["obs_dim"], arch["action_dim"], arch["hidden"], arch["bias"],
                              low=arch["low"], high=arch["high"])
    raise ArgumentError(f"[Policy] unknown policy type '{arch['type']}'")


def sample_action(policy, obs, seed: int):
    """(env action, log_prob) for a single observation, deterministic given seed."""
    gen = torch.Generator().manual_seed(int(seed) % 2**63)
    action, _, log_prob = policy.sample(obs, gen)
    return action.numpy(), float(log_prob)


def log_prob(policy, obs, action) -> float:
    with torch.no_grad():
        return float(policy.log_prob(obs, action))


def entropy(policy, obs) -> float:
    with torch.no_grad():
        return float(policy.entropy(obs))


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(0.5 * math.log(2 * math.pi * math.e) + np.asarray(log_std)))
