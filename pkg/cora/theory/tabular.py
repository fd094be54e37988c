import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from ..core.allocation import solve_core
from ..core.coalition import CoalitionAdvantageTable, all_proper_coalitions
from ..errors import ArgumentError, CoraError

THEORY_LAMBDA_REG = 1e-3


@dataclass(frozen=True, eq=False)
class TabularSoftmaxGame:
    """
    One state, n agents with independent softmax policies and a joint advantage
    tensor A_N indexed by the joint action.
    """
    logits: tuple[np.ndarray, ...]
    advantage: np.ndarray

    def __post_init__(self):
        logits = tuple(np.asarray(l, dtype=np.float64).reshape(-1) for l in self.logits)
        adv = np.asarray(self.advantage, dtype=np.float64)
        if not logits:
            raise ArgumentError("[Tabular] need at least one agent")
        if adv.shape != tuple(l.size for l in logits):
            raise ArgumentError(f"[Tabular] advantage shape {adv.shape} does not match the action counts "
                                f"{tuple(l.size for l in logits)}")
        if not np.all(np.isfinite(adv)) or not all(np.all(np.isfinite(l)) for l in logits):
            raise ArgumentError("[Tabular] logits and advantages must be finite")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "advantage", adv)

    @property
    def n(self) -> int:
        return len(self.logits)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.advantage.shape

    def probs(self, agent: int) -> np.ndarray:
        return softmax(self.logits[agent])

    def log_probs(self, agent: int) -> np.ndarray:
        return log_softmax(self.logits[agent])

    def joint_probs(self) -> np.ndarray:
        out = np.ones(())
        for i in range(self.n):
            out = np.multiply.outer(out, self.probs(i))
        return out

    def with_logits(self, agent: int, logits) -> "TabularSoftmaxGame":
        new = list(self.logits)
        new[agent] = np.asarray(logits, dtype=np.float64)
        return TabularSoftmaxGame(tuple(new), self.advantage)

    def along(self, agent: int, vec: np.ndarray) -> np.ndarray:
        shape = [1] * self.n
        shape[agent] = -1
        return vec.reshape(shape)

    def expect_over(self, tensor: np.ndarray, agents) -> np.ndarray:
        """E over the listed agents' actions; those axes are kept with size one."""
        out = np.asarray(tensor, dtype=np.float64)
        for j in agents:
            out = (out * self.along(j, self.probs(j))).sum(axis=j, keepdims=True)
        return out

    def coalition_advantage(self, mask: int) -> np.ndarray:
        """A_C(a_C) = E over the non-members of A_N, broadcast back to the joint shape."""
        others = [j for j in range(self.n) if not mask >> j & 1]
        return np.broadcast_to(self.expect_over(self.advantage, others), self.shape)

    def marginals(self) -> dict[int, np.ndarray]:
        return {c.mask: self.coalition_advantage(c.mask) for c in all_proper_coalitions(self.n)}

    def profiles(self):
        return itertools.product(*(range(k) for k in self.shape))

    def coalition_table(self, profile, marginals=None) -> CoalitionAdvantageTable:
        marginals = marginals if marginals is not None else self.marginals()
        values = {mask: float(m[profile]) for mask, m in marginals.items()}
        return CoalitionAdvantageTable.from_masks(self.n, float(self.advantage[profile]), values)


@dataclass(frozen=True, eq=False)
class CoreCredits:
    """Per-profile ε-core allocation: ``credits[..., i]`` is agent i's share."""
    credits: np.ndarray
    epsilon: np.ndarray

    def agent(self, i: int) -> np.ndarray:
        return self.credits[..., i]

    @property
    def epsilon_max(self) -> float:
        return float(self.epsilon.max())


def core_credits(game: TabularSoftmaxGame, lambda_reg: float = THEORY_LAMBDA_REG) -> CoreCredits:
    """Solve the full-table core QP at every joint action of the game."""
    marginals = game.marginals()
    credits = np.zeros(game.shape + (game.n,))
    eps = np.zeros(game.shape)
    for profile in game.profiles():
        alloc = solve_core(game.coalition_table(profile, marginals), lambda_reg)
        if not alloc.optimal:
            raise CoraError(f"[Tabular] core QP did not converge at profile {profile}")
        credits[profile] = alloc.per_agent
        eps[profile] = alloc.epsilon
    return CoreCredits(credits, eps)


# ─────────────────────────────────────────────────────────────────────────────
# Game constructors
# ─────────────────────────────────────────────────────────────────────────────

def lopsided_pair_game() -> TabularSoftmaxGame:
    """2×2 game whose uniform-policy marginals at (0, 0) give agent 0 +5, agent 1 −5 and A_N = −5."""
    return TabularSoftmaxGame((np.zeros(2), np.zeros(2)),
                              np.array([[-5.0, 15.0], [-5.0, -5.0]]))


def additive_game(actions, rng: np.random.Generator, scale: float = 5.0) -> TabularSoftmaxGame:
    """A_N(a) = Σ u_i(a_i) with every u_i mean-zero under π_i, so credits u_i are exactly compatible."""
    logits = tuple(rng.normal(0.0, 1.0, size=k) for k in actions)
    adv = np.zeros(tuple(actions))
    for i, (k, l) in enumerate(zip(actions, logits)):
        u = rng.uniform(-scale, scale, size=k)
        u -= softmax(l) @ u
        shape = [1] * len(actions)
        shape[i] = k
        adv = adv + u.reshape(shape)
    return TabularSoftmaxGame(logits, adv)


def generic_game(actions, rng: np.random.Generator, low: float = -10.0, high: float = 10.0) -> TabularSoftmaxGame:
    logits = tuple(rng.normal(0.0, 1.0, size=k) for k in actions)
    return TabularSoftmaxGame(logits, rng.uniform(low, high, size=tuple(actions)))


def random_game(rng: np.random.Generator, additive: bool, max_agents: int = 3,
                max_actions: int = 4) -> TabularSoftmaxGame:
    n = int(rng.integers(2, max_agents + 1))
    actions = [int(k) for k in rng.integers(2, max_actions + 1, size=n)]
    return additive_game(actions, rng) if additive else generic_game(actions, rng)
