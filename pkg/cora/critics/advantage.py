import logging
import math
import numpy as np
import torch
from dataclasses import dataclass

from ..errors import ArgumentError, TrainingAbort
from .networks import DTYPE, Transitions
from .quadratic import TwinQuadraticCritic, _mask_of

DEFAULT_MC_SAMPLES = 16
EXACT_LIMIT = 4096


# ─────────────────────────────────────────────────────────────────────────────
# Coalitional advantage
#
#   A_C(s, a_C) = min_j  E_{a_rest ~ π}[ Q_j(s, a_C, a_rest) ] − V(s)
#
# The expectation is enumerated when the non-member joint action space is
# small, Monte-Carlo sampled (K draws) otherwise, and closed-form for the
# quadratic critic.
# ─────────────────────────────────────────────────────────────────────────────

def _queries(q, state, joint_action, mask, policies, K, rng, exact_limit):
    enc = q.encoder
    n = enc.n_agents
    a = np.asarray(joint_action)
    rest = [j for j in range(n) if not mask >> j & 1]
    if not rest:
        return enc.encode(a[None, :]), np.ones(1)

    if enc.kind == "discrete" and math.prod(enc.sizes[j] for j in rest) <= exact_limit:
        grid = np.indices([enc.sizes[j] for j in rest]).reshape(len(rest), -1).T
        weights = np.ones(len(grid))
        for col, j in enumerate(rest):
            weights *= policies[j].probs_numpy(state)[grid[:, col]]
        joint = np.repeat(a[None, :], len(grid), axis=0)
        joint[:, rest] = grid
        return enc.encode(joint), weights

    joint = np.repeat(a[None, :], K, axis=0)
    for j in rest:
        joint[:, j] = policies[j].sample_numpy(state, rng, K)
    return enc.encode(joint), np.full(K, 1.0 / K)


def coalition_values(q, state, joint_action, coalitions, policies, K: int = DEFAULT_MC_SAMPLES,
                     rng: np.random.Generator | None = None, exact_limit: int = EXACT_LIMIT):
    """Per-head marginal Q for each coalition, shape (2, m)."""
    if K < 1:
        raise ArgumentError(f"[CoalitionValue] K must be >= 1, got {K}")
    n = q.encoder.n_agents
    masks = [_mask_of(c, n) for c in coalitions]
    state_t = torch.as_tensor(np.asarray(state), dtype=DTYPE)

    with torch.no_grad():
        if isinstance(q, TwinQuadraticCritic):
            probs = [p.probs_numpy(state) for p in policies]
            if not masks:
                return np.zeros((2, 0))
            feats = torch.stack([q.heads[0].marginal_features(m, joint_action, probs) for m in masks])
            q1, q2 = q(state_t, feats)
            return np.stack([q1.numpy(), q2.numpy()])

        rng = np.random.default_rng(0) if rng is None else rng
        feats, weights, owner = [], [], []
        for k, m in enumerate(masks):
            f, w = _queries(q, state, joint_action, m, policies, K, rng, exact_limit)
            feats.append(f)
            weights.append(w)
            owner.append(np.full(len(w), k))
        if not feats:
            return np.zeros((2, 0))
        q1, q2 = q(state_t, torch.cat(feats))
        weights = np.concatenate(weights)
        owner = np.concatenate(owner)
        out = np.zeros((2, len(masks)))
        np.add.at(out[0], owner, weights * q1.numpy())
        np.add.at(out[1], owner, weights * q2.numpy())
        return out


def coalition_advantages(q, value: float, state, joint_action, coalitions, policies,
                         K: int = DEFAULT_MC_SAMPLES, rng: np.random.Generator | None = None,
                         exact_limit: int = EXACT_LIMIT, head: int | None = None) -> np.ndarray:
    per_head = coalition_values(q, state, joint_action, coalitions, policies, K, rng, exact_limit)
    est = per_head.min(axis=0) if head is None else per_head[head]
    return est - value


def estimate_coalitional_advantage(q, value: float, state, coalition, joint_action, policies,
                                   K: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                                   exact_limit: int = EXACT_LIMIT, head: int | None = None) -> float:
    rng = np.random.default_rng(seed)
    return float(coalition_advantages(q, value, state, joint_action, [coalition], policies,
                                      K, rng, exact_limit, head)[0])


# ─────────────────────────────────────────────────────────────────────────────
# GAE for the grand coalition
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GaeConfig:
    gamma: float = 0.99
    lam: float = 0.95

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ArgumentError(f"[GAE] gamma must lie in [0, 1), got {self.gamma}")
        if not 0 <= self.lam <= 1:
            raise ArgumentError(f"[GAE] lambda must lie in [0, 1], got {self.lam}")


def gae_advantages(rewards, values, bootstrap_value, cfg: GaeConfig, dones) -> np.ndarray:
    """Backward recursion over axis 0; extra trailing axes are parallel environments."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    boot = np.asarray(bootstrap_value, dtype=np.float64)
    if r.shape != v.shape or r.shape != d.shape:
        raise ArgumentError(f"[GAE] length mismatch: rewards {r.shape}, values {v.shape}, dones {d.shape}")
    if boot.shape != r.shape[1:]:
        raise ArgumentError(f"[GAE] bootstrap value has shape {boot.shape}, expected {r.shape[1:]}")

    adv = np.zeros_like(r)
    last = np.zeros_like(boot)
    next_v = boot
    for t in reversed(range(len(r))):
        live = 1.0 - d[t]
        delta = r[t] + cfg.gamma * next_v * live - v[t]
        last = delta + cfg.gamma * cfg.lam * live * last
        adv[t] = last
        next_v = v[t]
    return adv


# ─────────────────────────────────────────────────────────────────────────────
# Critic regression against one-step TD targets  y = r + γ V(s') (1 − done)
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CriticLoss:
    v_loss: float
    q1_loss: float
    q2_loss: float

    @property
    def total(self) -> float:
        return self.v_loss + self.q1_loss + self.q2_loss


def _optimizer(name: str, params, lr: float):
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr)
    raise ArgumentError(f"[Critic] unknown optimizer '{name}'")


class CriticUpdater:
    def __init__(self, v_critic, q_critic, lr_v: float, lr_q: float, gamma: float,
                 optimizer: str = "adam"):
        if lr_v < 0 or lr_q < 0:
            raise ArgumentError("[Critic] learning rates must be >= 0")
        self.v = v_critic
        self.q = q_critic
        self.gamma = float(gamma)
        self.v_opt = _optimizer(optimizer, self.v.parameters(), lr_v)
        self.q_opt = _optimizer(optimizer, self.q.parameters(), lr_q)

    def losses(self, tr: Transitions):
        s = torch.as_tensor(tr.states, dtype=DTYPE)
        a = torch.as_tensor(tr.actions, dtype=DTYPE)
        r = torch.as_tensor(tr.rewards, dtype=DTYPE)
        s2 = torch.as_tensor(tr.next_states, dtype=DTYPE)
        live = 1.0 - torch.as_tensor(tr.dones, dtype=DTYPE)
        with torch.no_grad():
            y = r + self.gamma * self.v(s2) * live
        q1, q2 = self.q(s, a)
        return (torch.mean((self.v(s) - y) ** 2),
                torch.mean((q1 - y) ** 2),
                torch.mean((q2 - y) ** 2))

    def step(self, tr: Transitions) -> CriticLoss:
        v_loss, q1_loss, q2_loss = self.losses(tr)
        report = CriticLoss(float(v_loss), float(q1_loss), float(q2_loss))
        if not all(math.isfinite(x) for x in (report.v_loss, report.q1_loss, report.q2_loss)):
            logging.error(f"[Critic] non-finite loss {report}")
            raise TrainingAbort("[Critic] non-finite critic loss",
                                diagnostics={"v_loss": report.v_loss, "q1_loss": report.q1_loss,
                                             "q2_loss": report.q2_loss})
        self.v_opt.zero_grad()
        v_loss.backward()
        self.v_opt.step()
        self.q_opt.zero_grad()
        (q1_loss + q2_loss).backward()
        self.q_opt.step()
        return report


def update_critics(v_critic, q_critic, tr: Transitions, lr_v: float, lr_q: float,
                   gamma: float) -> CriticLoss:
    """One plain gradient step on each critic."""
    return CriticUpdater(v_critic, q_critic, lr_v, lr_q, gamma, optimizer="sgd").step(tr)
