import logging
import math
import numpy as np
import torch
from dataclasses import dataclass

from ..critics.networks import DTYPE
from ..errors import ArgumentError, TrainingAbort


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.2
    entropy_coef: float = 0.0
    epochs: int = 10
    lr: float = 5e-4
    optimizer: str = "adam"

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ArgumentError(f"[PPO] clip must lie in (0, 1), got {self.clip}")
        if self.epochs < 1:
            raise ArgumentError(f"[PPO] epochs must be >= 1, got {self.epochs}")
        if self.lr < 0 or self.entropy_coef < 0:
            raise ArgumentError("[PPO] learning rate and entropy coefficient must be >= 0")


@dataclass(frozen=True)
class PpoReport:
    surrogate: float
    entropy: float
    loss: float
    updated_rows: int


def surrogate(policy, obs, actions, old_log_probs, advantages, clip: float,
              entropy_coef: float = 0.0, weights=None):
    """
    (objective, clipped surrogate, entropy), all means over the batch.

    objective = mean_t min(r_t Â_t, clip(r_t, 1 ± clip) Â_t) + entropy_coef · mean entropy
    """
    old = torch.as_tensor(np.asarray(old_log_probs), dtype=DTYPE)
    adv = torch.as_tensor(np.asarray(advantages), dtype=DTYPE)
    w = torch.ones_like(adv) if weights is None else torch.as_tensor(np.asarray(weights), dtype=DTYPE)
    w = w / w.sum()

    ratio = torch.exp(policy.log_prob(obs, actions) - old)
    clipped = torch.clamp(ratio, 1.0 - clip, 1.0 + clip)
    surr = torch.sum(w * torch.minimum(ratio * adv, clipped * adv))
    ent = torch.sum(w * policy.entropy(obs))
    return surr + entropy_coef * ent, surr, ent


class PpoUpdater:
    """Per-agent optimizers; each agent's parameters are disjoint, so agents update independently."""

    def __init__(self, policies, cfg: PpoConfig):
        self.policies = list(policies)
        self.cfg = cfg
        if cfg.optimizer == "adam":
            self.opts = [torch.optim.Adam(p.parameters(), lr=cfg.lr) for p in self.policies]
        elif cfg.optimizer == "sgd":
            self.opts = [torch.optim.SGD(p.parameters(), lr=cfg.lr) for p in self.policies]
        else:
            raise ArgumentError(f"[PPO] unknown optimizer '{cfg.optimizer}'")

    def update(self, obs, actions, old_log_probs, advantages, valid=None) -> PpoReport:
        """
        obs (B, obs_dim); actions, old_log_probs, advantages (B, n) per agent column.
        Rows with ``valid`` False are left out of the surrogate.
        """
        actions = np.asarray(actions)
        old_log_probs = np.asarray(old_log_probs, dtype=np.float64)
        advantages = np.asarray(advantages, dtype=np.float64)
        valid = np.ones(len(advantages), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        rows = int(valid.sum())
        if rows == 0:
            logging.warning("[PPO] no usable rows in batch, skipping actor update")
            return PpoReport(0.0, 0.0, 0.0, 0)

        obs = np.asarray(obs)[valid]
        actions, old_log_probs, advantages = actions[valid], old_log_probs[valid], advantages[valid]
        if not np.all(np.isfinite(advantages)) or not np.all(np.isfinite(old_log_probs)):
            raise TrainingAbort("[PPO] non-finite advantages or old log-probs",
                                diagnostics={"advantages": advantages.tolist()})

        surr_sum = ent_sum = loss_sum = 0.0
        for _ in range(self.cfg.epochs):
            for i, (policy, opt) in enumerate(zip(self.policies, self.opts)):
                objective, surr, ent = surrogate(policy, obs, actions[:, i], old_log_probs[:, i],
                                                 advantages[:, i], self.cfg.clip, self.cfg.entropy_coef)
                loss = -objective
                if not math.isfinite(float(loss)):
                    logging.error(f"[PPO] non-finite surrogate for agent {i}")
                    raise TrainingAbort(f"[PPO] non-finite surrogate for agent {i}",
                                        diagnostics={"agent": i, "surrogate": float(surr),
                                                     "entropy": float(ent)})
                opt.zero_grad()
                loss.backward()
                opt.step()
                surr_sum += float(surr)
                ent_sum += float(ent)
                loss_sum += float(loss)

        k = self.cfg.epochs * len(self.policies)
        return PpoReport(surr_sum / k, ent_sum / k, loss_sum / k, rows)


def ppo_actor_update(policies, obs, actions, old_log_probs, advantages, cfg: PpoConfig,
                     valid=None) -> PpoReport:
    return PpoUpdater(policies, cfg).update(obs, actions, old_log_probs, advantages, valid)
