import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import __version__
from ..core.coalition import SamplingPlan, default_count
from ..critics.advantage import CriticUpdater, GaeConfig, gae_advantages
from ..critics.networks import ActionEncoder, TwinQCritic, ValueCritic, Transitions
from ..critics.quadratic import TwinQuadraticCritic
from ..envs.registry import make_env, spec_digest, spec_from_dict, spec_to_dict
from ..errors import TrainingAbort
from ..helper.config import (TrainConfig, config_digest, config_from_dict, config_to_dict, derive_seed,
                             parse_config)
from ..helper.run_io import (CURVE_COLUMNS, DIAG_COLUMNS, RunManifest, ci95, dump_abort_batch,
                             emit_curve, load_checkpoint, restore_module, save_checkpoint, write_rows)
from ..policy.policies import make_policy, policy_from_arch
from ..policy.ppo import PpoConfig, PpoUpdater
from .credit import CreditConfig, _clear_stats, _get_solve_stats, assign_credits
from .rollout import collect_rollouts


def evaluate(policies, env_spec, episodes: int = 1) -> tuple[float, float, list[float]]:
    """Greedy episodes (argmax / mean actions): (mean return, 1.96 · stderr, returns)."""
    env = make_env(env_spec)
    returns = []
    for _ in range(episodes):
        obs = env.reset()
        total, done = 0.0, False
        while not done:
            joint = np.array([float(p.greedy(obs[None, :])[0]) for p in policies])
            result = env.step(joint)
            total += result.reward
            done = result.done
            obs = result.obs
        returns.append(total)
    return float(np.mean(returns)), ci95(returns), returns


@dataclass
class TrainResult:
    rows: list[dict]
    final_return: float
    out_dir: Path | None
    policies: list = field(default_factory=list)
    dropped_steps: int = 0


class Trainer:
    """collect → GAE → coalition credits → PPO actor epochs → critic regression."""

    def __init__(self, cfg: TrainConfig, env_spec, out_dir=None):
        self.cfg = cfg
        self.spec = env_spec
        self.out_dir = Path(out_dir) if out_dir is not None else None
        torch.set_num_threads(cfg.threads)

        self.envs = [make_env(env_spec) for _ in range(cfg.n_envs)]
        env = self.envs[0]
        self.n_agents = env.n_agents
        self.horizon = env.horizon
        obs_dim = env.obs_dim
        if env.kind == "discrete":
            self.encoder = ActionEncoder.discrete(env.action_sizes)
        else:
            self.encoder = ActionEncoder.continuous(env.n_agents)

        policy_seed = derive_seed(cfg.seed, "policy")
        self.policies = [make_policy(env.kind, obs_dim, env.action_sizes[i], cfg.hidden, seed=policy_seed + i)
                         for i in range(self.n_agents)]
        critic_seed = derive_seed(cfg.seed, "critic")
        self.v_critic = ValueCritic(obs_dim, cfg.hidden, seed=critic_seed)
        twin = TwinQuadraticCritic if cfg.critic == "quadratic" else TwinQCritic
        self.q_critic = twin(obs_dim, self.encoder, cfg.hidden, seed=critic_seed + 1)

        self.ppo = PpoUpdater(self.policies, PpoConfig(cfg.clip, cfg.entropy_coef, cfg.epochs, cfg.actor_lr))
        self.critic_updater = CriticUpdater(self.v_critic, self.q_critic, cfg.critic_lr, cfg.critic_lr, cfg.gamma)
        self.gae = GaeConfig(cfg.gamma, cfg.gae_lambda)

        count = cfg.coalitions if cfg.coalitions >= 0 else default_count(self.n_agents)
        plan = SamplingPlan(cfg.sampling, count, cfg.delta, cfg.Delta)
        self.credit_cfg = CreditConfig(cfg.algorithm, plan, cfg.lambda_reg, cfg.mc_samples,
                                       cfg.exact_limit, cfg.qp_workers, cfg.normalize_advantages)

        self.rollout_gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "rollout"))
        self.sampling_rng = np.random.default_rng(derive_seed(cfg.seed, "sampling"))
        self.run_key = config_digest(cfg, env_spec)
        self.step = 0

    # ─────────────────────────────────────────────────────────────────────
    def update(self) -> tuple[dict, dict]:
        cfg = self.cfg
        batch = collect_rollouts(self.envs, self.policies, self.v_critic, self.horizon, self.rollout_gen)
        self.step += batch.T * batch.E
        batch.advantages = gae_advantages(batch.rewards, batch.values, batch.bootstrap, self.gae, batch.dones)

        _clear_stats(self.run_key)
        try:
            assign_credits(batch, self.q_critic, self.policies, self.credit_cfg, self.sampling_rng, self.run_key)
            actor = self.ppo.update(batch.flat("obs"), batch.flat("raw_actions"), batch.flat("log_probs"),
                                    batch.flat("credits"), batch.flat("valid"))
            transitions = Transitions(batch.flat("obs"), self.encoder.encode(batch.flat("actions")).numpy(),
                                      batch.flat("rewards"), batch.flat("next_obs"),
                                      batch.flat("dones").astype(np.float64))
            for _ in range(cfg.critic_epochs):
                critic = self.critic_updater.step(transitions)
        except TrainingAbort as abort:
            if self.out_dir is not None:
                dump_abort_batch(self.out_dir, batch.to_dict(), {"step": self.step, **abort.diagnostics})
            raise

        stats = _get_solve_stats(self.run_key)
        valid = batch.valid
        eps = batch.epsilons[valid] if valid.any() else np.zeros(1)
        iters = batch.qp_iters[valid] if valid.any() else np.zeros(1)
        summary = {
            "actor_loss": actor.loss,
            "critic_loss": critic.total,
            "mean_epsilon": float(np.mean(eps)),
            "qp_iters_mean": float(np.mean(iters)),
        }
        diag = {
            "step": self.step, "updates": cfg.epochs, "rows": actor.updated_rows,
            "dropped_steps": stats.get("dropped", 0), "qp_retries": stats.get("retries", 0),
            "mean_epsilon": summary["mean_epsilon"], "max_epsilon": float(np.max(eps)),
            "qp_iters_mean": summary["qp_iters_mean"], "qp_iters_max": stats.get("max_iterations", 0),
            "qp_ms": stats.get("ms", 0.0), "v_loss": critic.v_loss, "q1_loss": critic.q1_loss,
            "q2_loss": critic.q2_loss, "entropy": actor.entropy,
        }
        return summary, diag

    def _eval_row(self, summary: dict | None) -> dict:
        mean, ci, _ = evaluate(self.policies, self.spec, self.cfg.eval_episodes)
        row = {"step": self.step, "eval_return_mean": mean, "eval_return_ci95": ci}
        row.update(summary or {})
        return row

    def run(self) -> TrainResult:
        cfg = self.cfg
        curve_path = diag_path = manifest = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            curve_path = self.out_dir / "curve.csv"
            diag_path = self.out_dir / "diag.csv"
            manifest = RunManifest(config_digest(cfg, self.spec), cfg.seed, __version__, spec_digest(self.spec))
            write_rows(diag_path, DIAG_COLUMNS, [])

        rows = [self._eval_row(None)]
        if curve_path is not None:
            emit_curve(curve_path, rows)
        logging.info(f"[Train] {cfg.algorithm} on {self.spec.kind}: step 0 return {rows[0]['eval_return_mean']:.3f}")

        dropped = 0
        next_eval = cfg.eval_every
        start = time.time()
        while self.step < cfg.total_steps:
            summary, diag = self.update()
            dropped += diag["dropped_steps"]
            if diag_path is not None:
                write_rows(diag_path, DIAG_COLUMNS, [diag], append=True)
            if self.step >= next_eval or self.step >= cfg.total_steps:
                while next_eval <= self.step:
                    next_eval += cfg.eval_every
                row = self._eval_row(summary)
                rows.append(row)
                if curve_path is not None:
                    emit_curve(curve_path, [row], append=True)
                logging.info(f"[Train] step {self.step}: return {row['eval_return_mean']:.3f} "
                             f"eps {summary['mean_epsilon']:.3f} ({time.time() - start:.1f}s)")

        if self.out_dir is not None:
            modules = {f"policy_{i}": p for i, p in enumerate(self.policies)}
            modules.update({"value": self.v_critic, "q": self.q_critic})
            save_checkpoint(self.out_dir / "checkpoint.json", self.step,
                            config_to_dict(cfg, self.spec), spec_to_dict(self.spec), modules)
            manifest.outputs = ["curve.csv", "diag.csv", "checkpoint.json"]
            manifest.finished = time.time()
            manifest.write(self.out_dir)
        if dropped:
            logging.warning(f"[Train] {dropped} timesteps dropped after QP max_iter")
        return TrainResult(rows, rows[-1]["eval_return_mean"], self.out_dir, self.policies, dropped)


def train(cfg: TrainConfig, env_spec, out_dir=None) -> TrainResult:
    return Trainer(cfg, env_spec, out_dir).run()


def load_policies(checkpoint: dict) -> list:
    names = sorted((k for k in checkpoint["modules"] if k.startswith("policy_")),
                   key=lambda k: int(k.split("_")[1]))
    return [restore_module(policy_from_arch(checkpoint["modules"][k]["arch"]), checkpoint["modules"][k])
            for k in names]


def _csv(row: dict, columns) -> str:
    def cell(v):
        return "" if v is None else (repr(float(v)) if isinstance(v, float) else str(v))
    return ",".join(columns) + "\n" + ",".join(cell(row.get(c)) for c in columns) + "\n"


class TrainC:
    @classmethod
    def INPUT_TYPES(cls):
        return {
            "optional": {
                "config": ("PATH", {"default": "", "tooltip": "JSON config; omitted = all defaults"}),
            },
            "hidden": {"seed": "SEED", "out_dir": "OUT_DIR", "threads": "THREADS"},
        }

    RETURN_TYPES = ("CSV",)
    FUNCTION     = "execute"
    CATEGORY     = "cora/trainer"

    def execute(self, config="", seed=None, out_dir=None, threads=None):
        cfg, spec = parse_config(config) if config else config_from_dict({})
        if seed is not None:
            cfg = cfg.replace(seed=seed)
        if threads is not None:
            cfg = cfg.replace(threads=threads)
        out_dir = out_dir or f"runs/{config_digest(cfg, spec)[:12]}"
        result = train(cfg, spec, out_dir)
        return (_csv(result.rows[-1], CURVE_COLUMNS),)


class EvalC:
    @classmethod
    def INPUT_TYPES(cls):
        return {
            "required": {
                "checkpoint": ("PATH", {"tooltip": "checkpoint.json written by train"}),
            },
            "optional": {
                "episodes": ("INT", {"default": 10, "min": 1, "max": 10**6, "step": 1}),
            },
        }

    RETURN_TYPES = ("CSV",)
    FUNCTION     = "execute"
    CATEGORY     = "cora/trainer"

    def execute(self, checkpoint, episodes=10):
        doc = load_checkpoint(checkpoint)
        spec = spec_from_dict(doc["env"])
        policies = load_policies(doc)
        mean, ci, _ = evaluate(policies, spec, episodes)
        oracle = make_env(spec).oracle_optimal_return()
        row = {"step": doc["step"], "episodes": episodes, "eval_return_mean": mean,
               "eval_return_ci95": ci, "oracle_optimal_return": oracle}
        logging.info(f"[Eval] {checkpoint}: {mean:.3f} of oracle {oracle:.3f}")
        return (_csv(row, ("step", "episodes", "eval_return_mean", "eval_return_ci95", "oracle_optimal_return")),)


COMMAND_CLASS_MAPPINGS = {
    "train": TrainC,
    "eval": EvalC,
}

COMMAND_DISPLAY_NAME_MAPPINGS = {
    "train": "Train CORA-PPO / baselines",
    "eval": "Evaluate a checkpoint",
}
