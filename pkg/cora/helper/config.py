import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..envs.registry import spec_from_dict, spec_to_dict
from ..errors import ArgumentError, ConfigError
from .schema import fill_section

CONFIG_VERSION = 1

SEED_ROLES = ("env", "policy", "critic", "sampling", "mc", "rollout", "eval", "bench", "theory")

# ─────────────────────────────────────────────────────────────────────────────
# Training schema. Entries defaulting to None take the per-environment value.
# ─────────────────────────────────────────────────────────────────────────────

TRAIN_SCHEMA = {
    "algorithm":      (["cora", "cora_no_std", "shared"], {"default": "cora",
                       "tooltip": "cora = regularized least core, cora_no_std = plain least core, shared = every agent gets A_N"}),
    "critic":         (["mlp", "quadratic"], {"default": "mlp"}),
    "sampling":       (["all_proper", "fixed_count", "theorem5"], {"default": "fixed_count"}),
    "coalitions":     ("INT",   {"default": -1, "min": -1, "max": 2**20, "step": 1,
                       "tooltip": "Coalitions per timestep, -1 = 2^(n-1) - 1"}),
    "delta":          ("FLOAT", {"default": 0.3, "min": 1e-6, "max": 0.999999, "step": 0.01}),
    "Delta":          ("FLOAT", {"default": 0.1, "min": 1e-6, "max": 0.999999, "step": 0.01}),
    "lambda_reg":     ("FLOAT", {"default": 1e-2, "min": 0.0, "max": 1e6, "step": 1e-3}),
    "mc_samples":     ("INT",   {"default": None, "min": 1, "max": 10**6, "step": 1}),
    "exact_limit":    ("INT",   {"default": 4096, "min": 0, "max": 10**7, "step": 1}),
    "clip":           ("FLOAT", {"default": None, "min": 1e-6, "max": 0.999999, "step": 0.01}),
    "entropy_coef":   ("FLOAT", {"default": None, "min": 0.0, "max": 10.0, "step": 1e-4}),
    "epochs":         ("INT",   {"default": 10, "min": 1, "max": 1000, "step": 1}),
    "actor_lr":       ("FLOAT", {"default": None, "min": 0.0, "max": 1.0, "step": 1e-5}),
    "critic_lr":      ("FLOAT", {"default": None, "min": 0.0, "max": 1.0, "step": 1e-5}),
    "critic_epochs":  ("INT",   {"default": 10, "min": 1, "max": 1000, "step": 1}),
    "gamma":          ("FLOAT", {"default": 0.99, "min": 0.0, "max": 0.999999, "step": 0.01}),
    "gae_lambda":     ("FLOAT", {"default": 0.95, "min": 0.0, "max": 1.0, "step": 0.01}),
    "total_steps":    ("INT",   {"default": 200_000, "min": 0, "max": 10**9, "step": 1}),
    "eval_every":     ("INT",   {"default": 2_000, "min": 1, "max": 10**9, "step": 1}),
    "eval_episodes":  ("INT",   {"default": 4, "min": 1, "max": 10**6, "step": 1}),
    "n_envs":         ("INT",   {"default": None, "min": 1, "max": 4096, "step": 1}),
    "hidden":         ("INT_LIST", {"default": [64, 64], "min": 1, "max": 4096}),
    "normalize_advantages": ("BOOLEAN", {"default": False}),
    "seed":           ("INT",   {"default": 0, "min": 0, "max": 2**63 - 1, "step": 1}),
    "threads":        ("INT",   {"default": 1, "min": 1, "max": 1024, "step": 1}),
    "qp_workers":     ("INT",   {"default": 1, "min": 1, "max": 1024, "step": 1}),
}

ENV_DEFAULTS = {
    "matrix": {"actor_lr": 5e-4, "critic_lr": 5e-3, "clip": 0.3, "entropy_coef": 1e-3,
               "mc_samples": 16, "n_envs": 4},
    "differential": {"actor_lr": 5e-5, "critic_lr": 5e-4, "clip": 0.2, "entropy_coef": 1e-4,
                     "mc_samples": 16, "n_envs": 4},
}


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "cora"
    critic: str = "mlp"
    sampling: str = "fixed_count"
    coalitions: int = -1
    delta: float = 0.3
    Delta: float = 0.1
    lambda_reg: float = 1e-2
    mc_samples: int = 16
    exact_limit: int = 4096
    clip: float = 0.3
    entropy_coef: float = 1e-3
    epochs: int = 10
    actor_lr: float = 5e-4
    critic_lr: float = 5e-3
    critic_epochs: int = 10
    gamma: float = 0.99
    gae_lambda: float = 0.95
    total_steps: int = 200_000
    eval_every: int = 2_000
    eval_episodes: int = 4
    n_envs: int = 4
    hidden: tuple[int, ...] = field(default=(64, 64))
    normalize_advantages: bool = False
    seed: int = 0
    threads: int = 1
    qp_workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.algorithm == "cora" and not self.lambda_reg > 0:
            raise ConfigError("lambda_reg", "must be > 0 for algorithm 'cora' (use 'cora_no_std' for 0)")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


def read_json(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise ArgumentError(f"[Config] cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ArgumentError(f"[Config] {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ArgumentError(f"[Config] {path} must hold a JSON object")
    return data


def config_from_dict(data: dict):
    """(TrainConfig, env spec) from a config document, defaults filled."""
    data = dict(data)
    version = data.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported config version {version}, expected {CONFIG_VERSION}")
    env_doc = data.pop("env", {})
    if not isinstance(env_doc, dict):
        raise ConfigError("env", "expected a JSON object")
    try:
        spec = spec_from_dict(env_doc)
    except ConfigError:
        raise
    except ArgumentError as e:
        raise ConfigError("env", str(e)) from e

    values = fill_section(TRAIN_SCHEMA, data)
    for key, default in ENV_DEFAULTS[spec.kind].items():
        if values[key] is None:
            values[key] = default
    return TrainConfig(**values), spec


def parse_config(path):
    return config_from_dict(read_json(path))


def config_to_dict(cfg: TrainConfig, spec) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return {"version": CONFIG_VERSION, "env": spec_to_dict(spec), **d}


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_digest(cfg: TrainConfig, spec) -> str:
    return hashlib.sha256(canonical_json(config_to_dict(cfg, spec)).encode()).hexdigest()


def derive_seed(master: int, role: str) -> int:
    """Independent 63-bit seed per subsystem, from the master seed and a role tag."""
    h = hashlib.sha256(f"{int(master)}:{role}".encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1
