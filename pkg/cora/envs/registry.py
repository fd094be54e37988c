import hashlib
import json
import logging

from ..errors import ArgumentError
from .differential_game import DiffGameSpec, DifferentialGame
from .matrix_game import MatrixGame, MatrixGameSpec

# ─────────────────────────────────────────────────────────────────────────────
# Env spec JSON
#   matrix:        {"kind": "matrix", "n_agents", "n_actions", "horizon",
#                   "variant": "base" | "multipeak", "peaks", "seed"}
#   differential:  {"kind": "differential", "n_agents", "n_fields", "seed"}
# ─────────────────────────────────────────────────────────────────────────────

_SPEC_TYPES = {
    "matrix": MatrixGameSpec,
    "differential": DiffGameSpec,
}

_ENV_TYPES = {
    "matrix": MatrixGame,
    "differential": DifferentialGame,
}

_SPEC_KEYS = {
    "matrix": ("n_agents", "n_actions", "horizon", "variant", "peaks", "seed"),
    "differential": ("n_agents", "n_fields", "seed"),
}


def spec_to_dict(spec) -> dict:
    return {"kind": spec.kind, **{k: getattr(spec, k) for k in _SPEC_KEYS[spec.kind]}}


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", "matrix")
    if kind not in _SPEC_TYPES:
        raise ArgumentError(f"[EnvSpec] unknown env kind '{kind}', expected one of {tuple(_SPEC_TYPES)}")
    unknown = set(d) - set(_SPEC_KEYS[kind])
    if unknown:
        raise ArgumentError(f"[EnvSpec] unknown keys for '{kind}': {sorted(unknown)}")
    try:
        return _SPEC_TYPES[kind](**d)
    except TypeError as e:
        raise ArgumentError(f"[EnvSpec] {e}") from e


def spec_digest(spec) -> str:
    blob = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def make_env(spec):
    return _ENV_TYPES[spec.kind](spec)


def oracle_optimal_return(spec) -> float:
    return make_env(spec).oracle_optimal_return()


class EnvInspectC:
    @classmethod
    def INPUT_TYPES(cls):
        return {
            "optional": {
                "env_file": ("PATH", {"default": "", "tooltip": "JSON env spec; omitted = base matrix game"}),
                "kind": (["matrix", "differential"], {"default": "matrix"}),
                "n_agents": ("INT", {"default": 2, "min": 2, "max": 20, "step": 1}),
                "n_actions": ("INT", {"default": 5, "min": 2, "max": 1000, "step": 1}),
                "horizon": ("INT", {"default": 10, "min": 1, "max": 10000, "step": 1}),
                "variant": (["base", "multipeak"], {"default": "base"}),
                "peaks": ("INT", {"default": 10, "min": 1, "max": 10**7, "step": 1}),
                "n_fields": ("INT", {"default": 5, "min": 1, "max": 1000, "step": 1}),
            },
            "hidden": {"seed": "SEED"},
        }

    RETURN_TYPES = ("CSV",)
    FUNCTION     = "execute"
    CATEGORY     = "cora/envs"

    def execute(self, env_file="", kind="matrix", n_agents=2, n_actions=5, horizon=10,
                variant="base", peaks=10, n_fields=5, seed=0):
        seed = seed or 0
        if env_file:
            from ..helper.config import read_json
            spec = spec_from_dict(read_json(env_file))
        elif kind == "matrix":
            spec = MatrixGameSpec(n_agents, n_actions, horizon, variant, peaks, seed)
        else:
            spec = DiffGameSpec(n_agents, n_fields, seed)

        env = make_env(spec)
        lines = ["key,value", f"digest,{spec_digest(spec)}"]
        lines += [f"{k},{v}" for k, v in spec_to_dict(spec).items()]
        if spec.kind == "differential":
            value, argmax = env.oracle_optimum()
            lines.append(f"oracle_optimal_return,{value!r}")
            lines.append("oracle_argmax," + ";".join(repr(float(x)) for x in argmax))
        else:
            lines.append(f"oracle_optimal_return,{env.oracle_optimal_return()!r}")
        logging.info(f"[EnvInspect] {spec.kind} spec {spec_digest(spec)[:12]}")
        return ("\n".join(lines) + "\n",)


COMMAND_CLASS_MAPPINGS = {
    "env-inspect": EnvInspectC,
}

COMMAND_DISPLAY_NAME_MAPPINGS = {
    "env-inspect": "Inspect environment spec and oracle",
}
