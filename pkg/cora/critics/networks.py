import numpy as np
import torch
import torch.nn as nn
from dataclasses import dataclass

from ..errors import ArgumentError

DTYPE = torch.float64
DEFAULT_HIDDEN = (64, 64)


# ─────────────────────────────────────────────────────────────────────────────
# Action encoding: discrete actions become concatenated one-hots,
# continuous actions pass through (one coordinate per agent)
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ActionEncoder:
    kind: str
    sizes: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise ArgumentError(f"[Encoder] unknown action kind '{self.kind}'")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @classmethod
    def discrete(cls, sizes) -> "ActionEncoder":
        return cls("discrete", tuple(sizes))

    @classmethod
    def continuous(cls, n_agents: int) -> "ActionEncoder":
        return cls("continuous", (1,) * n_agents)

    @property
    def n_agents(self) -> int:
        return len(self.sizes)

    @property
    def dim(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(int)

    def encode(self, actions) -> torch.Tensor:
        """(..., n) joint actions -> (..., dim) float64 features."""
        a = torch.as_tensor(np.asarray(actions))
        if a.shape[-1] != self.n_agents:
            raise ArgumentError(f"[Encoder] joint action has {a.shape[-1]} entries, expected {self.n_agents}")
        if self.kind == "continuous":
            return a.to(DTYPE)
        a = a.long()
        sizes = torch.tensor(self.sizes)
        if torch.any(a < 0) or torch.any(a >= sizes):
            raise ArgumentError("[Encoder] discrete action out of range")
        parts = [nn.functional.one_hot(a[..., i], s).to(DTYPE) for i, s in enumerate(self.sizes)]
        return torch.cat(parts, dim=-1)


# ─────────────────────────────────────────────────────────────────────────────
# Perceptron with tanh hidden layers, orthogonal init (gain 1 hidden, 0.01 out)
# ─────────────────────────────────────────────────────────────────────────────

class MLP(nn.Module):
    def __init__(self, in_dim: int, out_dim: int, hidden=DEFAULT_HIDDEN, bias: bool = True,
                 out_gain: float = 0.01, seed: int | None = None):
        super().__init__()
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.bias = bool(bias)
        self.out_gain = float(out_gain)

        widths = (self.in_dim,) + self.hidden
        layers = []
        for a, b in zip(widths[:-1], widths[1:]):
            layers += [nn.Linear(a, b, bias=self.bias, dtype=DTYPE), nn.Tanh()]
        layers.append(nn.Linear(widths[-1], self.out_dim, bias=self.bias, dtype=DTYPE))
        self.net = nn.Sequential(*layers)

        with torch.random.fork_rng(devices=[]):
            if seed is not None:
                torch.manual_seed(int(seed) % 2**63)
            linears = [m for m in self.net if isinstance(m, nn.Linear)]
            for k, lin in enumerate(linears):
                gain = self.out_gain if k == len(linears) - 1 else 1.0
                nn.init.orthogonal_(lin.weight, gain=gain)
                if lin.bias is not None:
                    nn.init.zeros_(lin.bias)

    def arch(self) -> dict:
        return {"type": "mlp", "in_dim": self.in_dim, "out_dim": self.out_dim,
                "hidden": list(self.hidden), "bias": self.bias}

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.as_tensor(x, dtype=DTYPE)
        if x.shape[-1] != self.in_dim:
            raise ArgumentError(f"[MLP] input has {x.shape[-1]} features, expected {self.in_dim}")
        return self.net(x)


class ValueCritic(nn.Module):
    def __init__(self, state_dim: int, hidden=DEFAULT_HIDDEN, bias: bool = True, seed: int | None = None):
        super().__init__()
        self.body = MLP(state_dim, 1, hidden, bias=bias, seed=seed)

    def arch(self) -> dict:
        return {"type": "value", **self.body.arch()}

    def forward(self, states) -> torch.Tensor:
        return self.body(states).squeeze(-1)


class TwinQCritic(nn.Module):
    """Two independently initialized Q(s, a) perceptrons over state and joint-action features."""

    def __init__(self, state_dim: int, encoder: ActionEncoder, hidden=DEFAULT_HIDDEN,
                 bias: bool = True, seed: int | None = None):
        super().__init__()
        self.encoder = encoder
        self.state_dim = int(state_dim)
        base = 0 if seed is None else int(seed)
        self.heads = nn.ModuleList([
            MLP(state_dim + encoder.dim, 1, hidden, bias=bias, seed=base),
            MLP(state_dim + encoder.dim, 1, hidden, bias=bias, seed=base + 1),
        ])

    def arch(self) -> dict:
        return {"type": "twin_q", "state_dim": self.state_dim, "action_kind": self.encoder.kind,
                "action_sizes": list(self.encoder.sizes), "hidden": list(self.heads[0].hidden),
                "bias": self.heads[0].bias}

    def forward(self, states, action_features) -> tuple[torch.Tensor, torch.Tensor]:
        states = torch.as_tensor(states, dtype=DTYPE)
        action_features = torch.as_tensor(action_features, dtype=DTYPE)
        lead = torch.broadcast_shapes(states.shape[:-1], action_features.shape[:-1])
        states = states.expand(*lead, states.shape[-1])
        action_features = action_features.expand(*lead, action_features.shape[-1])
        x = torch.cat([states, action_features], dim=-1)
        return self.heads[0](x).squeeze(-1), self.heads[1](x).squeeze(-1)


@dataclass
class Transitions:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __post_init__(self):
        b = len(self.rewards)
        if b == 0:
            raise ArgumentError("[Transitions] empty batch")
        for name in ("states", "actions", "next_states", "dones"):
            if len(getattr(self, name)) != b:
                raise ArgumentError(f"[Transitions] '{name}' has {len(getattr(self, name))} rows, expected {b}")


def predict_v(critic: ValueCritic, state) -> float:
    with torch.no_grad():
        return float(critic(torch.as_tensor(state, dtype=DTYPE)))


def predict_q_clipped(critic, state, joint_action) -> float:
    with torch.no_grad():
        q1, q2 = critic(torch.as_tensor(state, dtype=DTYPE), critic.encoder.encode(joint_action))
    return float(torch.minimum(q1, q2))
