import numpy as np
import torch
import torch.nn as nn

from ..errors import ArgumentError, UnsupportedError
from .networks import DTYPE, DEFAULT_HIDDEN, MLP, ActionEncoder

# ─────────────────────────────────────────────────────────────────────────────
# State-dependent quadratic critic
#
#   Q(s, a) = b(s) + Σ_i ⟨u_i(s), x_i⟩ + Σ_{i<j} x_iᵀ W_ij(s) x_j
#
# x_i is agent i's one-hot action. Q is multilinear in (x_1..x_n), so the
# expectation over independent policies is Q evaluated at the mean encodings.
# ─────────────────────────────────────────────────────────────────────────────


def _mask_of(coalition, n: int) -> int:
    mask = coalition if isinstance(coalition, (int, np.integer)) else coalition.mask
    mask = int(mask)
    if mask == 0:
        raise ArgumentError("[Coalition] empty coalition")
    if not 0 < mask < (1 << n):
        raise ArgumentError(f"[Coalition] mask {mask} out of range for n={n}")
    return mask


class QuadraticCritic(nn.Module):
    def __init__(self, state_dim: int, encoder: ActionEncoder, hidden=DEFAULT_HIDDEN,
                 bias: bool = True, seed: int | None = None):
        super().__init__()
        if encoder.kind != "discrete":
            raise UnsupportedError("[QuadraticCritic] only discrete action games are supported")
        self.encoder = encoder
        self.state_dim = int(state_dim)
        sizes = encoder.sizes
        n = len(sizes)
        self.pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        out_dim = 1 + sum(sizes) + sum(sizes[i] * sizes[j] for i, j in self.pairs)
        self.body = MLP(state_dim, out_dim, hidden, bias=bias, seed=seed)

    def arch(self) -> dict:
        return {"type": "quadratic", "state_dim": self.state_dim,
                "action_sizes": list(self.encoder.sizes), "hidden": list(self.body.hidden),
                "bias": self.body.bias}

    def components(self, states):
        """b (...), u_i (..., k_i), W_ij (..., k_i, k_j) for every pair i < j."""
        out = self.body(states)
        sizes = self.encoder.sizes
        b = out[..., 0]
        pos = 1
        u = []
        for k in sizes:
            u.append(out[..., pos:pos + k])
            pos += k
        W = {}
        for i, j in self.pairs:
            span = sizes[i] * sizes[j]
            W[(i, j)] = out[..., pos:pos + span].reshape(*out.shape[:-1], sizes[i], sizes[j])
            pos += span
        return b, u, W

    def evaluate(self, states, per_agent) -> torch.Tensor:
        b, u, W = self.components(states)
        q = b
        for i, x in enumerate(per_agent):
            q = q + (u[i] * x).sum(-1)
        for (i, j), w in W.items():
            q = q + torch.einsum("...a,...ab,...b->...", per_agent[i], w, per_agent[j])
        return q

    def split(self, action_features) -> list[torch.Tensor]:
        return list(torch.split(action_features, list(self.encoder.sizes), dim=-1))

    def forward(self, states, action_features) -> torch.Tensor:
        states = torch.as_tensor(states, dtype=DTYPE)
        action_features = torch.as_tensor(action_features, dtype=DTYPE)
        lead = torch.broadcast_shapes(states.shape[:-1], action_features.shape[:-1])
        states = states.expand(*lead, states.shape[-1])
        action_features = action_features.expand(*lead, action_features.shape[-1])
        return self.evaluate(states, self.split(action_features))

    def marginal_features(self, coalition, joint_action, probs) -> torch.Tensor:
        """Concatenated encodings: one-hot for members, policy probabilities for the rest."""
        n = self.encoder.n_agents
        mask = _mask_of(coalition, n)
        a = np.asarray(joint_action)
        if a.shape != (n,):
            raise ArgumentError(f"[QuadraticCritic] joint action must have {n} entries")
        if not np.all(np.mod(a, 1) == 0):
            raise UnsupportedError("[QuadraticCritic] continuous actions cannot be marginalized")
        parts = []
        for i, k in enumerate(self.encoder.sizes):
            if mask >> i & 1:
                if not 0 <= int(a[i]) < k:
                    raise ArgumentError(f"[QuadraticCritic] action {a[i]} out of range for agent {i}")
                parts.append(nn.functional.one_hot(torch.tensor(int(a[i])), k).to(DTYPE))
            else:
                p = torch.as_tensor(np.asarray(probs[i], dtype=np.float64))
                if p.shape != (k,):
                    raise UnsupportedError(f"[QuadraticCritic] agent {i} needs a {k}-way action distribution")
                parts.append(p)
        return torch.cat(parts)


class TwinQuadraticCritic(nn.Module):
    def __init__(self, state_dim: int, encoder: ActionEncoder, hidden=DEFAULT_HIDDEN,
                 bias: bool = True, seed: int | None = None):
        super().__init__()
        base = 0 if seed is None else int(seed)
        self.encoder = encoder
        self.heads = nn.ModuleList([
            QuadraticCritic(state_dim, encoder, hidden, bias, seed=base),
            QuadraticCritic(state_dim, encoder, hidden, bias, seed=base + 1),
        ])

    def arch(self) -> dict:
        return {"type": "twin_quadratic", **{k: v for k, v in self.heads[0].arch().items() if k != "type"}}

    def forward(self, states, action_features) -> tuple[torch.Tensor, torch.Tensor]:
        return self.heads[0](states, action_features), self.heads[1](states, action_features)


def marginalize_quadratic(critic: QuadraticCritic, state, coalition, joint_action, probs) -> float:
    """
    E over non-members a_j ~ π_j of Q(s, a_C, a_rest), exact.

    ``probs[j]`` is agent j's action distribution at this state; entries for
    coalition members are ignored.
    """
    with torch.no_grad():
        x = critic.marginal_features(coalition, joint_action, probs)
        return float(critic(torch.as_tensor(state, dtype=DTYPE), x))
