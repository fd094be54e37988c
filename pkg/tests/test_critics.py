import numpy as np
import pytest
import torch

from cora.core.coalition import Coalition
from cora.critics.advantage import (CriticUpdater, GaeConfig, coalition_advantages, coalition_values,
                                    estimate_coalitional_advantage, gae_advantages, update_critics)
from cora.critics.networks import (DTYPE, MLP, ActionEncoder, Transitions, TwinQCritic, ValueCritic,
                                   predict_q_clipped, predict_v)
from cora.critics.quadratic import QuadraticCritic, TwinQuadraticCritic, marginalize_quadratic
from cora.errors import ArgumentError, TrainingAbort, UnsupportedError
from cora.policy.policies import CategoricalPolicy

from .helpers import lopsided_pair_quadratic, uniform_policies


def test_encoder_one_hot():
    enc = ActionEncoder.discrete((2, 3))
    feats = enc.encode(np.array([[1, 2], [0, 0]]))
    expected = torch.tensor([[0, 1, 0, 0, 1], [1, 0, 1, 0, 0]], dtype=DTYPE)
    assert torch.equal(feats, expected)
    np.testing.assert_array_equal(enc.offsets, [0, 2])


def test_encoder_range_checked():
    with pytest.raises(ArgumentError):
        ActionEncoder.discrete((2, 2)).encode(np.array([0, 2]))


def test_mlp_seed_reproducible():
    a = MLP(3, 2, (8,), seed=5)
    b = MLP(3, 2, (8,), seed=5)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_value_critic_scalar():
    v = ValueCritic(4, (8,), seed=0)
    assert isinstance(predict_v(v, np.ones(4)), float)
    assert v(torch.zeros(5, 4, dtype=DTYPE)).shape == (5,)


def test_clipped_q_is_the_smaller_head():
    enc = ActionEncoder.discrete((3, 3))
    q = TwinQCritic(2, enc, (16,), seed=1)
    s = np.array([0.3, -0.2])
    a = np.array([1, 2])
    q1, q2 = q(torch.as_tensor(s, dtype=DTYPE), enc.encode(a))
    assert predict_q_clipped(q, s, a) == pytest.approx(min(float(q1), float(q2)))


def test_enumeration_matches_hand_expectation():
    enc = ActionEncoder.discrete((2, 3))
    q = TwinQCritic(1, enc, (8,), seed=2)
    policies = [CategoricalPolicy(1, 2, (4,), seed=3), CategoricalPolicy(1, 3, (4,), seed=4)]
    s = np.ones(1)
    probs = policies[1].probs_numpy(s)
    vals = coalition_values(q, s, np.array([1, 0]), [Coalition(0b01, 2)], policies)
    with torch.no_grad():
        feats = enc.encode(np.array([[1, 0], [1, 1], [1, 2]]))
        q1, q2 = q(torch.as_tensor(s, dtype=DTYPE), feats)
    np.testing.assert_allclose(vals[:, 0], [probs @ q1.numpy(), probs @ q2.numpy()], atol=1e-12)


def test_monte_carlo_converges_to_enumeration():
    enc = ActionEncoder.discrete((3, 3, 3))
    q = TwinQCritic(1, enc, (8,), seed=7)
    policies = [CategoricalPolicy(1, 3, (4,), seed=k) for k in range(3)]
    s = np.ones(1)
    a = np.array([0, 1, 2])
    c = [Coalition(0b001, 3)]
    exact = coalition_advantages(q, 0.0, s, a, c, policies)[0]
    sampled = coalition_advantages(q, 0.0, s, a, c, policies, K=20000,
                                   rng=np.random.default_rng(0), exact_limit=0)[0]
    assert sampled == pytest.approx(exact, abs=5e-3)


def test_grand_coalition_mask_is_plain_q():
    enc = ActionEncoder.discrete((2, 2))
    q = TwinQCritic(1, enc, (4,), seed=0)
    policies = uniform_policies(2, 2)
    s, a = np.ones(1), np.array([1, 0])
    adv = estimate_coalitional_advantage(q, 0.25, s, 0b11, a, policies)
    assert adv == pytest.approx(predict_q_clipped(q, s, a) - 0.25)


def test_empty_coalition_rejected():
    enc = ActionEncoder.discrete((2, 2))
    q = TwinQCritic(1, enc, (4,), seed=0)
    with pytest.raises(ArgumentError):
        estimate_coalitional_advantage(q, 0.0, np.ones(1), 0, np.array([0, 0]), uniform_policies(2, 2))


# ─────────────────────────────────────────────────────────────────────────────
# Quadratic critic
# ─────────────────────────────────────────────────────────────────────────────

def test_quadratic_reproduces_payoff_table():
    q = lopsided_pair_quadratic()
    payoff = np.array([[-5.0, 15.0], [-5.0, -5.0]])
    for a0 in range(2):
        for a1 in range(2):
            assert predict_q_clipped(q, np.ones(1), np.array([a0, a1])) == pytest.approx(payoff[a0, a1])


def test_quadratic_marginal_is_exact():
    enc = ActionEncoder.discrete((2, 3, 2))
    critic = QuadraticCritic(2, enc, (8,), seed=9)
    s = np.array([0.5, -1.0])
    probs = [np.array([0.3, 0.7]), np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.4])]
    a = np.array([1, 2, 0])
    exact = 0.0
    with torch.no_grad():
        for a1 in range(3):
            for a2 in range(2):
                joint = np.array([a[0], a1, a2])
                exact += probs[1][a1] * probs[2][a2] * float(critic(torch.as_tensor(s, dtype=DTYPE), enc.encode(joint)))
    assert marginalize_quadratic(critic, s, Coalition(0b001, 3), a, probs) == pytest.approx(exact, abs=1e-12)


def test_quadratic_rejects_continuous():
    with pytest.raises(UnsupportedError):
        QuadraticCritic(1, ActionEncoder.continuous(2))


def test_quadratic_coalition_values_lopsided_pair():
    q = lopsided_pair_quadratic()
    vals = coalition_values(q, np.ones(1), np.array([0, 0]), [0b01, 0b10], uniform_policies(2, 2))
    np.testing.assert_allclose(vals, [[5.0, -5.0], [5.0, -5.0]], atol=1e-12)


# ─────────────────────────────────────────────────────────────────────────────
# GAE
# ─────────────────────────────────────────────────────────────────────────────

def _gae_reference(r, v, boot, gamma, lam, dones):
    adv = np.zeros(len(r))
    for t in range(len(r)):
        acc, disc = 0.0, 1.0
        for k in range(t, len(r)):
            nv = boot if k == len(r) - 1 else v[k + 1]
            delta = r[k] + gamma * nv * (1 - dones[k]) - v[k]
            acc += disc * delta
            if dones[k]:
                break
            disc *= gamma * lam
        adv[t] = acc
    return adv


def test_gae_matches_direct_sum():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=12), rng.normal(size=12)
    dones = np.zeros(12)
    dones[4] = 1
    adv = gae_advantages(r, v, 0.7, GaeConfig(0.9, 0.8), dones)
    np.testing.assert_allclose(adv, _gae_reference(r, v, 0.7, 0.9, 0.8, dones), atol=1e-12)


def test_gae_lambda_zero_is_td_error():
    r, v = np.array([1.0, 2.0]), np.array([0.5, 0.25])
    adv = gae_advantages(r, v, 1.0, GaeConfig(0.5, 0.0), np.zeros(2))
    np.testing.assert_allclose(adv, [1.0 + 0.5 * 0.25 - 0.5, 2.0 + 0.5 * 1.0 - 0.25])


def test_gae_parallel_columns():
    rng = np.random.default_rng(1)
    r, v = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    boot = rng.normal(size=3)
    dones = np.zeros((6, 3))
    adv = gae_advantages(r, v, boot, GaeConfig(), dones)
    for e in range(3):
        np.testing.assert_allclose(adv[:, e], gae_advantages(r[:, e], v[:, e], boot[e], GaeConfig(), dones[:, e]))


def test_gae_shape_mismatch():
    with pytest.raises(ArgumentError):
        gae_advantages(np.zeros(3), np.zeros(2), 0.0, GaeConfig(), np.zeros(3))


# ─────────────────────────────────────────────────────────────────────────────
# Critic regression
# ─────────────────────────────────────────────────────────────────────────────

def _transitions(enc, rng, b=8):
    actions = rng.integers(0, 2, size=(b, 2))
    return Transitions(states=rng.normal(size=(b, 1)), actions=enc.encode(actions).numpy(),
                       rewards=rng.normal(size=b), next_states=rng.normal(size=(b, 1)),
                       dones=np.zeros(b))


def test_sgd_step_matches_hand_gradient():
    enc = ActionEncoder.discrete((2, 2))
    v = ValueCritic(1, (), seed=0)
    q = TwinQCritic(1, enc, (4,), seed=1)
    tr = _transitions(enc, np.random.default_rng(0))
    lr = 0.1
    s = torch.as_tensor(tr.states, dtype=DTYPE)
    s2 = torch.as_tensor(tr.next_states, dtype=DTYPE)
    w, b = v.body.net[0].weight.detach().clone(), v.body.net[0].bias.detach().clone()
    y = torch.as_tensor(tr.rewards, dtype=DTYPE) + 0.9 * (s2 @ w.T + b).squeeze(-1)
    err = (s @ w.T + b).squeeze(-1) - y
    grad_w = 2 * torch.mean(err[:, None] * s, dim=0)
    update_critics(v, q, tr, lr, lr, 0.9)
    torch.testing.assert_close(v.body.net[0].weight.detach(), w - lr * grad_w[None, :])


def test_critic_losses_decrease():
    enc = ActionEncoder.discrete((2, 2))
    v = ValueCritic(1, (16,), seed=0)
    q = TwinQCritic(1, enc, (16,), seed=1)
    tr = _transitions(enc, np.random.default_rng(3), b=32)
    upd = CriticUpdater(v, q, 1e-2, 1e-2, 0.0)
    first = upd.step(tr)
    for _ in range(200):
        last = upd.step(tr)
    assert last.q1_loss < first.q1_loss
    assert last.v_loss < first.v_loss


def test_non_finite_loss_aborts():
    enc = ActionEncoder.discrete((2, 2))
    tr = _transitions(enc, np.random.default_rng(0))
    tr.rewards[0] = np.nan
    upd = CriticUpdater(ValueCritic(1, (4,)), TwinQCritic(1, enc, (4,)), 1e-3, 1e-3, 0.9)
    with pytest.raises(TrainingAbort):
        upd.step(tr)


def test_twin_q_gradcheck():
    enc = ActionEncoder.discrete((2, 2))
    q = TwinQCritic(1, enc, (3,), seed=0)
    s = torch.randn(4, 1, dtype=DTYPE, requires_grad=True)
    a = enc.encode(np.array([[0, 1], [1, 1], [0, 0], [1, 0]]))
    assert torch.autograd.gradcheck(lambda x: q(x, a)[0], (s,))


def test_value_critic_default_has_two_hidden_layers_of_64():
    widths = [m.out_features for m in ValueCritic(3).modules() if isinstance(m, torch.nn.Linear)]
    assert widths == [64, 64, 1]
