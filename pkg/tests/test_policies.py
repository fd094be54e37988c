import math

import numpy as np
import pytest
import torch

from cora.critics.networks import DTYPE
from cora.errors import ArgumentError, TrainingAbort
from cora.policy.policies import (CategoricalPolicy, GaussianPolicy, entropy, gaussian_entropy, log_prob,
                                  make_policy, policy_from_arch, sample_action)
from cora.policy.ppo import PpoConfig, PpoUpdater, ppo_actor_update, surrogate

from .helpers import uniform_policies


def test_categorical_sampling_frequencies():
    policy = CategoricalPolicy(2, 3, (8,), seed=0)
    obs = np.tile([0.5, -0.5], (20000, 1))
    gen = torch.Generator().manual_seed(1)
    actions, _, _ = policy.sample(obs, gen)
    freq = np.bincount(actions.numpy(), minlength=3) / len(actions)
    np.testing.assert_allclose(freq, policy.probs_numpy([0.5, -0.5]), atol=0.02)


def test_categorical_rejects_bad_actions():
    policy = CategoricalPolicy(1, 3)
    with pytest.raises(ArgumentError):
        policy.log_prob(np.ones(1), 3)
    with pytest.raises(ArgumentError):
        policy.log_prob(np.ones(1), 1.5)


def test_uniform_log_prob():
    (policy,) = uniform_policies(1, 4)
    assert log_prob(policy, np.ones(1), 2) == pytest.approx(-math.log(4))
    assert entropy(policy, np.ones(1)) == pytest.approx(math.log(4))


def test_sample_action_is_deterministic():
    policy = CategoricalPolicy(1, 5, (4,), seed=2)
    assert sample_action(policy, np.ones(1), 9) == sample_action(policy, np.ones(1), 9)


def test_gaussian_clamps_but_scores_raw():
    policy = GaussianPolicy(1, 1, (), seed=0, log_std_init=math.log(20.0))
    gen = torch.Generator().manual_seed(0)
    action, raw, lp = policy.sample(np.ones((500, 1)), gen)
    assert torch.all(action <= 5.0) and torch.all(action >= -5.0)
    assert torch.any(raw.abs() > 5.0)
    torch.testing.assert_close(lp, policy.log_prob(np.ones((500, 1)), raw.numpy()).detach())


def test_gaussian_log_prob_matches_normal_density():
    policy = GaussianPolicy(1, 1, (), bias=False, log_std_init=0.0)
    with torch.no_grad():
        policy.mean_net.net[0].weight.zero_()
    assert log_prob(policy, np.ones(1), 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5)


def test_gaussian_rejects_nan_action():
    with pytest.raises(ArgumentError):
        GaussianPolicy(1).log_prob(np.ones(1), float("nan"))


def test_gaussian_entropy_formula():
    policy = GaussianPolicy(1, 1, log_std_init=0.3)
    assert entropy(policy, np.ones(1)) == pytest.approx(gaussian_entropy([0.3]))


def test_greedy_actions():
    policy = CategoricalPolicy(1, 3, (), bias=False)
    with torch.no_grad():
        policy.net.net[0].weight.copy_(torch.tensor([[0.0], [2.0], [1.0]], dtype=DTYPE))
    assert int(policy.greedy(np.ones(1))) == 1
    g = GaussianPolicy(1, 1, (), bias=False)
    with torch.no_grad():
        g.mean_net.net[0].weight.fill_(9.0)
    assert float(g.greedy(np.ones(1))) == 5.0


def test_make_policy_and_arch_round_trip():
    p = make_policy("discrete", 3, 4, (8,), seed=1)
    clone = policy_from_arch(p.arch())
    clone.load_state_dict(p.state_dict())
    np.testing.assert_allclose(clone.probs_numpy(np.ones(3)), p.probs_numpy(np.ones(3)))
    g = policy_from_arch(make_policy("continuous", 2, seed=0).arch())
    assert isinstance(g, GaussianPolicy)
    with pytest.raises(ArgumentError):
        make_policy("mixed", 2)


# ─────────────────────────────────────────────────────────────────────────────
# PPO
# ─────────────────────────────────────────────────────────────────────────────

def test_surrogate_clips_ratio():
    (policy,) = uniform_policies(1, 2)
    obs = np.ones((2, 1))
    actions = np.array([0, 1])
    # old probability 0.25 -> ratio 2, clipped to 1.2 for the positive advantage
    old = np.log([0.25, 0.5])
    _, surr, _ = surrogate(policy, obs, actions, old, np.array([1.0, -1.0]), 0.2)
    assert float(surr) == pytest.approx((1.2 * 1.0 + 1.0 * -1.0) / 2)


def test_config_validation():
    with pytest.raises(ArgumentError):
        PpoConfig(clip=1.5)
    with pytest.raises(ArgumentError):
        PpoConfig(epochs=0)
    with pytest.raises(ArgumentError):
        PpoUpdater(uniform_policies(1, 2), PpoConfig(optimizer="rmsprop"))


def test_update_moves_towards_positive_credit():
    policies = uniform_policies(2, 2)
    obs = np.ones((4, 1))
    actions = np.array([[0, 1], [0, 1], [1, 0], [1, 0]])
    old = np.full((4, 2), math.log(0.5))
    adv = np.array([[1.0, 1.0], [1.0, 1.0], [-1.0, -1.0], [-1.0, -1.0]])
    report = ppo_actor_update(policies, obs, actions, old, adv, PpoConfig(lr=0.05, epochs=5))
    assert report.updated_rows == 4
    assert policies[0].probs_numpy(np.ones(1))[0] > 0.5
    assert policies[1].probs_numpy(np.ones(1))[1] > 0.5


def test_invalid_rows_are_skipped():
    policies = uniform_policies(1, 2)
    obs = np.ones((2, 1))
    actions = np.array([[0], [1]])
    old = np.full((2, 1), math.log(0.5))
    adv = np.array([[1.0], [np.nan]])
    report = PpoUpdater(policies, PpoConfig(lr=0.05)).update(obs, actions, old, adv,
                                                             valid=np.array([True, False]))
    assert report.updated_rows == 1
    assert policies[0].probs_numpy(np.ones(1))[0] > 0.5


def test_all_rows_invalid_is_a_no_op():
    policies = uniform_policies(1, 2)
    before = policies[0].probs_numpy(np.ones(1))
    report = PpoUpdater(policies, PpoConfig()).update(np.ones((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)),
                                                      np.ones((1, 1)), valid=np.array([False]))
    assert report.updated_rows == 0
    np.testing.assert_array_equal(policies[0].probs_numpy(np.ones(1)), before)


def test_non_finite_credit_aborts():
    with pytest.raises(TrainingAbort) as err:
        PpoUpdater(uniform_policies(1, 2), PpoConfig()).update(np.ones((1, 1)), np.zeros((1, 1)),
                                                               np.zeros((1, 1)), np.full((1, 1), np.inf))
    assert "advantages" in err.value.diagnostics


def test_surrogate_gradient_matches_central_differences():
    policy = CategoricalPolicy(2, 3, (4,), seed=3)
    rng = np.random.default_rng(0)
    obs = rng.normal(size=(6, 2))
    actions = rng.integers(0, 3, size=6)
    with torch.no_grad():
        old = policy.log_prob(obs, actions).numpy()
    adv = rng.normal(size=6)
    objective, _, _ = surrogate(policy, obs, actions, old, adv, 0.2, entropy_coef=0.01)
    objective.backward()
    h = 1e-6
    for param in policy.parameters():
        flat, grad = param.data.view(-1), param.grad.view(-1)
        for k in range(0, flat.numel(), 3):
            saved = float(flat[k])
            flat[k] = saved + h
            up = float(surrogate(policy, obs, actions, old, adv, 0.2, 0.01)[0])
            flat[k] = saved - h
            down = float(surrogate(policy, obs, actions, old, adv, 0.2, 0.01)[0])
            flat[k] = saved
            numeric = (up - down) / (2 * h)
            assert abs(numeric - float(grad[k])) <= 1e-4 * max(1.0, abs(numeric))
