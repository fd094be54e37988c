import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import log_softmax

from cora.errors import ArgumentError
from cora.theory.checks import (SUITE_CHECKS, TheoryCheckC, compatible_projection, exp_tilt_update,
                                fisher_and_score, hessian_bound, npg_step_and_verify, run_theory_suite,
                                theory_csv, verify_tilt_bounds)
from cora.theory.tabular import (TabularSoftmaxGame, additive_game, core_credits, lopsided_pair_game,
                                 generic_game, random_game)


def test_fisher_and_score_uniform_two_actions():
    psi, F = fisher_and_score(lopsided_pair_game(), 0)
    np.testing.assert_allclose(psi, [[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(F, [[0.25, -0.25], [-0.25, 0.25]])


def test_fisher_is_expected_outer_score():
    game = generic_game([4, 2], np.random.default_rng(0))
    psi, F = fisher_and_score(game, 0)
    pi = game.probs(0)
    np.testing.assert_allclose(F, (psi * pi[:, None]).T @ psi, atol=1e-14)


def test_projection_keeps_compatible_tables():
    game = generic_game([3, 2], np.random.default_rng(1))
    psi, _ = fisher_and_score(game, 0)
    table = psi @ np.array([1.0, -2.0, 0.5])
    _, projected = compatible_projection(game, 0, table, beta=0.0)
    np.testing.assert_allclose(projected, table, atol=1e-10)


def test_projection_of_constant_is_zero():
    game = generic_game([3, 3], np.random.default_rng(2))
    w, projected = compatible_projection(game, 1, np.full(game.shape, 4.0))
    np.testing.assert_allclose(w, 0.0, atol=1e-12)
    np.testing.assert_allclose(projected, 0.0, atol=1e-12)


def test_projection_rejects_bad_input():
    game = lopsided_pair_game()
    with pytest.raises(ArgumentError):
        compatible_projection(game, 0, np.zeros(3))
    with pytest.raises(ArgumentError):
        compatible_projection(game, 0, np.zeros(2), beta=-1.0)


def test_lopsided_pair_core_credits():
    credits = core_credits(lopsided_pair_game())
    np.testing.assert_allclose(credits.credits[0, 0], [2.5, -7.5], atol=1e-9)
    assert credits.epsilon[0, 0] == pytest.approx(2.5)
    np.testing.assert_allclose(credits.credits.sum(axis=-1), lopsided_pair_game().advantage, atol=1e-9)


def test_coalition_advantage_marginalizes_non_members():
    game = lopsided_pair_game()
    np.testing.assert_allclose(game.coalition_advantage(0b01)[:, 0], [5.0, -5.0])
    np.testing.assert_allclose(game.coalition_advantage(0b10)[0], [-5.0, 5.0])


def test_game_shape_checked():
    with pytest.raises(ArgumentError):
        TabularSoftmaxGame((np.zeros(2), np.zeros(3)), np.zeros((2, 2)))


# ─────────────────────────────────────────────────────────────────────────────
# Natural-gradient step
# ─────────────────────────────────────────────────────────────────────────────

def test_zero_step_passes_everything():
    game = generic_game([3, 2, 2], np.random.default_rng(3))
    report = npg_step_and_verify(game, core_credits(game), 0.0)
    assert report.passed
    assert all(s.bound == 0.0 for s in report.agents)


def test_lopsided_pair_step_passes():
    game = lopsided_pair_game()
    report = npg_step_and_verify(game, core_credits(game), 0.01)
    assert report.passed, report.violations
    names = {c.check for c in report.checks}
    assert set(SUITE_CHECKS["npg"]) <= names
    assert set(SUITE_CHECKS["concentration"]) <= names


def test_negative_step_rejected():
    game = lopsided_pair_game()
    with pytest.raises(ArgumentError):
        npg_step_and_verify(game, core_credits(game), -0.1)


def test_second_order_remainder_scales_quadratically():
    logits = np.array([0.3, -1.0, 0.5])
    w = np.array([1.0, -0.5, 2.0])
    pi = np.exp(log_softmax(logits))
    psi = np.eye(3) - pi[None, :]

    def remainder(alpha):
        return np.max(np.abs(log_softmax(logits + alpha * w) - log_softmax(logits) - alpha * psi @ w))

    big, small = remainder(1e-2), remainder(5e-3)
    assert 3.5 <= big / small <= 4.5
    assert big <= 0.5 * 1e-4 * 1.2 * hessian_bound(logits, w, 1e-2) * (w @ w)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_random_games_pass_npg_checks(seed, additive):
    game = random_game(np.random.default_rng(seed), additive)
    report = npg_step_and_verify(game, core_credits(game), 1e-2)
    assert report.passed, report.violations


def test_additive_game_has_compatible_credits():
    game = additive_game([3, 2], np.random.default_rng(4))
    report = npg_step_and_verify(game, core_credits(game), 1e-3)
    assert report.gap >= 0.0
    assert report.passed


# ─────────────────────────────────────────────────────────────────────────────
# Exponential tilt
# ─────────────────────────────────────────────────────────────────────────────

def test_zero_tilt_is_identity():
    game = generic_game([3, 2], np.random.default_rng(5))
    share = np.random.default_rng(6).normal(size=game.shape)
    tilt = exp_tilt_update(game, 0, share, 0.0)
    np.testing.assert_allclose(tilt.probs[:, 0], game.probs(0))
    np.testing.assert_allclose(tilt.delta_log(share, 0.0), 0.0, atol=1e-14)


def test_constant_credit_leaves_policy_unchanged():
    game = generic_game([4, 2], np.random.default_rng(7))
    tilt = exp_tilt_update(game, 0, np.full(4, 3.0), 0.5)
    np.testing.assert_allclose(tilt.probs, game.probs(0))
    np.testing.assert_allclose(tilt.delta_log(np.full(4, 3.0), 0.5), 0.0, atol=1e-12)


def test_tilt_input_checks():
    game = lopsided_pair_game()
    with pytest.raises(ArgumentError):
        exp_tilt_update(game, 0, np.zeros(2), -1.0)
    with pytest.raises(ArgumentError):
        exp_tilt_update(game, 0, np.zeros(5), 1.0)


@pytest.mark.parametrize("eta", [0.1, 1.0])
def test_lopsided_pair_tilt_bounds(eta):
    game = lopsided_pair_game()
    report = verify_tilt_bounds(game, core_credits(game), eta)
    assert report.passed, report.violations
    assert report.epsilon_max >= 2.5 - 1e-9


# ─────────────────────────────────────────────────────────────────────────────
# Suite runner
# ─────────────────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("suite", ["npg", "tilt", "concentration"])
def test_small_suite_all_pass(suite):
    rows = run_theory_suite(suite, seed=2, games=4)
    assert rows
    assert all(r["passed"] for r in rows)
    assert {r["check"].split("[")[0] for r in rows} == set(SUITE_CHECKS[suite])


def test_suite_arguments_checked():
    with pytest.raises(ArgumentError):
        run_theory_suite("mirror")
    with pytest.raises(ArgumentError):
        run_theory_suite("npg", games=0)


def test_theory_command_csv():
    (out,) = TheoryCheckC().execute(suite="tilt", games=2, seed=None)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows and {r["passed"] for r in rows} == {"true"}
    assert out == theory_csv(run_theory_suite("tilt", 0, 2))
