import csv
import io
import json

import numpy as np
import pytest

from cora.envs.differential_game import DiffGameSpec, DifferentialGame
from cora.envs.matrix_game import MatrixGame, MatrixGameSpec, matrix_oracle
from cora.envs.registry import EnvInspectC, make_env, spec_digest, spec_from_dict, spec_to_dict
from cora.errors import ArgumentError, CapacityError


def test_same_seed_same_rewards():
    a = MatrixGame(MatrixGameSpec(seed=4))
    b = MatrixGame(MatrixGameSpec(seed=4))
    np.testing.assert_array_equal(a.rewards, b.rewards)
    assert not np.array_equal(a.rewards, MatrixGame(MatrixGameSpec(seed=5)).rewards)


def test_base_reward_range():
    game = MatrixGame(MatrixGameSpec(n_agents=3, n_actions=4, horizon=6))
    assert game.rewards.shape == (6, 4, 4, 4)
    assert game.rewards.min() >= -10.0 and game.rewards.max() < 20.0


def test_multipeak_structure():
    spec = MatrixGameSpec(n_agents=2, n_actions=10, horizon=5, variant="multipeak", peaks=7, seed=1)
    game = MatrixGame(spec)
    flat = game.rewards.reshape(5, -1)
    for t in range(5):
        assert int(np.sum(flat[t] >= 5.0)) == 7
        assert int(np.argmax(flat[t])) == int(game.peaks[t, 0])
        assert 15.0 <= flat[t].max() <= 20.0
        rest = np.delete(flat[t], game.peaks[t])
        assert rest.max() < 0.0


def test_episode_runs_to_horizon():
    game = MatrixGame(MatrixGameSpec(horizon=3))
    obs = game.reset()
    np.testing.assert_array_equal(obs, [1, 0, 0])
    total = 0.0
    for t in range(3):
        result = game.step([t % 5, 0])
        total += result.reward
        assert result.done == (t == 2)
    np.testing.assert_array_equal(result.obs, [0, 0, 0])
    with pytest.raises(ArgumentError):
        game.step([0, 0])
    assert total == pytest.approx(sum(game.rewards[t, t % 5, 0] for t in range(3)))


def test_matrix_oracle_is_sum_of_maxima():
    game = MatrixGame(MatrixGameSpec(seed=2))
    expected = sum(game.rewards[t].max() for t in range(game.horizon))
    assert matrix_oracle(MatrixGameSpec(seed=2)) == pytest.approx(expected)
    best = game.optimal_actions()
    assert sum(game.reward(t, best[t]) for t in range(game.horizon)) == pytest.approx(expected)


@pytest.mark.parametrize("action", [[0, 5], [0, -1], [0.5, 0], [0]])
def test_matrix_rejects_bad_actions(action):
    with pytest.raises(ArgumentError):
        MatrixGame(MatrixGameSpec()).step(action)


def test_matrix_spec_validation():
    with pytest.raises(ArgumentError):
        MatrixGameSpec(n_agents=1)
    with pytest.raises(ArgumentError):
        MatrixGameSpec(variant="valley")
    with pytest.raises(ArgumentError):
        MatrixGameSpec(n_agents=2, n_actions=2, variant="multipeak", peaks=5)
    with pytest.raises(CapacityError):
        MatrixGameSpec(n_agents=8, n_actions=10)


# ─────────────────────────────────────────────────────────────────────────────
# Differential game
# ─────────────────────────────────────────────────────────────────────────────

def test_single_field_peak_at_center():
    game = DifferentialGame.from_fields([[1.0, -2.0]], [7.0], [1.5])
    assert game.reward([1.0, -2.0]) == pytest.approx(7.0)
    assert game.reward([2.5, -2.0]) == pytest.approx(7.0 * np.exp(-1.0))
    value, x = game.oracle_optimum()
    assert value == pytest.approx(7.0, abs=1e-8)
    np.testing.assert_allclose(x, [1.0, -2.0], atol=1e-4)


def test_oracle_beats_every_grid_point():
    game = DifferentialGame(DiffGameSpec(seed=3))
    value, x = game.oracle_optimum()
    grid = np.stack(np.meshgrid(np.linspace(-5, 5, 101), np.linspace(-5, 5, 101)), axis=-1).reshape(-1, 2)
    assert value >= game.reward_batch(grid).max() - 1e-9
    assert np.all(np.abs(x) <= 5.0)


def test_differential_step_is_terminal():
    game = DifferentialGame(DiffGameSpec(n_agents=3))
    np.testing.assert_array_equal(game.reset(), [1.0])
    result = game.step([0.0, 0.0, 0.0])
    assert result.done
    with pytest.raises(ArgumentError):
        game.step([0.0, float("nan"), 0.0])


def test_oracle_capacity():
    with pytest.raises(CapacityError):
        DifferentialGame(DiffGameSpec(n_agents=6)).oracle_optimum()


# ─────────────────────────────────────────────────────────────────────────────
# Registry
# ─────────────────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("spec", [MatrixGameSpec(variant="multipeak", peaks=3), DiffGameSpec(n_fields=2, seed=9)])
def test_spec_dict_round_trip(spec):
    back = spec_from_dict(json.loads(json.dumps(spec_to_dict(spec))))
    assert back == spec
    assert spec_digest(back) == spec_digest(spec)
    assert make_env(back).kind in ("discrete", "continuous")


@pytest.mark.parametrize("d", [{"kind": "grid"}, {"kind": "matrix", "size": 3}, {"kind": "differential", "horizon": 2}])
def test_spec_dict_rejects(d):
    with pytest.raises(ArgumentError):
        spec_from_dict(d)


def test_env_inspect_csv(tmp_path):
    path = tmp_path / "env.json"
    path.write_text(json.dumps(spec_to_dict(MatrixGameSpec(seed=7))))
    (out,) = EnvInspectC().execute(env_file=str(path))
    rows = dict(csv.reader(io.StringIO(out)))
    assert rows["digest"] == spec_digest(MatrixGameSpec(seed=7))
    assert float(rows["oracle_optimal_return"]) == pytest.approx(matrix_oracle(MatrixGameSpec(seed=7)))


def test_env_inspect_differential_reports_argmax():
    (out,) = EnvInspectC().execute(kind="differential", n_fields=1, seed=None)
    rows = dict(csv.reader(io.StringIO(out)))
    assert len(rows["oracle_argmax"].split(";")) == 2
