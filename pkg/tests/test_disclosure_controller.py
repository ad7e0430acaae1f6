"""
Tests for the disclosure POMDP: belief filtering, value of information,
decisions and exact value iteration checked against an expectimax oracle.
"""

import json

import numpy as np
import pytest

from skillbench.disclosure_controller import (
    ActionKind,
    BeliefState,
    PomdpModel,
    belief_grid,
    decide,
    load_model,
    model_from_dict,
    model_to_dict,
    symmetric_toy,
    update_belief,
    value_execute_now,
    value_iteration,
    value_of_information,
)
from skillbench.errors import ImpossibleObservation, InvalidModel, StateSpaceTooLarge


def execute_only(reward):
    """Model with one execute action per column of `reward` and no reveals."""
    R = np.asarray(reward, dtype=float)
    n_states, n_actions = R.shape
    return PomdpModel(
        transition=np.stack([np.eye(n_states)] * n_actions),
        observation=np.full((n_actions, n_states, 1), 1.0),
        reward=R,
        kinds=(ActionKind.EXECUTE,) * n_actions,
        reveal_cost=0.0,
    )


def random_model(rng, n_states=3, n_reveals=1, n_observations=2, horizon=2):
    """Random model with one execute per state and `n_reveals` reveal actions."""
    n_actions = n_states + n_reveals
    T = rng.dirichlet(np.ones(n_states), size=(n_actions, n_states))
    O = rng.dirichlet(np.ones(n_observations), size=(n_actions, n_states))
    R = np.zeros((n_states, n_actions))
    R[:, :n_states] = rng.uniform(-1.0, 2.0, size=(n_states, n_states))
    kinds = (ActionKind.EXECUTE,) * n_states + (ActionKind.REVEAL,) * n_reveals
    cost = np.concatenate([np.zeros(n_states), rng.uniform(0.0, 0.3, size=n_reveals)])
    return PomdpModel(transition=T, observation=O, reward=R, kinds=kinds, reveal_cost=cost, horizon=horizon)


def random_belief(rng, n):
    return rng.dirichlet(np.ones(n))


def expectimax(m, p, h):
    """Brute-force optimal value over the depth-h action/observation tree."""
    best = max(float(p @ m.reward[:, e]) for e in m.execute_actions)
    if h == 0:
        return best
    for a in m.reveal_actions:
        predicted = p @ m.transition[a]
        total = -float(m.reveal_cost[a])
        for o in range(m.n_observations):
            joint = predicted * m.observation[a][:, o]
            prob = joint.sum()
            if prob > 0:
                total += prob * expectimax(m, joint / prob, h - 1)
        best = max(best, total)
    return best


class TestModel:
    """Test model validation and serialization."""

    def test_toy_shape(self):
        """Test the bundled two-state toy."""
        m = symmetric_toy()
        assert (m.n_states, m.n_actions, m.n_observations) == (2, 3, 2)
        assert m.execute_actions == [0, 1]
        assert m.reveal_actions == [2]
        assert m.action_names == ("execute-0", "execute-1", "reveal")

    def test_rows_must_sum_to_one(self):
        """Test a non-stochastic transition is rejected."""
        T = np.stack([np.eye(2), np.array([[0.5, 0.4], [0.0, 1.0]])])
        with pytest.raises(InvalidModel):
            PomdpModel(transition=T, observation=np.full((2, 2, 1), 1.0),
                       reward=np.zeros((2, 2)), kinds=("execute", "reveal"), reveal_cost=0.1)

    def test_needs_execute_action(self):
        """Test a model of reveals only is rejected."""
        with pytest.raises(InvalidModel):
            PomdpModel(transition=np.stack([np.eye(2)]), observation=np.full((1, 2, 1), 1.0),
                       reward=np.zeros((2, 1)), kinds=("reveal",), reveal_cost=0.1)

    def test_negative_cost(self):
        """Test a negative reveal cost is rejected."""
        with pytest.raises(InvalidModel):
            symmetric_toy(reveal_cost=-0.1)

    def test_json_round_trip(self, tmp_path):
        """Test model_to_dict output loads back unchanged."""
        m = symmetric_toy(accuracy=0.75, reveal_cost=0.1, horizon=3)
        path = tmp_path / "model.json"
        path.write_text(json.dumps(model_to_dict(m)), encoding="utf-8")
        loaded = load_model(path)
        assert np.array_equal(loaded.transition, m.transition)
        assert np.array_equal(loaded.observation, m.observation)
        assert np.array_equal(loaded.reward, m.reward)
        assert np.array_equal(loaded.reveal_cost, m.reveal_cost)
        assert loaded.kinds == m.kinds
        assert loaded.horizon == 3
        assert loaded.observation_names == ("signal-0", "signal-1")

    def test_malformed_definition(self, tmp_path):
        """Test missing keys and invalid JSON raise InvalidModel."""
        with pytest.raises(InvalidModel):
            model_from_dict({"actions": [{"kind": "execute"}]})
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(InvalidModel):
            load_model(path)

    def test_belief_validation(self):
        """Test beliefs must be normalized."""
        with pytest.raises(ValueError):
            BeliefState(np.array([0.5, 0.6]))
        assert np.allclose(BeliefState.from_weights([1, 3]).probs, [0.25, 0.75])


class TestUpdateBelief:
    """Test the Bayes filter."""

    def test_symmetric_signal(self):
        """Test a uniform prior and an accurate signal."""
        b = update_belief(symmetric_toy(accuracy=0.9), [0.5, 0.5], 2, 0)
        assert b.probs == pytest.approx([0.9, 0.1], abs=1e-12)

    def test_uninformative(self):
        """Test an uninformative observation leaves the belief unchanged."""
        b = update_belief(symmetric_toy(), [0.3, 0.7], 0, 1)
        assert b.probs == pytest.approx([0.3, 0.7], abs=1e-12)

    def test_impossible_observation(self):
        """Test a zero-probability observation raises."""
        m = symmetric_toy(accuracy=1.0)
        with pytest.raises(ImpossibleObservation):
            update_belief(m, [1.0, 0.0], 2, 1)

    def test_joint_table_oracle(self):
        """Test 500 random 3-state models against the enumerated joint table."""
        rng = np.random.default_rng(5)
        for _ in range(500):
            m = random_model(rng, n_observations=3)
            b = random_belief(rng, 3)
            a = int(rng.integers(m.n_actions))
            o = int(rng.integers(m.n_observations))

            joint = np.zeros(3)
            for s in range(3):
                for s_next in range(3):
                    joint[s_next] += b[s] * m.transition[a, s, s_next] * m.observation[a, s_next, o]
            expected = joint / joint.sum()

            posterior = update_belief(m, b, a, o).probs
            assert posterior == pytest.approx(expected, abs=1e-12)
            assert abs(posterior.sum() - 1.0) <= 1e-12
            assert np.all(posterior >= 0)


class TestOneStepDecisions:
    """Test execute-now values, value of information and decide."""

    def test_execute_now(self):
        """Test concentrated, symmetric and weighted beliefs."""
        identity = execute_only(np.eye(2))
        assert value_execute_now(identity, [1.0, 0.0]) == (1.0, 0)
        assert value_execute_now(identity, [0.5, 0.5]) == (0.5, 0)
        value, action = value_execute_now(execute_only([[2.0, 0.0], [0.0, 1.0]]), [0.7, 0.3])
        assert value == pytest.approx(1.4)
        assert action == 0

    def test_value_of_information(self):
        """Test the toy's VOI at two costs and under certainty."""
        assert value_of_information(symmetric_toy(reveal_cost=0.2), [0.5, 0.5], 2) == pytest.approx(0.2)
        assert value_of_information(symmetric_toy(reveal_cost=0.5), [0.5, 0.5], 2) == pytest.approx(-0.1)
        assert value_of_information(symmetric_toy(reveal_cost=0.3), [1.0, 0.0], 2) == pytest.approx(-0.3)

    def test_voi_requires_reveal(self):
        """Test VOI of an execute action is an error."""
        with pytest.raises(ValueError):
            value_of_information(symmetric_toy(), [0.5, 0.5], 0)

    def test_decide(self):
        """Test reveal when information pays, execute otherwise."""
        assert decide(symmetric_toy(reveal_cost=0.2), [0.5, 0.5]) == 2
        assert decide(symmetric_toy(reveal_cost=0.5), [0.5, 0.5]) == 0
        assert decide(symmetric_toy(reveal_cost=0.2), [1.0, 0.0]) == 0
        assert decide(symmetric_toy(reveal_cost=0.2), [0.0, 1.0]) == 1

    def test_threshold(self):
        """Test the switch from reveal to execute at cost accuracy - 0.5."""
        for p in (0.6, 0.75, 0.9):
            threshold = p - 0.5
            below = symmetric_toy(accuracy=p, reveal_cost=threshold - 0.01)
            above = symmetric_toy(accuracy=p, reveal_cost=threshold + 0.01)
            assert decide(below, [0.5, 0.5]) == 2
            assert decide(above, [0.5, 0.5]) == 0
            assert expectimax(below, np.array([0.5, 0.5]), 1) > 0.5
            assert expectimax(above, np.array([0.5, 0.5]), 1) == pytest.approx(0.5)

    def test_threshold_is_sharp(self):
        """Test the switch for accuracy 0.9 happens at cost 0.4."""
        assert decide(symmetric_toy(0.9, 0.4 - 1e-9), [0.5, 0.5]) == 2
        assert decide(symmetric_toy(0.9, 0.4 + 1e-9), [0.5, 0.5]) == 0

    def test_scaling_invariance(self):
        """Test decide is unchanged when rewards and costs scale together."""
        rng = np.random.default_rng(9)
        for _ in range(200):
            m = random_model(rng, n_states=2 + int(rng.integers(2)), n_reveals=1 + int(rng.integers(2)))
            b = random_belief(rng, m.n_states)
            for k in (0.25, 2.0, 8.0):
                scaled = PomdpModel(
                    transition=m.transition, observation=m.observation, reward=m.reward * k,
                    kinds=m.kinds, reveal_cost=m.reveal_cost * k)
                assert decide(scaled, b) == decide(m, b)


class TestValueIteration:
    """Test exact finite-horizon backups."""

    def test_horizon_zero(self):
        """Test V_0 vectors are the execute columns of R."""
        m = symmetric_toy()
        vf = value_iteration(m, 0)
        assert vf.horizon == 0
        values = sorted(tuple(alpha.values) for alpha in vf.alpha_vectors[0])
        assert values == [(0.0, 1.0), (1.0, 0.0)]
        assert {alpha.action for alpha in vf.alpha_vectors[0]} == {0, 1}

    def test_expectimax_oracle(self):
        """Test V_h on 101 grid beliefs equals the expectimax tree for h <= 5."""
        for m in (symmetric_toy(0.9, 0.2, 5), symmetric_toy(0.75, 0.05, 5)):
            vf = value_iteration(m)
            assert vf.horizon == 5
            for b in belief_grid(2, 100):
                for h in range(6):
                    assert vf.value(b, h) == pytest.approx(expectimax(m, b, h), abs=1e-9)

    def test_random_models_match_oracle(self):
        """Test 3-state random models against expectimax for h <= 2."""
        rng = np.random.default_rng(13)
        for _ in range(20):
            m = random_model(rng)
            vf = value_iteration(m)
            for _ in range(20):
                b = random_belief(rng, 3)
                for h in range(3):
                    assert vf.value(b, h) == pytest.approx(expectimax(m, b, h), abs=1e-9)

    def test_free_information_never_hurts(self):
        """Test V_{h+1} >= V_h everywhere when reveals cost nothing."""
        vf = value_iteration(symmetric_toy(accuracy=0.8, reveal_cost=0.0, horizon=3))
        for b in belief_grid(2, 100):
            for h in range(3):
                assert vf.value(b, h + 1) >= vf.value(b, h) - 1e-12

    def test_convexity(self):
        """Test V_h is convex along 200 random belief segments."""
        rng = np.random.default_rng(17)
        models = [(symmetric_toy(0.85, 0.1, 5), 2), (random_model(rng, horizon=2), 3)]
        for m, n in models:
            vf = value_iteration(m)
            for _ in range(200):
                b1, b2 = random_belief(rng, n), random_belief(rng, n)
                for h in range(vf.horizon + 1):
                    v1, v2 = vf.value(b1, h), vf.value(b2, h)
                    for lam in np.linspace(0.1, 0.9, 9):
                        mix = BeliefState.from_weights(lam * b1 + (1 - lam) * b2)
                        assert vf.value(mix, h) <= lam * v1 + (1 - lam) * v2 + 1e-9

    def test_best_action_is_decide_at_horizon_one(self):
        """Test the one-step policy agrees with decide off the threshold."""
        m = symmetric_toy(0.9, 0.2, 1)
        vf = value_iteration(m)
        for b in ([0.5, 0.5], [0.95, 0.05], [0.1, 0.9]):
            assert vf.best_action(b) == decide(m, b)

    def test_state_space_guard(self, monkeypatch):
        """Test the generated-vector guard."""
        monkeypatch.setattr("skillbench.disclosure_controller.MAX_GENERATED_VECTORS", 3)
        with pytest.raises(StateSpaceTooLarge):
            value_iteration(symmetric_toy(horizon=2))

    def test_horizon_out_of_range(self):
        """Test asking for a horizon beyond the computed one."""
        vf = value_iteration(symmetric_toy(horizon=1))
        with pytest.raises(ValueError):
            vf.value([0.5, 0.5], 2)


class TestBeliefGrid:
    """Test grid enumeration."""

    def test_two_states(self):
        """Test the 2-state grid is ordered by b_0."""
        grid = [tuple(b) for b in belief_grid(2, 4)]
        assert grid == [(0.0, 1.0), (0.25, 0.75), (0.5, 0.5), (0.75, 0.25), (1.0, 0.0)]

    def test_three_states(self):
        """Test the simplex grid size."""
        grid = list(belief_grid(3, 4))
        assert len(grid) == 15
        assert all(abs(b.sum() - 1.0) < 1e-12 for b in grid)
