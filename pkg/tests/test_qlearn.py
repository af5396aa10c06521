"""Tests for finite-horizon tabular Q-learning and Monte-Carlo evaluation."""

import math

import numpy as np
import pytest

from scsynth.dp import (
    exact_policy_value,
    shaping_equivalence_check,
    value_iteration,
)
from scsynth.product import RewardConfig
from scsynth.qlearn import (
    LearnedPolicy,
    QTable,
    TrainConfig,
    evaluate,
    extract_policy,
    hoeffding_halfwidth,
    load_qtable,
    reported_value,
    save_qtable,
    train,
)
from scsynth.quantize import build_finite_mdp, build_grid
from scsynth.scltl import compile_formula, parse
from scsynth.systems import (
    OUT,
    ConfigurationError,
    LinearGaussian,
    SystemModel,
    make_room,
)


def _dfa(text, ap):
    return compile_formula(parse(text, ap), ap)


def _make_chain():
    """Near-deterministic ramp: action 0 advances one cell, action 1 stays.

    Grid [0,1] in four cells; cell centers map onto cell centers, and the
    noise scale 1e-9 cannot carry a trajectory across a cell boundary, so
    from x0 = 0.125 two advance steps reach the goal region (x > 0.6) with
    probability one up to floating-point resolution.
    """
    sigma = 1e-9
    inputs = np.array([[1.0], [0.0]])

    def drift(x, u):
        return x + 0.25 * u[0]

    def labeler(x):
        return frozenset() if x is OUT else (
            frozenset({"goal"}) if x[0] > 0.6 else frozenset())

    lg = LinearGaussian(a=np.ones(2), c=np.array([0.25, 0.0]), sigma=sigma,
                        a_upper=np.array([[1.0]]))
    return SystemModel(
        name="chain", box=np.array([[0.0, 1.0]]), inputs=inputs,
        noise_sigma=np.array([sigma]), drift=drift, labeler=labeler,
        ap=("goal",), lin_gauss=lg)


def _make_two_cell():
    """Cell-exact stochastic model: the drift ignores x, so the finite
    abstraction reproduces the continuous transition kernel exactly."""
    sigma = 0.25
    inputs = np.array([[0.0], [1.0]])

    def drift(x, u):
        return 0.45 + 0.3 * u[0] + 0.0 * x

    def labeler(x):
        return frozenset() if x is OUT else (
            frozenset({"goal"}) if x[0] >= 0.5 else frozenset())

    lg = LinearGaussian(a=np.zeros(2), c=np.array([0.45, 0.75]), sigma=sigma,
                        a_upper=np.array([[0.0]]))
    return SystemModel(
        name="twocell", box=np.array([[0.0, 1.0]]), inputs=inputs,
        noise_sigma=np.array([sigma]), drift=drift, labeler=labeler,
        ap=("goal",), lin_gauss=lg)


def _chain_setup():
    model = _make_chain()
    grid = build_grid(model.box, 0.25)
    dfa = _dfa("F[0,2] goal", model.ap)
    return model, grid, dfa


# ----------------------------------------------------------------- training

def test_chain_q0_converges_to_one():
    model, grid, dfa = _chain_setup()
    mdp = build_finite_mdp(model, grid)
    p_star, _, greedy = value_iteration(mdp, dfa, 2, x0=[0.125])
    assert p_star == 1.0  # the abstraction oracle: two sure steps to goal

    config = TrainConfig(episodes=10_000, seed=3, x0=0.125)
    table = train(model, grid, dfa, 2, config)
    assert abs(reported_value(table, model, grid, dfa, 0.125) - 1.0) <= 1e-3

    # greedy action agrees with the DP policy along the optimal path
    policy = extract_policy(table)
    q0 = int(dfa.trans[dfa.q0, dfa.letter(())])
    assert policy.action(0, 0, q0) == int(greedy[0, 0, q0]) == 0
    assert policy.action(1, 1, q0) == int(greedy[1, 1, q0]) == 0


def test_same_seed_same_table():
    model, grid, dfa = _chain_setup()
    config = TrainConfig(episodes=500, seed=11, x0=0.125)
    a = train(model, grid, dfa, 2, config)
    b = train(model, grid, dfa, 2, config)
    assert np.array_equal(a.q, b.q)
    assert np.array_equal(a.visits, b.visits)
    assert a.meta == b.meta

    c = train(model, grid, dfa, 2, TrainConfig(episodes=500, seed=12, x0=0.125))
    assert not np.array_equal(a.q, c.q)


def test_sparse_values_stay_in_unit_interval():
    model = make_room()
    grid = build_grid(model.box, 0.2)
    dfa = _dfa("G[0,10] safe", model.ap)
    table = train(model, grid, dfa, 10,
                  TrainConfig(episodes=5_000, seed=0, x0=20.0))
    assert np.all(table.q >= 0.0) and np.all(table.q <= 1.0)
    assert np.all(table.visits >= 0)


def test_uniform_restarts_cover_the_grid():
    model = make_room()
    grid = build_grid(model.box, 0.2)
    dfa = _dfa("G[0,10] safe", model.ap)
    table = train(model, grid, dfa, 10,
                  TrainConfig(episodes=2_000, seed=5, uniform_restarts=True))
    visited_cells = np.flatnonzero(table.visits[0].sum(axis=(1, 2)))
    assert len(visited_cells) == grid.n_cells  # every start cell was drawn


def test_training_continues_through_out_cells():
    # reachability formula: leaving the box is not yet rejecting, so the
    # learner keeps acting (and updating) in the absorbing out cell
    sigma = 0.2
    inputs = np.array([[0.0]])

    def drift(x, u):
        return x + 0.6

    def labeler(x):
        return frozenset()  # goal never holds; episodes run to the horizon

    model = SystemModel(
        name="runaway", box=np.array([[0.0, 1.0]]), inputs=inputs,
        noise_sigma=np.array([sigma]), drift=drift, labeler=labeler,
        ap=("goal",),
        lin_gauss=LinearGaussian(a=np.ones(1), c=np.array([0.6]), sigma=sigma,
                                 a_upper=np.array([[1.0]])))
    grid = build_grid(model.box, 0.5)
    dfa = _dfa("F[0,4] goal", model.ap)
    table = train(model, grid, dfa, 4,
                  TrainConfig(episodes=300, seed=2, x0=0.1))
    assert table.visits[:, grid.out_index].sum() > 0
    assert np.all(np.isfinite(table.q))
    assert np.all(table.q == 0.0)  # goal is unreachable: no reward ever seen


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=0, x0=0.5)
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, x0=0.5, alpha_power=0.5)
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, x0=0.5, alpha_power=1.2)
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, x0=0.5, eps_start=0.1, eps_end=0.9)
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, x0=0.5, eps_fraction=0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10)  # neither x0 nor restarts
    with pytest.raises(ConfigurationError):
        TrainConfig(episodes=10, x0=0.5, uniform_restarts=True)


def test_train_input_validation():
    model, grid, dfa = _chain_setup()
    config = TrainConfig(episodes=10, x0=0.125)
    with pytest.raises(ConfigurationError):
        train(model, grid, dfa, 0, config)
    with pytest.raises(ConfigurationError):
        train(model, build_grid([[5.0, 6.0]], 0.25), dfa, 2, config)
    with pytest.raises(ConfigurationError):
        train(model, grid, dfa, 2, TrainConfig(episodes=10, x0=3.0))


# ----------------------------------------------------- policies and reports

def test_extract_policy_tiebreak_and_fallback():
    q = np.zeros((1, 2, 1, 3))
    visits = np.zeros((1, 2, 1, 3), dtype=np.int64)
    q[0, 0, 0] = [0.5, 0.5, 0.2]  # tie between inputs 0 and 1
    visits[0, 0, 0] = [1, 1, 1]
    q[0, 1, 0] = [0.0, 0.0, 0.0]  # never visited: falls back to input 0
    table = QTable(q=q, visits=visits, meta={})
    policy = extract_policy(table)
    assert policy.action(0, 0, 0) == 0
    assert policy.action(0, 1, 0) == policy.fallback == 0


def test_argmax_invariance_under_constant_shift():
    model, grid, dfa = _chain_setup()
    table = train(model, grid, dfa, 2,
                  TrainConfig(episodes=2_000, seed=7, x0=0.125))
    shifted = QTable(q=table.q + 0.37, visits=table.visits, meta=table.meta)
    assert np.array_equal(extract_policy(table).actions,
                          extract_policy(shifted).actions)


def test_untrained_reported_value_is_zero():
    model, grid, dfa = _chain_setup()
    shape = (2, grid.n_cells + 1, dfa.n_states, model.n_inputs)
    table = QTable(q=np.zeros(shape), visits=np.zeros(shape, dtype=np.int64),
                   meta={})
    assert reported_value(table, model, grid, dfa, 0.125) == 0.0

    wrong = QTable(q=np.zeros((2, 3, 4, 5)),
                   visits=np.zeros((2, 3, 4, 5), dtype=np.int64), meta={})
    with pytest.raises(ConfigurationError):
        reported_value(wrong, model, grid, dfa, 0.125)


def test_reported_value_approaches_dp_optimum():
    model = _make_two_cell()
    grid = build_grid(model.box, 0.75)
    dfa = _dfa("F[0,3] goal", model.ap)
    mdp = build_finite_mdp(model, grid)
    p_star, _, _ = value_iteration(mdp, dfa, 3, x0=[0.1])
    table = train(model, grid, dfa, 3,
                  TrainConfig(episodes=30_000, seed=1, x0=0.1))
    assert abs(reported_value(table, model, grid, dfa, 0.1) - p_star) <= 0.05


def test_shaped_and_sparse_learn_the_same_policy():
    # chain: both reward modes must advance toward the goal
    model, grid, dfa = _chain_setup()
    q0 = int(dfa.trans[dfa.q0, dfa.letter(())])
    sparse = train(model, grid, dfa, 2,
                   TrainConfig(episodes=5_000, seed=9, x0=0.125))
    shaped = train(model, grid, dfa, 2,
                   TrainConfig(episodes=5_000, seed=9, x0=0.125,
                               reward=RewardConfig("shaped", kappa=0.1)))
    p_sparse, p_shaped = extract_policy(sparse), extract_policy(shaped)
    for k, cell in ((0, 0), (1, 1)):
        assert p_sparse.action(k, cell, q0) == p_shaped.action(k, cell, q0) == 0

    # stochastic two-cell instance: equivalence holds by the explicit check,
    # and the learned greedy actions agree at the initial product state
    model = _make_two_cell()
    grid = build_grid(model.box, 0.75)
    dfa = _dfa("F[0,3] goal", model.ap)
    mdp = build_finite_mdp(model, grid)
    ok, witness = shaping_equivalence_check(mdp, dfa, 3, kappa=0.1)
    assert ok and witness is None
    q0 = int(dfa.trans[dfa.q0, dfa.letter(())])
    sparse = train(model, grid, dfa, 3,
                   TrainConfig(episodes=40_000, seed=21, x0=0.1))
    shaped = train(model, grid, dfa, 3,
                   TrainConfig(episodes=40_000, seed=21, x0=0.1,
                               reward=RewardConfig("shaped", kappa=0.1)))
    assert (extract_policy(sparse).action(0, 0, q0)
            == extract_policy(shaped).action(0, 0, q0))


# --------------------------------------------------------------- evaluation

def test_hoeffding_halfwidth_value():
    assert hoeffding_halfwidth(10_000) == pytest.approx(
        math.sqrt(math.log(2 / 0.01) / 20_000))
    assert abs(hoeffding_halfwidth(10_000) - 0.0163) <= 5e-5


def test_evaluate_always_accepting_model():
    sigma = 0.1
    inputs = np.array([[0.0]])

    def drift(x, u):
        return 0.5 + 0.0 * x

    def labeler(x):
        return frozenset({"goal"})

    model = SystemModel(
        name="sure", box=np.array([[0.0, 1.0]]), inputs=inputs,
        noise_sigma=np.array([sigma]), drift=drift, labeler=labeler,
        ap=("goal",))
    grid = build_grid(model.box, 0.5)
    dfa = _dfa("F[0,2] goal", model.ap)
    policy = LearnedPolicy(actions=np.zeros((2, grid.n_cells + 1,
                                             dfa.n_states), dtype=int))
    p_hat, halfwidth = evaluate(model, grid, dfa, policy, 0.5, 50, seed=4)
    assert p_hat == 1.0
    assert halfwidth == hoeffding_halfwidth(50)


def test_evaluate_matches_exact_value_across_seeds():
    # the two-cell model's abstraction is exact, so the continuous episodes
    # follow the finite MDP law and the exact policy value is the truth
    model = _make_two_cell()
    grid = build_grid(model.box, 0.75)
    dfa = _dfa("F[0,3] goal", model.ap)
    mdp = build_finite_mdp(model, grid)
    actions = np.zeros((3, mdp.n_states, dfa.n_states), dtype=int)
    for k in range(3):
        actions[k] = (k + np.arange(mdp.n_states)[:, None]) % 2
    exact = exact_policy_value(mdp, dfa, 3, actions, s0=0)
    policy = LearnedPolicy(actions=actions)

    rollouts = 800
    hits = 0
    for seed in range(100):
        p_hat, halfwidth = evaluate(model, grid, dfa, policy, 0.1,
                                    rollouts, seed=seed)
        hits += int(abs(p_hat - exact) <= halfwidth)
    assert hits >= 99


def test_evaluate_rejects_bad_rollout_count():
    model, grid, dfa = _chain_setup()
    policy = LearnedPolicy(actions=np.zeros((2, grid.n_cells + 1,
                                             dfa.n_states), dtype=int))
    with pytest.raises(ConfigurationError):
        evaluate(model, grid, dfa, policy, 0.125, 0)


# --------------------------------------------------------------- CSV format

def test_qtable_csv_round_trip(tmp_path):
    model, grid, dfa = _chain_setup()
    table = train(model, grid, dfa, 2,
                  TrainConfig(episodes=1_000, seed=13, x0=0.125))
    path = tmp_path / "qtable.csv"
    save_qtable(path, table)
    loaded = load_qtable(path)
    assert np.array_equal(table.q, loaded.q)
    assert np.array_equal(table.visits, loaded.visits)
    assert loaded.meta == table.meta

    text = path.read_text().splitlines()
    assert text[0].startswith("# seed=")
    header_at = next(i for i, line in enumerate(text)
                     if not line.startswith("#"))
    assert text[header_at] == "k,cell,q,input,value,visits"


def test_saved_qtable_is_deterministic(tmp_path):
    model, grid, dfa = _chain_setup()
    table = train(model, grid, dfa, 2,
                  TrainConfig(episodes=200, seed=13, x0=0.125))
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    save_qtable(first, table)
    save_qtable(second, table)
    assert first.read_bytes() == second.read_bytes()


def test_load_qtable_requires_shape_metadata(tmp_path):
    path = tmp_path / "broken.csv"
    path.write_text("# seed=1\nk,cell,q,input,value,visits\n")
    with pytest.raises(ConfigurationError):
        load_qtable(path)
