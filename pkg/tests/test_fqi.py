import numpy as np
import pytest

from distillkit.envs import OfflineRLDataset, Transition, make_env
from distillkit.fqi import (FQIConfig, bellman_targets, evaluate_policy, fqi_train,
                            greedy_policy, make_synthetic_evaluator)
from distillkit.nn import FeatureMap, MLP2, mlp_init_gaussian
from distillkit.rldistill import LinearQ, NeuralQ


def chain_dataset(copies=10, gamma=0.9):
    """s0 -a0-> s1 with reward 0; s1 is terminal with reward 1."""
    s0, s1 = np.array([0.0]), np.array([1.0])
    trans = []
    for _ in range(copies):
        trans.append(Transition(s0, 0, 0.0, s1, False, False))
        trans.append(Transition(s1, 0, 1.0, s1, True, False))
    return OfflineRLDataset(trans, gamma, "chain")


def value_iteration_chain(gamma=0.9, sweeps=100):
    q0 = q1 = 0.0
    for _ in range(sweeps):
        q0, q1 = 0.0 + gamma * q1, 1.0
    return q0, q1


def test_chain_mdp_reaches_value_iteration_fixed_point():
    ds = chain_dataset()
    target_q0, target_q1 = value_iteration_chain()
    assert target_q0 == pytest.approx(0.9)
    cfg = FQIConfig(iterations=30, inner_epochs=100, inner_lr=1e-2, gamma=0.9,
                    hidden=(8, 8), seed=0)
    q = fqi_train(ds, cfg)
    one = np.array([[1.0]])
    q0 = float(q.values(np.array([[0.0]]), one)[0])
    q1 = float(q.values(np.array([[1.0]]), one)[0])
    assert 0.85 <= q0 <= 0.95
    assert abs(q1 - target_q1) < 0.05


def test_chain_mdp_within_five_percent_across_seeds():
    ds = chain_dataset()
    one = np.array([[1.0]])
    for seed in range(5):
        cfg = FQIConfig(iterations=30, inner_epochs=100, inner_lr=1e-2, gamma=0.9,
                        hidden=(8, 8), seed=seed)
        q = fqi_train(ds, cfg)
        q0 = float(q.values(np.array([[0.0]]), one)[0])
        assert abs(q0 - 0.9) / 0.9 < 0.05


def test_gamma_zero_reduces_to_reward_regression():
    rng = np.random.default_rng(0)
    # tabular-like data: a few distinct states, constant reward per (s, a) cluster
    states = np.array([[0.0], [1.0], [2.0]])
    rewards = {0: 0.25, 1: -0.5, 2: 0.75}
    trans = []
    for i, s in enumerate(states):
        for _ in range(10):
            trans.append(Transition(s, 0, rewards[i], rng.normal(size=1), False, False))
    ds = OfflineRLDataset(trans, 0.9, "clusters")
    cfg = FQIConfig(iterations=2, inner_epochs=2000, inner_lr=1e-2, gamma=0.0,
                    hidden=(8, 8), seed=1)
    q = fqi_train(ds, cfg)
    one = np.array([[1.0]])
    for i, s in enumerate(states):
        assert abs(float(q.values(s[None, :], one)[0]) - rewards[i]) < 1e-2


def test_terminated_targets_ignore_the_network():
    rng = np.random.default_rng(2)
    R = rng.uniform(0, 1, 8)
    SN = rng.normal(size=(0, 3))
    term = np.ones(8, dtype=bool)
    wild = mlp_init_gaussian((5, 4, 4), rng, scale=100.0)
    np.testing.assert_array_equal(bellman_targets(wild, R, SN, term, 0.9, 2), R)


def test_nonterminated_targets_bootstrap():
    rng = np.random.default_rng(3)
    net = mlp_init_gaussian((5, 4, 4), rng)
    R = np.array([1.0, 1.0])
    SN = rng.normal(size=(2, 3))
    term = np.array([False, True])
    t = bellman_targets(net, R, SN[:1], term, 0.5, 2)
    assert t[1] == 1.0 and t[0] != 1.0


def test_greedy_policy_tie_breaks_to_lowest_action():
    net = MLP2(np.zeros((3, 6)), np.zeros(3), np.zeros((2, 3)), np.zeros(2),
               np.zeros(2), 3.0)  # constant output
    q = NeuralQ(net, FeatureMap("concat_onehot", action_count=2, state_dim=4))
    pol = greedy_policy(q)
    assert pol(np.zeros(4)) == 0


def test_greedy_policy_prefers_highest_value_action():
    # linear Q(s, a) = a via weights on the one-hot block
    fmap = FeatureMap("concat_onehot", action_count=3, state_dim=2)
    q = LinearQ(np.array([0.0, 0.0, 0.0, 1.0, 2.0]), fmap)
    pol = greedy_policy(q)
    assert pol(np.array([5.0, -1.0])) == 2


def test_greedy_policy_invariant_to_positive_head_scaling():
    rng = np.random.default_rng(4)
    net = mlp_init_gaussian((6, 8, 8), rng)
    fmap = FeatureMap("concat_onehot", action_count=2, state_dim=4)
    q = NeuralQ(net, fmap)
    scaled_net = MLP2(net.W1, net.b1, net.W2, net.b2, 3.5 * net.w_out, 3.5 * net.b_out)
    q_scaled = NeuralQ(scaled_net, fmap)
    pol, pol_scaled = greedy_policy(q), greedy_policy(q_scaled)
    for _ in range(1000):
        s = rng.normal(size=4)
        assert pol(s) == pol_scaled(s)


def test_evaluate_policy_always_push_right_cartpole():
    stats = evaluate_policy(make_env("cartpole"), lambda s: 1, episodes=10, seed=0)
    assert 0 < stats["mean"] < 500
    assert stats["max"] < 100  # the pole falls quickly under constant push


def test_evaluate_policy_mountaincar_random_never_escapes():
    rng = np.random.default_rng(5)
    stats = evaluate_policy(make_env("mountaincar"),
                            lambda s: int(rng.integers(3)), episodes=10, seed=1)
    assert stats["mean"] == -200.0 and stats["std"] == 0.0


def test_evaluate_policy_deterministic():
    a = evaluate_policy(make_env("cartpole"), lambda s: 0, episodes=5, seed=3)
    b = evaluate_policy(make_env("cartpole"), lambda s: 0, episodes=5, seed=3)
    assert a["returns"] == b["returns"]


def test_returns_bounded_by_environment_envelope():
    rng = np.random.default_rng(6)
    for name, low, high in (("cartpole", 0, 500), ("mountaincar", -200, 0),
                            ("acrobot", -500, 0)):
        stats = evaluate_policy(make_env(name),
                                lambda s: int(rng.integers(make_env(name).spec.action_count)),
                                episodes=3, seed=0)
        assert low <= stats["mean"] <= high


def test_synthetic_evaluator_round_trip():
    from distillkit.envs import collect_random
    from distillkit.rldistill import synthetic_from_dataset
    train = collect_random(make_env("cartpole"), 40, seed=0)
    syn = synthetic_from_dataset(train)
    cfg = FQIConfig(iterations=2, inner_epochs=10, gamma=0.99, hidden=(4, 4), seed=0)
    ev = make_synthetic_evaluator("cartpole", cfg, episodes=2, seed=0)
    stats = ev(syn)
    assert set(stats) == {"returns", "mean", "std", "max"}
    assert len(stats["returns"]) == 2
