import numpy as np
import pytest

from distillkit import linreg
from distillkit import rldistill as rl
from distillkit.data import make_dataset
from distillkit.envs import OfflineRLDataset, Transition, collect_random, make_env
from distillkit.nn import FeatureMap
from distillkit.rldistill import (LinearQ, PredictorArch, QEnsembleSample,
                                  RLDistillConfig, SyntheticOfflineDataset,
                                  allocate_partition_sizes, bellman_loss,
                                  bellman_match_objective, bellman_objective_gradient,
                                  decomposable_max_identity_check, distill_rl,
                                  mean_constraint_project, mean_constraint_residual,
                                  sample_ensemble_H, sample_predictor_H,
                                  synthetic_from_dataset)

GAMMA = 0.9


def fmap_for(d0, nA):
    return FeatureMap("concat_onehot", action_count=nA, state_dim=d0)


def make_train(n, d0, nA, rng, term_frac=0.3, gamma=GAMMA):
    trans = []
    for _ in range(n):
        term = rng.random() < term_frac
        trans.append(Transition(rng.normal(size=d0), int(rng.integers(nA)),
                                float(rng.uniform(0, 1)), rng.normal(size=d0), term, False))
    return OfflineRLDataset(trans, gamma, "generic-test")


def make_syn(rng, m_nt, m_t, d0, nA, reward_range=(0.0, 1.0)):
    return SyntheticOfflineDataset(
        "generic-test", GAMMA, reward_range,
        rng.normal(size=(m_nt, d0)), rng.normal(size=(m_nt, nA)),
        rng.uniform(0, 1, m_nt), rng.normal(size=(m_nt, d0)),
        rng.normal(size=(m_t, d0)), rng.normal(size=(m_t, nA)), rng.uniform(0, 1, m_t))


# -- predictor sampling ---------------------------------------------------------


def test_sample_H_deterministic():
    arch = PredictorArch("mlp", fmap_for(3, 2), hidden=(5, 5))
    a = sample_predictor_H(arch, 1.0, np.random.default_rng(3))
    b = sample_predictor_H(arch, 1.0, np.random.default_rng(3))
    np.testing.assert_array_equal(a.predictor.net.W1, b.predictor.net.W1)
    assert a.lam == b.lam


def test_sample_H_unit_sigma_variance():
    arch = PredictorArch("linear", fmap_for(8, 2))
    rng = np.random.default_rng(4)
    draws = np.concatenate([sample_predictor_H(arch, 1.0, rng).predictor.v
                            for _ in range(1000)])
    assert 0.9 < draws.var() < 1.1


def test_sample_H_default_sigma_linear():
    # d = 9 features: default variance 1/(d+1) = 0.1, within 15%
    fmap = FeatureMap("concat_onehot", action_count=4, state_dim=5)
    assert fmap.dim == 9
    arch = PredictorArch("linear", fmap)
    rng = np.random.default_rng(5)
    draws = np.concatenate([sample_predictor_H(arch, None, rng).predictor.v
                            for _ in range(1200)])
    assert abs(draws.var() - 0.1) < 0.015


# -- bellman loss ------------------------------------------------------------------


def test_bellman_loss_gamma_zero_is_reward_regression():
    rng = np.random.default_rng(6)
    train = make_train(15, 3, 2, rng, term_frac=0.0)
    q = sample_predictor_H(PredictorArch("mlp", fmap_for(3, 2), (4, 4)), 1.0,
                           np.random.default_rng(0))
    S, A, R, SN, _ = train.arrays()
    onehot = q.predictor.fmap.onehot(A)
    expected = float(np.mean((q.predictor.values(S, onehot) - q.lam * R) ** 2))
    assert abs(bellman_loss(train, q, gamma=0.0) - expected) < 1e-12


def test_bellman_loss_single_terminated_transition():
    ds = OfflineRLDataset([Transition(np.zeros(2), 0, 5.0, np.zeros(2), True, False)],
                          0.9, "generic-test")
    zero_net = sample_predictor_H(PredictorArch("mlp", fmap_for(2, 1), (3, 3)), 1.0,
                                  np.random.default_rng(1))
    zero_net.predictor.net.w_out[:] = 0.0
    zero_net.predictor.net.b_out = 0.0
    zero_net.lam = 1.0
    assert abs(bellman_loss(ds, zero_net, GAMMA) - 25.0) < 1e-12


def test_bellman_loss_matches_double_loop_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        d0, nA = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        train = make_train(int(rng.integers(2, 10)), d0, nA, rng)
        q = sample_predictor_H(PredictorArch("mlp", fmap_for(d0, nA), (4, 4)), 1.0,
                               np.random.default_rng(int(rng.integers(1e6))))
        total = 0.0
        for t in train.transitions:
            onehot = q.predictor.fmap.onehot([t.a])
            fsa = float(q.predictor.values(t.s[None, :], onehot)[0])
            if t.terminated:
                total += (fsa - q.lam * t.r) ** 2
            else:
                best = max(float(q.predictor.values(t.s_next[None, :],
                                                    q.predictor.fmap.onehot([a]))[0])
                           for a in range(nA))
                total += (fsa - q.lam * t.r - GAMMA * best) ** 2
        got = bellman_loss(train, q, GAMMA, actions=range(nA))
        assert abs(got - total / len(train)) < 1e-10


def test_bellman_loss_empty_dataset_rejected():
    with pytest.raises(ValueError):
        OfflineRLDataset([], 0.9, "x")


# -- matching objective ----------------------------------------------------------------


def test_objective_zero_when_synthetic_equals_train():
    rng = np.random.default_rng(8)
    train = make_train(12, 3, 2, rng)
    ens = sample_ensemble_H(PredictorArch("mlp", fmap_for(3, 2), (5, 5)), 4, 1.0, 3)
    syn = synthetic_from_dataset(train, reward_range=(0.0, 1.0))
    assert bellman_match_objective(train, syn, ens, GAMMA) == 0.0


def test_objective_single_predictor_hand_value():
    # k=1 with losses 2.0 (train) vs 0.5 (syn): objective (2 - 0.5)^2 = 2.25
    fmap = fmap_for(1, 1)
    q = QEnsembleSample(LinearQ(np.array([1.0, 0.0]), fmap), lam=0.0)
    # terminated rows only: loss is mean of (v . phi(s,a))^2 = s^2
    train = OfflineRLDataset(
        [Transition(np.array([np.sqrt(2.0)]), 0, 0.0, np.zeros(1), True, False)],
        0.9, "generic-test")
    syn = SyntheticOfflineDataset(
        "generic-test", GAMMA, (0.0, 1.0),
        np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1)),
        np.array([[np.sqrt(0.5)]]), np.array([[0.0]]), np.zeros(1))
    assert abs(bellman_match_objective(train, syn, [q], GAMMA) - 2.25) < 1e-12


def test_objective_ratio_metadata_checked():
    rng = np.random.default_rng(9)
    train = make_train(10, 2, 2, rng)
    ens = sample_ensemble_H(PredictorArch("mlp", fmap_for(2, 2), (4, 4)), 2, 1.0, 0)
    syn = synthetic_from_dataset(train, ratio=(999, 1), reward_range=(0.0, 1.0))
    with pytest.raises(ValueError, match="ratio"):
        bellman_match_objective(train, syn, ens, GAMMA)


def test_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    train = make_train(20, 3, 2, rng)
    ens = sample_ensemble_H(PredictorArch("mlp", fmap_for(3, 2), (6, 6)), 4, 1.0, 3)
    syn = make_syn(rng, 4, 2, 3, 2)
    grads = bellman_objective_gradient(train, syn, ens, GAMMA)
    h = 1e-6
    worst = 0.0
    for key, g in grads.items():
        it = np.nditer(getattr(syn, key), flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            sp, sm = syn.copy(), syn.copy()
            getattr(sp, key)[idx] += h
            getattr(sm, key)[idx] -= h
            fd = (bellman_match_objective(train, sp, ens, GAMMA)
                  - bellman_match_objective(train, sm, ens, GAMMA)) / (2 * h)
            worst = max(worst, abs(fd - g[idx]) / max(abs(fd), 1e-6))
    assert worst < 1e-4


def test_objective_convex_over_transition_mixtures_linear_phi():
    # replicating transitions realizes convex combinations of datasets, under
    # which per-predictor Bellman losses mix linearly and the squared-difference
    # objective must satisfy the midpoint inequality
    rng = np.random.default_rng(11)
    d0, nA = 2, 2
    fmap = fmap_for(d0, nA)
    train = make_train(10, d0, nA, rng, term_frac=0.0)
    ens = sample_ensemble_H(PredictorArch("linear", fmap), 6, None, 5)

    def replicate(syn, j):
        return SyntheticOfflineDataset(
            syn.env_name, syn.gamma, syn.reward_range,
            np.tile(syn.nt_s, (j, 1)), np.tile(syn.nt_a, (j, 1)),
            np.tile(syn.nt_r, j), np.tile(syn.nt_sn, (j, 1)),
            syn.t_s, syn.t_a, syn.t_r)

    def concat(a, b):
        return SyntheticOfflineDataset(
            a.env_name, a.gamma, a.reward_range,
            np.vstack([a.nt_s, b.nt_s]), np.vstack([a.nt_a, b.nt_a]),
            np.concatenate([a.nt_r, b.nt_r]), np.vstack([a.nt_sn, b.nt_sn]),
            a.t_s, a.t_a, a.t_r)

    for _ in range(50):
        a = make_syn(rng, 3, 0, d0, nA)
        b = make_syn(rng, 3, 0, d0, nA)
        j, l = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        alpha = j / (j + l)
        mix = concat(replicate(a, j), replicate(b, l))
        lhs = bellman_match_objective(train, mix, ens, GAMMA)
        rhs = (alpha * bellman_match_objective(train, a, ens, GAMMA)
               + (1 - alpha) * bellman_match_objective(train, b, ens, GAMMA))
        assert lhs <= rhs + 1e-9


# -- decomposable feature map ------------------------------------------------------------


def test_max_identity_holds_for_concat_onehot():
    rng = np.random.default_rng(12)
    fmap = fmap_for(4, 3)
    for _ in range(5):
        v = rng.normal(size=fmap.dim)
        states = rng.normal(size=(100, 4))
        assert decomposable_max_identity_check(v, states, range(3), fmap)


def test_max_identity_single_action_degenerate():
    rng = np.random.default_rng(13)
    fmap = fmap_for(3, 1)
    v = rng.normal(size=fmap.dim)
    assert decomposable_max_identity_check(v, rng.normal(size=(10, 3)), [0], fmap)


def test_max_identity_fails_for_quadratic_coupling():
    # phi with a state-action product term is not additively decomposable
    rng = np.random.default_rng(14)
    d0, nA = 2, 2

    def phi(states, onehot):
        base = np.hstack([states, onehot])
        coupling = states[:, :1] * onehot[:, :1]
        return np.hstack([base, coupling])

    def phi1(states):
        states = np.atleast_2d(states)
        return np.hstack([states, np.zeros((len(states), nA + 1))])

    def phi2(onehot):
        onehot = np.atleast_2d(onehot)
        return np.hstack([np.zeros((len(onehot), d0)), onehot,
                          np.zeros((len(onehot), 1))])

    v = rng.normal(size=d0 + nA + 1)
    v[-1] = 2.0  # make the coupling term matter
    states = rng.normal(size=(50, d0)) + 1.0
    assert not decomposable_max_identity_check(v, states, range(nA), (phi, phi1, phi2))


def test_mean_constraint_residual_zero_on_self():
    rng = np.random.default_rng(15)
    train = make_train(10, 3, 2, rng, term_frac=0.0)
    syn = synthetic_from_dataset(train, reward_range=(0.0, 1.0))
    resid = mean_constraint_residual(train, syn, fmap_for(3, 2))
    np.testing.assert_allclose(resid, 0.0, atol=1e-12)


def test_mean_constraint_residual_single_shift():
    rng = np.random.default_rng(16)
    train = make_train(8, 3, 2, rng, term_frac=0.0)
    syn = synthetic_from_dataset(train, reward_range=(0.0, 1.0))
    delta = 0.7
    syn.nt_s = syn.nt_s.copy()
    syn.nt_s[0, 0] += delta
    resid = mean_constraint_residual(train, syn, fmap_for(3, 2))
    assert abs(resid[0] - delta / len(syn.nt_r)) < 1e-12
    np.testing.assert_allclose(resid[1:], 0.0, atol=1e-12)


def test_mean_constraint_project_zeroes_residual():
    rng = np.random.default_rng(17)
    fmap = fmap_for(3, 2)
    train = make_train(20, 3, 2, rng, term_frac=0.0)
    syn = make_syn(rng, 6, 0, 3, 2, reward_range=(-10.0, 10.0))
    fixed = mean_constraint_project(syn, train, fmap)
    resid = mean_constraint_residual(train, fixed, fmap)
    assert np.abs(resid).max() < 1e-10
    # idempotent once satisfied
    again = mean_constraint_project(fixed, train, fmap)
    np.testing.assert_allclose(again.nt_s, fixed.nt_s, atol=1e-12)


def test_mean_constraint_reward_redistribution():
    rng = np.random.default_rng(18)
    fmap = fmap_for(2, 2)
    train = make_train(10, 2, 2, rng, term_frac=0.0)
    syn = synthetic_from_dataset(train, reward_range=(0.0, 1.0))
    # push the synthetic reward mean off by 0.2 with clamping headroom
    syn.nt_r = np.clip(syn.nt_r + 0.2, 0.0, 1.0)
    fixed = mean_constraint_project(syn, train, fmap)
    resid = mean_constraint_residual(train, fixed, fmap)
    assert np.abs(resid).max() < 1e-10
    assert fixed.nt_r.min() >= 0.0 and fixed.nt_r.max() <= 1.0


def test_supervised_equivalence_under_mean_constraint():
    # with linear predictors, linear decomposable phi and the mean constraint
    # enforced, the Bellman matching objective equals the supervised MSE
    # matching objective on points phi1(s) - gamma phi1(s') + phi2(a) with
    # labels r and regressors (v, -lambda)
    rng = np.random.default_rng(19)
    d0, nA = 3, 2
    fmap = fmap_for(d0, nA)
    train = make_train(20, d0, nA, rng, term_frac=0.0)
    syn = make_syn(rng, 6, 0, d0, nA, reward_range=(-10.0, 10.0))
    syn = mean_constraint_project(syn, train, fmap)
    ens = sample_ensemble_H(PredictorArch("linear", fmap), 5, None, 7)
    lhs = bellman_match_objective(train, syn, ens, GAMMA)

    def to_sup(S, A, R, SN):
        return make_dataset(fmap.phi1(S) - GAMMA * fmap.phi1(SN) + fmap.phi2(A), R)

    S = np.stack([t.s for t in train.transitions])
    A = fmap.onehot([t.a for t in train.transitions])
    R = np.array([t.r for t in train.transitions])
    SN = np.stack([t.s_next for t in train.transitions])
    sup_train = to_sup(S, A, R, SN)
    sup_syn = to_sup(syn.nt_s, syn.nt_a, syn.nt_r, syn.nt_sn)
    regs = np.stack([np.append(q.predictor.v, -q.lam) for q in ens])
    rhs = linreg.loss_match_objective(sup_train, sup_syn,
                                      linreg.RegressorEnsemble(regs, 0))
    assert abs(lhs - rhs) < 1e-9


# -- partition allocation and the optimization loop ------------------------------------------


def test_allocate_partition_sizes():
    assert allocate_partition_sizes(10, 90, 10) == (9, 1)
    assert allocate_partition_sizes(10, 99, 1) == (9, 1)  # nonempty gets a row
    assert allocate_partition_sizes(10, 100, 0) == (10, 0)
    assert allocate_partition_sizes(10, 0, 100) == (0, 10)
    assert allocate_partition_sizes(4, 50, 50) == (2, 2)
    # round-half-up on the terminated share: 3 * 0.5 = 1.5 -> 2
    assert allocate_partition_sizes(3, 50, 50) == (1, 2)
    with pytest.raises(ValueError):
        allocate_partition_sizes(11, 5, 5)


def test_distill_rl_zero_steps_keeps_initialization():
    rng = np.random.default_rng(20)
    train = make_train(12, 2, 2, rng)
    arch = PredictorArch("mlp", fmap_for(2, 2), hidden=(4, 4))
    cfg = RLDistillConfig(m=12, k=3, gamma=GAMMA, lr_grid=(1e-2,), max_steps=0, seed=0)
    syn, rep = distill_rl(train, cfg, arch)
    trace = rep.traces["per_lr"][0]["objective_trace"]
    assert len(trace) == 1
    assert rep.result["final_objective"] == trace[0]
    # m = n keeps the training partition sizes exactly
    nonterm, term = train.split_terminated()
    assert len(syn.nt_r) == len(nonterm) and len(syn.t_r) == len(term)


def test_distill_rl_objective_decreases_and_rewards_clamped():
    rng = np.random.default_rng(21)
    train = collect_random(make_env("cartpole"), 300, seed=0)
    arch = PredictorArch("mlp", fmap_for(4, 2), hidden=(6, 6))
    cfg = RLDistillConfig(m=8, k=4, gamma=0.99, lr_grid=(3e-2,), max_steps=60, seed=1)
    syn, rep = distill_rl(train, cfg, arch)
    trace = rep.traces["per_lr"][0]["objective_trace"]
    assert trace[-1] < trace[0]
    np.testing.assert_array_equal(syn.nt_r, 1.0)  # cartpole rewards pinned at +1
    nonterm, term = train.split_terminated()
    assert syn.ratio == (len(nonterm), len(term))


def test_distill_rl_deterministic():
    rng = np.random.default_rng(22)
    train = make_train(15, 2, 2, rng)
    arch = PredictorArch("mlp", fmap_for(2, 2), hidden=(4, 4))
    cfg = RLDistillConfig(m=6, k=3, gamma=GAMMA, lr_grid=(1e-2, 1e-3), max_steps=20, seed=4)
    s1, r1 = distill_rl(train, cfg, arch, np.random.default_rng(4))
    s2, r2 = distill_rl(train, cfg, arch, np.random.default_rng(4))
    np.testing.assert_array_equal(s1.nt_s, s2.nt_s)
    assert r1.to_json() == r2.to_json()


def test_distill_rl_m_too_large_rejected():
    rng = np.random.default_rng(23)
    train = make_train(5, 2, 2, rng)
    arch = PredictorArch("mlp", fmap_for(2, 2), hidden=(4, 4))
    with pytest.raises(ValueError, match="exceeds"):
        distill_rl(train, RLDistillConfig(m=6, k=2, max_steps=1), arch)


def test_distill_rl_mean_constraint_path():
    rng = np.random.default_rng(24)
    train = make_train(20, 2, 2, rng, term_frac=0.0)
    fmap = fmap_for(2, 2)
    arch = PredictorArch("linear", fmap)
    cfg = RLDistillConfig(m=5, k=4, gamma=GAMMA, lr_grid=(1e-2,), max_steps=30,
                          seed=2, mean_constraint=True)
    syn, rep = distill_rl(train, cfg, arch)
    resid = mean_constraint_residual(train, syn, fmap)
    assert np.abs(resid).max() < 1e-9
