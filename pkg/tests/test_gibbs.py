import numpy as np
import pytest
from scipy import stats

from ssmrf.gibbs import ChainBank, build_adjacency, estimate_moments, gibbs_sweep, init_chains
from ssmrf.mrf_core import ModelSpec, ParamState, exact_moments, exact_state_probs, enumerate_sample, enumerate_states


def two_node_model(w=2.0, b=(-1.0, -1.0)):
    m = ModelSpec.complete(2)
    p = ParamState(np.array(b, dtype=float), np.array([w]), np.array([1], np.uint8))
    return m, p


# ---------------------------------------------------------------- init

def test_init_chains_reproducible():
    m = ModelSpec.complete(12)
    a = init_chains(m, 100, seed=7)
    b = init_chains(m, 100, seed=7)
    assert np.array_equal(a.states, b.states)
    c = init_chains(m, 100, seed=8)
    assert not np.array_equal(a.states, c.states)


def test_init_chains_requires_two():
    with pytest.raises(ValueError):
        init_chains(ModelSpec.complete(3), 1, seed=0)


def test_init_chains_streams_differ():
    m = ModelSpec.complete(50)
    bank = init_chains(m, 20, seed=3)
    # no two chains identical, and cross-chain bit agreement near 1/2
    for i in range(20):
        for j in range(i + 1, 20):
            assert not np.array_equal(bank.states[i], bank.states[j])
    agree = np.mean(bank.states[0] == bank.states[1])
    se = np.sqrt(0.25 / 50)
    assert abs(agree - 0.5) < 5 * se


# ---------------------------------------------------------------- adjacency

def test_adjacency_lists_active_edges_only():
    m = ModelSpec.complete(4)
    p = ParamState.zeros(m)
    p.edge_values[:] = np.arange(1.0, 7.0)
    p.edge_active[m.edge_id(0, 2)] = 1
    p.edge_active[m.edge_id(2, 3)] = 1
    indptr, nbr, wts = build_adjacency(p, m)
    assert indptr.tolist() == [0, 1, 1, 3, 4]
    assert nbr[indptr[0]:indptr[1]].tolist() == [2]
    assert sorted(nbr[indptr[2]:indptr[3]].tolist()) == [0, 3]
    assert wts[indptr[3]:indptr[4]].tolist() == [6.0]


# ---------------------------------------------------------------- sweeps

def test_sweep_rejects_zero():
    m = ModelSpec.complete(3)
    bank = init_chains(m, 4, seed=0)
    with pytest.raises(ValueError):
        gibbs_sweep(bank, ParamState.zeros(m), m, 0)


def test_sweep_keeps_states_binary():
    m = ModelSpec.complete(6)
    bank = init_chains(m, 8, seed=1)
    p = ParamState(np.linspace(-1, 1, 6), np.ones(m.n_edges),
                   (np.arange(m.n_edges) % 3 == 0).astype(np.uint8))
    gibbs_sweep(bank, p, m, 5)
    assert bank.states.dtype == np.uint8
    assert set(np.unique(bank.states)) <= {0, 1}


def test_sweep_deterministic_given_seed():
    m = ModelSpec.complete(5)
    p = ParamState(np.zeros(5), np.full(m.n_edges, 0.5),
                   np.ones(m.n_edges, np.uint8))
    a = gibbs_sweep(init_chains(m, 10, seed=11), p, m, 7)
    b = gibbs_sweep(init_chains(m, 10, seed=11), p, m, 7)
    assert np.array_equal(a.states, b.states)
    # split consumption: 3 + 4 sweeps must equal 7 at once
    c = init_chains(m, 10, seed=11)
    gibbs_sweep(c, p, m, 3)
    gibbs_sweep(c, p, m, 4)
    assert np.array_equal(a.states, c.states)


def test_sweep_uniform_model_site_marginals():
    # zero params make every conditional exactly Bernoulli(1/2)
    m = ModelSpec.complete(10)
    bank = init_chains(m, 40, seed=21)
    p = ParamState.zeros(m)
    total = 0.0
    count = 0
    for _ in range(50):
        gibbs_sweep(bank, p, m, 1)
        total += bank.states.sum()
        count += bank.states.size
    frac = total / count
    se = np.sqrt(0.25 / count)
    assert abs(frac - 0.5) < 4 * se


def test_sweep_two_node_frequencies_match_enumeration():
    m, p = two_node_model()
    probs = exact_state_probs(p, m)
    bank = init_chains(m, 50, seed=33)
    gibbs_sweep(bank, p, m, 100)
    counts = np.zeros(4)
    reps = 400
    for _ in range(reps):
        gibbs_sweep(bank, p, m, 10)  # thinned to damp autocorrelation
        idx = bank.states[:, 0].astype(int) + 2 * bank.states[:, 1].astype(int)
        counts += np.bincount(idx, minlength=4)
    res = stats.chisquare(counts, probs * counts.sum())
    assert res.pvalue > 0.01


def test_single_site_kernel_preserves_exact_distribution():
    # pi P_i = pi for the one-site heat bath kernel, checked densely
    rng = np.random.default_rng(5)
    m = ModelSpec.complete(4)
    p = ParamState(rng.normal(0, 1, 4), rng.normal(0, 1, m.n_edges),
                   (rng.random(m.n_edges) < 0.6).astype(np.uint8))
    pi = exact_state_probs(p, m)
    states = enumerate_states(4)
    th = p.theta_edges()
    for i in range(4):
        P = np.zeros((16, 16))
        for s, x in enumerate(states):
            acc = p.biases[i]
            for k, (a, b) in enumerate(m.candidate_edges):
                if th[k] == 0.0:
                    continue
                if a == i:
                    acc += th[k] * x[b]
                elif b == i:
                    acc += th[k] * x[a]
            pr = 1.0 / (1.0 + np.exp(-acc))
            s1 = s | (1 << i)
            s0 = s & ~(1 << i)
            P[s, s1] += pr
            P[s, s0] += 1.0 - pr
        assert np.allclose(pi @ P, pi, atol=1e-12)


def test_long_run_means_match_exact_moments():
    rng = np.random.default_rng(91)
    m = ModelSpec.complete(8)
    p = ParamState(rng.normal(0, 0.5, 8), rng.normal(0, 0.7, m.n_edges),
                   (rng.random(m.n_edges) < 0.25).astype(np.uint8))
    mom_exact = exact_moments(p, m)
    bank = init_chains(m, 200, seed=92)
    gibbs_sweep(bank, p, m, 300)
    est = estimate_moments(bank, m)
    # chains are independent, so the cross-chain standard error is exact
    se = np.sqrt(np.concatenate([mom_exact.node_var, mom_exact.edge_var]) / 200)
    want = np.concatenate([mom_exact.node_mean, mom_exact.edge_mean])
    assert np.all(np.abs(est.mean - want) < 3 * se + 1e-9)


# ---------------------------------------------------------------- moments

def test_moments_zero_variance_for_identical_chains():
    m = ModelSpec.complete(3)
    states = np.tile(np.array([1, 0, 1], np.uint8), (6, 1))
    bank = ChainBank(states=states, streams=[])
    est = estimate_moments(bank, m)
    assert np.all(est.var == 0.0)
    assert np.allclose(est.mean, [1, 0, 1, 0, 1, 0])


def test_moments_hand_computed():
    m = ModelSpec.complete(2)
    states = np.array([[0, 0], [0, 1], [1, 1], [1, 1]], np.uint8)
    est = estimate_moments(bank := ChainBank(states=states, streams=[]), m)
    assert est.n == 4
    # edge feature values are {0,0,1,1}: mean 1/2, var 1/3
    assert est.mean[2] == pytest.approx(0.5)
    assert est.var[2] == pytest.approx(1.0 / 3.0)
    assert est.mean[0] == pytest.approx(0.5)
    assert est.var[1] == pytest.approx(0.25)


def test_moments_invariant_to_chain_order():
    rng = np.random.default_rng(17)
    m = ModelSpec.complete(5)
    states = (rng.random((30, 5)) < 0.4).astype(np.uint8)
    a = estimate_moments(ChainBank(states=states, streams=[]), m)
    b = estimate_moments(ChainBank(states=states[::-1].copy(), streams=[]), m)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.var, b.var)


def test_moments_from_exact_bank_match_exact():
    rng = np.random.default_rng(55)
    m = ModelSpec.complete(6)
    p = ParamState(rng.normal(0, 0.5, 6), rng.normal(0, 0.6, m.n_edges),
                   (rng.random(m.n_edges) < 0.4).astype(np.uint8))
    mom = exact_moments(p, m)
    n = 5000
    bank = ChainBank(states=enumerate_sample(p, m, n, rng), streams=[])
    est = estimate_moments(bank, m)
    want = np.concatenate([mom.node_mean, mom.edge_mean])
    se = np.sqrt(np.concatenate([mom.node_var, mom.edge_var]) / n)
    assert np.all(np.abs(est.mean - want) < 4 * se + 1e-9)
