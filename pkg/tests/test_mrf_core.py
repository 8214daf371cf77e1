import numpy as np
import pytest
from scipy.special import logsumexp

from ssmrf.mrf_core import (
    Dataset,
    ExactTable,
    GroupQuery,
    ModelSpec,
    ParamState,
    conditional_log_likelihood,
    conditional_log_likelihood_rows,
    enumerate_sample,
    enumerate_states,
    exact_log_partition,
    exact_moments,
    exact_state_probs,
    feature_matrix,
    ising_to_boltzmann,
    log_unnormalized,
    transfer_matrix_log_partition,
    transfer_matrix_sample,
)


def random_state(m, rng, frac_active=0.5):
    p = ParamState(
        biases=rng.normal(0, 1, m.d),
        edge_values=rng.normal(0, 1, m.n_edges),
        edge_active=(rng.random(m.n_edges) < frac_active).astype(np.uint8),
    )
    return p


def naive_energy(x, p, m):
    # independent term-by-term summation, no vectorization
    total = 0.0
    for i in range(m.d):
        total += p.biases[i] * x[i]
    for k, (i, j) in enumerate(m.candidate_edges):
        if p.edge_active[k]:
            total += p.edge_values[k] * x[i] * x[j]
    return total


# ---------------------------------------------------------------- ModelSpec

def test_complete_spec_edge_order_is_upper_triangular():
    m = ModelSpec.complete(4)
    assert m.candidate_edges == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    assert m.n_edges == 6
    assert m.edge_id(2, 0) == 1


def test_spec_rejects_bad_edges():
    with pytest.raises(ValueError):
        ModelSpec(d=3, candidate_edges=((1, 1),))
    with pytest.raises(ValueError):
        ModelSpec(d=3, candidate_edges=((2, 1),))
    with pytest.raises(ValueError):
        ModelSpec(d=3, candidate_edges=((0, 3),))
    with pytest.raises(ValueError):
        ModelSpec(d=3, candidate_edges=((0, 1), (0, 1)))


def test_lattice_spec_has_full_candidate_set():
    m = ModelSpec.lattice(3, 4)
    assert m.d == 12
    assert m.n_edges == 66
    assert m.lattice_dims == (3, 4)
    ge = m.grid_edges()
    assert len(ge) == 3 * 3 + 2 * 4  # horizontal + vertical
    assert all(i < j for i, j in ge)
    with pytest.raises(ValueError):
        ModelSpec(d=4, candidate_edges=((0, 1),), lattice_dims=(2, 2))
    with pytest.raises(ValueError):
        ModelSpec(d=4, candidate_edges=ModelSpec.complete(4).candidate_edges,
                  lattice_dims=(2, 3))


def test_ten_by_ten_grid_counts():
    m = ModelSpec.lattice(10, 10)
    assert m.n_edges == 4950
    assert len(m.grid_edges()) == 180


# ---------------------------------------------------------------- energies

def test_log_unnormalized_zero_state_is_zero():
    m = ModelSpec.complete(5)
    p = random_state(m, np.random.default_rng(0))
    assert log_unnormalized(np.zeros(5, np.uint8), p, m) == 0.0


def test_log_unnormalized_single_active_edge():
    m = ModelSpec.complete(2)
    p = ParamState(np.zeros(2), np.array([1.7]), np.array([1], np.uint8))
    assert log_unnormalized(np.array([1, 1]), p, m) == pytest.approx(1.7)
    assert log_unnormalized(np.array([1, 0]), p, m) == 0.0


def test_log_unnormalized_matches_naive_sum():
    rng = np.random.default_rng(42)
    m = ModelSpec.complete(5)
    for _ in range(25):
        p = random_state(m, rng)
        x = (rng.random(5) < 0.5).astype(np.uint8)
        assert log_unnormalized(x, p, m) == pytest.approx(naive_energy(x, p, m), abs=1e-12)


def test_inactive_edge_equals_zero_valued_active_edge():
    rng = np.random.default_rng(3)
    m = ModelSpec.complete(4)
    p = random_state(m, rng)
    q = p.copy()
    k = 2
    p.edge_active[k] = 0
    q.edge_active[k] = 1
    q.edge_values[k] = 0.0
    for x in enumerate_states(4):
        assert log_unnormalized(x, p, m) == log_unnormalized(x, q, m)


# ---------------------------------------------------------------- partition

def test_log_partition_uniform_model():
    m = ModelSpec.complete(12)
    p = ParamState.zeros(m)
    assert exact_log_partition(p, m) == pytest.approx(12 * np.log(2), rel=1e-12)


def test_log_partition_two_nodes_by_hand():
    m = ModelSpec.complete(2)
    for w in (-2.0, 0.3, 1.5):
        p = ParamState(np.zeros(2), np.array([w]), np.array([1], np.uint8))
        assert exact_log_partition(p, m) == pytest.approx(np.log(3 + np.exp(w)), rel=1e-12)


def test_state_probs_sum_to_one():
    rng = np.random.default_rng(7)
    for d in (3, 5, 8, 12):
        m = ModelSpec.complete(d)
        p = random_state(m, rng)
        lz = exact_log_partition(p, m)
        lw = np.array([log_unnormalized(x, p, m) for x in enumerate_states(d)]) if d <= 8 else None
        probs = exact_state_probs(p, m)
        assert abs(probs.sum() - 1.0) < 1e-10
        if lw is not None:
            assert np.allclose(probs, np.exp(lw - lz), atol=1e-12)


def test_log_partition_matches_single_column_transfer():
    rng = np.random.default_rng(11)
    d = 6
    m = ModelSpec.complete(d)
    mlat = ModelSpec.lattice(d, 1)  # one column holds the whole graph
    for _ in range(5):
        p = random_state(m, rng)
        assert transfer_matrix_log_partition(p, mlat) == pytest.approx(
            exact_log_partition(p, m), rel=1e-12)


# ---------------------------------------------------------------- moments

def test_exact_moments_uniform_model():
    m = ModelSpec.complete(6)
    mom = exact_moments(ParamState.zeros(m), m)
    assert np.allclose(mom.node_mean, 0.5)
    assert np.allclose(mom.node_var, 0.25)
    assert np.allclose(mom.edge_mean, 0.25)
    assert np.allclose(mom.edge_var, 0.1875)


def test_exact_moments_match_sampling():
    rng = np.random.default_rng(19)
    m = ModelSpec.complete(5)
    p = random_state(m, rng)
    mom = exact_moments(p, m)
    n = 1_000_000
    X = enumerate_sample(p, m, n, rng).astype(np.float64)
    nm = X.mean(axis=0)
    em = (X[:, m.edge_i] * X[:, m.edge_j]).mean(axis=0)
    se_n = np.sqrt(mom.node_var / n)
    se_e = np.sqrt(mom.edge_var / n)
    assert np.all(np.abs(nm - mom.node_mean) < 4 * se_n + 1e-9)
    assert np.all(np.abs(em - mom.edge_mean) < 4 * se_e + 1e-9)


def test_enumerate_sample_deterministic():
    m = ModelSpec.complete(4)
    p = random_state(m, np.random.default_rng(2))
    a = enumerate_sample(p, m, 50, np.random.default_rng(5))
    b = enumerate_sample(p, m, 50, np.random.default_rng(5))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------- transfer matrix

def grid_state(mlat, rng, extra_pairs=0):
    """Random params active on grid edges plus a few legal extras."""
    p = ParamState.zeros(mlat)
    p.biases = rng.normal(0, 0.7, mlat.d)
    for i, j in mlat.grid_edges():
        k = mlat.edge_id(i, j)
        p.edge_active[k] = 1
        p.edge_values[k] = rng.normal(0, 0.8)
    rows, cols = mlat.lattice_dims
    added = 0
    for _ in range(200):
        if added >= extra_pairs:
            break
        i, j = rng.integers(0, mlat.d, 2)
        if i == j:
            continue
        i, j = min(i, j), max(i, j)
        if abs(int(i % cols) - int(j % cols)) <= 1:
            k = mlat.edge_id(i, j)
            if not p.edge_active[k]:
                p.edge_active[k] = 1
                p.edge_values[k] = rng.normal(0, 0.8)
                added += 1
    return p


@pytest.mark.parametrize("rows,cols", [(2, 2), (3, 3), (2, 4), (4, 3), (1, 5), (5, 1), (4, 4)])
def test_transfer_matches_enumeration(rows, cols):
    rng = np.random.default_rng(rows * 100 + cols)
    mlat = ModelSpec.lattice(rows, cols)
    p = grid_state(mlat, rng, extra_pairs=3)
    lz_t = transfer_matrix_log_partition(p, mlat)
    lz_e = exact_log_partition(p, mlat)
    assert lz_t == pytest.approx(lz_e, rel=1e-10)


def test_transfer_zero_params():
    mlat = ModelSpec.lattice(2, 2)
    assert transfer_matrix_log_partition(ParamState.zeros(mlat), mlat) == pytest.approx(
        4 * np.log(2), rel=1e-12)


def test_transfer_rejects_long_range_edge():
    mlat = ModelSpec.lattice(2, 3)
    p = ParamState.zeros(mlat)
    k = mlat.edge_id(0, 2)  # columns 0 and 2
    p.edge_active[k] = 1
    p.edge_values[k] = 0.5
    with pytest.raises(ValueError):
        transfer_matrix_log_partition(p, mlat)


def test_transfer_sample_matches_exact_distribution():
    rng = np.random.default_rng(23)
    mlat = ModelSpec.lattice(2, 3)
    p = grid_state(mlat, rng)
    n = 40_000
    X = transfer_matrix_sample(p, mlat, n, rng)
    idx = X.astype(np.int64) @ (1 << np.arange(mlat.d, dtype=np.int64))
    counts = np.bincount(idx, minlength=1 << mlat.d)
    probs = exact_state_probs(p, mlat)
    se = np.sqrt(probs * (1 - probs) * n)
    assert np.all(np.abs(counts - n * probs) < 5 * se + 3)


def test_transfer_sample_deterministic():
    mlat = ModelSpec.lattice(3, 3)
    p = grid_state(mlat, np.random.default_rng(4))
    a = transfer_matrix_sample(p, mlat, 64, np.random.default_rng(9))
    b = transfer_matrix_sample(p, mlat, 64, np.random.default_rng(9))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------- conditional scores

def test_cll_whole_graph_equals_joint():
    rng = np.random.default_rng(31)
    m = ModelSpec.complete(6)
    p = random_state(m, rng)
    x = (rng.random(6) < 0.5).astype(np.uint8)
    lz = exact_log_partition(p, m)
    want = log_unnormalized(x, p, m) - lz
    got = conditional_log_likelihood(p, m, GroupQuery(tuple(range(6)), x))
    assert got == pytest.approx(want, rel=1e-12)


def test_cll_uniform_model_group_of_nine():
    m = ModelSpec.lattice(4, 3)
    p = ParamState.zeros(m)
    x = np.zeros(12, np.uint8)
    got = conditional_log_likelihood(p, m, GroupQuery(tuple(range(9)), x))
    assert got == pytest.approx(9 * np.log(0.5), rel=1e-12)


def test_cll_matches_bruteforce_ratio():
    rng = np.random.default_rng(37)
    m = ModelSpec.complete(6)
    for _ in range(10):
        p = random_state(m, rng)
        x = (rng.random(6) < 0.5).astype(np.uint8)
        group = tuple(sorted(rng.choice(6, size=3, replace=False).tolist()))
        probs = exact_state_probs(p, m)
        states = enumerate_states(6)
        rest = [i for i in range(6) if i not in group]
        match_ctx = np.all(states[:, rest] == x[rest], axis=1)
        match_full = match_ctx & np.all(states[:, list(group)] == x[list(group)], axis=1)
        want = np.log(probs[match_full].sum()) - np.log(probs[match_ctx].sum())
        got = conditional_log_likelihood(p, m, GroupQuery(group, x))
        assert got == pytest.approx(want, rel=1e-10)


def test_cll_ignores_edges_outside_blanket():
    m = ModelSpec.complete(8)
    rng = np.random.default_rng(41)
    p = random_state(m, rng, frac_active=0.3)
    # keep the far corner of the graph detached from the group's terms
    k_far = m.edge_id(6, 7)
    p.edge_active[k_far] = 1
    x = (rng.random(8) < 0.5).astype(np.uint8)
    q = GroupQuery((0, 1), x)
    a = conditional_log_likelihood(p, m, q)
    p2 = p.copy()
    p2.edge_values[k_far] += 3.14
    b = conditional_log_likelihood(p2, m, q)
    assert abs(a - b) < 1e-12


def test_cll_rows_vectorization_matches_scalar():
    rng = np.random.default_rng(43)
    m = ModelSpec.complete(7)
    p = random_state(m, rng)
    rows = (rng.random((20, 7)) < 0.5).astype(np.uint8)
    group = (1, 4, 6)
    got = conditional_log_likelihood_rows(p, m, rows, group)
    want = [conditional_log_likelihood(p, m, GroupQuery(group, r)) for r in rows]
    assert np.allclose(got, want, rtol=1e-12)


def test_cll_group_validation():
    m = ModelSpec.complete(20)
    p = ParamState.zeros(m)
    x = np.zeros(20, np.uint8)
    with pytest.raises(ValueError):
        conditional_log_likelihood(p, m, GroupQuery(tuple(range(17)), x))
    with pytest.raises(ValueError):
        conditional_log_likelihood(p, m, GroupQuery((1, 1), x))


# ---------------------------------------------------------------- conversions

def test_spin_conversion_two_nodes():
    m = ModelSpec.complete(2)
    p = ising_to_boltzmann(np.array([0.5]), np.zeros(2), m)
    assert p.edge_values[0] == pytest.approx(2.0)
    assert np.allclose(p.biases, [-1.0, -1.0])
    assert p.edge_active[0] == 1


def test_spin_conversion_fields_only():
    m = ModelSpec.complete(3)
    h = np.array([0.3, -1.2, 0.0])
    p = ising_to_boltzmann(np.zeros(3), h, m)
    assert np.allclose(p.biases, 2 * h)
    assert np.all(p.edge_values == 0)
    assert np.all(p.edge_active == 0)


def test_spin_conversion_preserves_distribution():
    rng = np.random.default_rng(53)
    m = ModelSpec.complete(5)
    J = np.where(rng.random(m.n_edges) < 0.4, rng.normal(0, 0.6, m.n_edges), 0.0)
    h = rng.normal(0, 0.4, 5)
    p = ising_to_boltzmann(J, h, m)
    probs01 = exact_state_probs(p, m)
    states = enumerate_states(5).astype(np.float64)
    spins = 2 * states - 1
    e = spins @ h + (spins[:, m.edge_i] * spins[:, m.edge_j]) @ J
    e -= e.max()
    w = np.exp(e)
    probs_pm = w / w.sum()
    assert np.allclose(probs01, probs_pm, atol=1e-12)


# ---------------------------------------------------------------- datasets

def test_dataset_sufficient_statistics_match_bruteforce():
    rng = np.random.default_rng(61)
    m = ModelSpec.complete(6)
    X = (rng.random((40, 6)) < 0.4).astype(np.uint8)
    ds = Dataset.from_observations(X, m)
    assert ds.N == 40
    for i in range(6):
        assert ds.suff_node[i] == sum(int(row[i]) for row in X)
    for k, (i, j) in enumerate(m.candidate_edges):
        want = sum(int(row[i]) * int(row[j]) for row in X)
        assert ds.suff_edge[k] == want
        assert 0 <= ds.suff_edge[k] <= min(ds.suff_node[i], ds.suff_node[j]) <= ds.N


def test_dataset_rejects_nonbinary():
    m = ModelSpec.complete(3)
    with pytest.raises(ValueError):
        Dataset.from_observations(np.array([[0, 1, 2]]), m)
    with pytest.raises(ValueError):
        Dataset.from_observations(np.zeros((4, 2), np.uint8), m)


def test_dataset_moments():
    m = ModelSpec.complete(3)
    X = np.array([[1, 0, 1], [1, 1, 0], [0, 0, 0], [1, 0, 1]], np.uint8)
    mom = Dataset.from_observations(X, m).data_moments(m)
    assert np.allclose(mom.node_mean, [0.75, 0.25, 0.5])
    assert np.allclose(mom.node_var, [0.1875, 0.1875, 0.25])
    assert mom.edge_mean[m.edge_id(0, 2)] == pytest.approx(0.5)


# ---------------------------------------------------------------- exact table

def test_exact_table_matches_direct_computation():
    rng = np.random.default_rng(71)
    m = ModelSpec.complete(6)
    p = random_state(m, rng)
    t = ExactTable(m)
    t.set_params(p)
    assert t.logz == pytest.approx(exact_log_partition(p, m), rel=1e-12)
    mom = exact_moments(p, m)
    got = t.moments()
    assert np.allclose(got.node_mean, mom.node_mean, atol=1e-12)
    assert np.allclose(got.edge_mean, mom.edge_mean, atol=1e-12)


def test_exact_table_incremental_updates_track_truth():
    rng = np.random.default_rng(73)
    m = ModelSpec.complete(5)
    p = random_state(m, rng)
    t = ExactTable(m)
    t.set_params(p)
    theta = np.concatenate([p.biases, p.theta_edges()])
    # push enough deltas to cross the refresh boundary several times
    for step in range(200):
        e = int(rng.integers(m.n_edges))
        da = float(rng.normal(0, 0.3))
        predicted = t.logz + t.delta_logz_edge(e, da)
        t.apply_edge_delta(e, da)
        theta[m.d + e] += da
        assert t.logz == pytest.approx(predicted, rel=1e-12)
        if step % 25 == 0:
            lw = feature_matrix(m) @ theta
            assert t.logz == pytest.approx(float(logsumexp(lw)), rel=1e-9)
            mu = np.exp(lw - logsumexp(lw)) @ feature_matrix(m)
            assert np.allclose(t.feature_means(), mu, atol=1e-8)


def test_exact_table_trial_then_commit():
    rng = np.random.default_rng(79)
    m = ModelSpec.complete(4)
    t = ExactTable(m)
    p1 = random_state(m, rng)
    p2 = random_state(m, rng)
    t.set_params(p1)
    logw, logz = t.trial_logw(p2)
    assert t.logz == pytest.approx(exact_log_partition(p1, m))  # unchanged
    t.commit_logw(logw, logz)
    assert t.logz == pytest.approx(exact_log_partition(p2, m), rel=1e-12)


def test_enumeration_caps():
    with pytest.raises(ValueError):
        enumerate_states(21)
    with pytest.raises(ValueError):
        exact_log_partition(ParamState.zeros(ModelSpec.complete(21)), ModelSpec.complete(21))
    with pytest.raises(ValueError):
        transfer_matrix_log_partition(ParamState.zeros(ModelSpec.lattice(15, 1)),
                                      ModelSpec.lattice(15, 1))
