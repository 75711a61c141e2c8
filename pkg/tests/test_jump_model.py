import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from regimealloc import jump_model as jm


def brute_force(losses, lam):
    T, K = losses.shape
    best = np.inf
    for seq in itertools.product(range(K), repeat=T):
        s = np.array(seq)
        c = losses[np.arange(T), s].sum() + lam * np.count_nonzero(s[1:] != s[:-1])
        best = min(best, c)
    return best


@given(arrays(float, st.tuples(st.integers(1, 7), st.integers(1, 3)), elements=st.floats(0, 5)),
       st.sampled_from([0.0, 0.3, 2.0, 10.0]))
def test_viterbi_matches_enumeration(losses, lam):
    states, cost = jm.assign_states_from_losses(losses, lam)
    assert cost == pytest.approx(brute_force(losses, lam), abs=1e-9)
    realized = losses[np.arange(len(losses)), states].sum() + lam * jm.count_switches(states)
    assert realized == pytest.approx(cost, abs=1e-9)


def test_ties_go_to_lowest_state():
    states, _ = jm.assign_states_from_losses(np.zeros((4, 3)), 1.0)
    assert states.tolist() == [0, 0, 0, 0]


def test_huge_penalty_gives_a_single_segment(rng):
    X = rng.normal(size=(60, 2))
    states, _ = jm.assign_states(X, X[:2], 1e9)
    assert jm.count_switches(states) == 0


def test_assign_states_input_errors():
    with pytest.raises(ValueError, match="dimension"):
        jm.assign_states(np.zeros((3, 2)), np.zeros((2, 3)), 1.0)
    with pytest.raises(ValueError):
        jm.assign_states(np.array([[np.nan, 0.0]]), np.zeros((2, 2)), 1.0)
    with pytest.raises(ValueError):
        jm.assign_states_from_losses(np.zeros((3, 2)), -1.0)


def test_empty_cluster_reseeded_to_worst_row():
    X = np.array([[0.0], [0.1], [5.0]])
    cent = jm.update_centroids(X, np.array([0, 0, 0]), np.array([[0.0], [9.0]]))
    assert cent[1, 0] == 5.0


@given(st.integers(0, 10_000), st.sampled_from([0.0, 1.0, 10.0]))
def test_descent_history_never_increases(seed, lam):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(-1, 1, (40, 2)), rng.normal(1, 1, (40, 2))])
    res = jm.coordinate_descent(X, jm.kmeanspp_init(X, 2, rng), lam)
    assert (np.diff(res.history) <= 1e-9).all()
    assert res.objective == pytest.approx(jm.objective(X, res.centroids, res.states, lam))


def test_fit_recovers_planted_segments_and_labels_bull_first(rng):
    X = np.concatenate([rng.normal(0, 0.3, (50, 2)) + 2, rng.normal(0, 0.3, (50, 2)) - 2])
    rets = np.concatenate([np.full(50, -0.01), np.full(50, 0.01)])
    fit = jm.fit(X, K=2, lam=5.0, restarts=3, seed=1, returns=rets)
    assert fit.states.tolist() == [1] * 50 + [0] * 50
    assert fit.regime_stats.mean[0] == pytest.approx(0.01)
    assert fit.regime_stats.cumulative[0] > fit.regime_stats.cumulative[1]
    np.testing.assert_allclose(fit.centroids[0], X[50:].mean(axis=0))
    assert fit.transition_matrix[0, 0] == 1.0  # bull never left


def test_fit_is_deterministic_in_seed(rng):
    X = rng.normal(size=(120, 3))
    a = jm.fit(X, lam=2.0, seed=3)
    b = jm.fit(X, lam=2.0, seed=3)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.centroids, b.centroids)
    assert a.to_json() == b.to_json()


def test_fit_rejects_bad_inputs():
    with pytest.raises(ValueError):
        jm.fit(np.zeros((2, 1)), K=2)
    with pytest.raises(ValueError):
        jm.fit(np.zeros((10, 1)), restarts=0)


def test_regime_statistics_empty_state_has_nan_mean():
    stats = jm.regime_statistics(np.zeros(5, dtype=int), np.arange(5.0), 2)
    assert stats.count.tolist() == [5, 0]
    assert np.isnan(stats.mean[1]) and stats.empty.tolist() == [False, True]


def test_transition_matrix_rows_sum_to_one():
    P = jm.transition_matrix([0, 0, 1, 1, 0, 2], 3)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_allclose(P[2], 1 / 3)  # never left
