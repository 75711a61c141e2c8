"""Statistical jump model: K-state temporal clustering with a per-switch penalty.

Minimizes  sum_t 0.5*||x_t - theta_{s_t}||^2 + lambda * #{t : s_t != s_{t-1}}
by alternating a centroid update with an exact dynamic-programming state pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from regimealloc.errors import NumericalError

MAX_ITER = 100
DEFAULT_RESTARTS = 10
BULL, BEAR = 0, 1


@njit(cache=True)
def _viterbi(losses, lam):
    T, K = losses.shape
    value = losses[0].copy()
    back = np.zeros((T, K), dtype=np.int64)
    new = np.empty(K)
    for t in range(1, T):
        for k in range(K):
            best = np.inf
            arg = 0
            for j in range(K):
                c = value[j] + (lam if j != k else 0.0)
                if c < best:
                    best = c
                    arg = j
            new[k] = losses[t, k] + best
            back[t, k] = arg
        value[:] = new
    last = 0
    for k in range(1, K):
        if value[k] < value[last]:
            last = k
    states = np.empty(T, dtype=np.int64)
    states[T - 1] = last
    for t in range(T - 1, 0, -1):
        states[t - 1] = back[t, states[t]]
    return states, value[last]


def pointwise_loss(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """0.5 * squared distance of every row to every centroid (T x K)."""
    diff = X[:, None, :] - centroids[None, :, :]
    return 0.5 * np.einsum("tkd,tkd->tk", diff, diff)


def assign_states_from_losses(losses: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    losses = np.ascontiguousarray(losses, dtype=float)
    if losses.ndim != 2 or losses.shape[0] < 1 or losses.shape[1] < 1:
        raise ValueError("losses must be a non-empty T x K matrix")
    if lam < 0:
        raise ValueError("jump penalty must be non-negative")
    if np.isnan(losses).any():
        raise ValueError("NaN in losses")
    states, cost = _viterbi(losses, float(lam))
    return states, float(cost)


def assign_states(X, centroids, lam: float) -> tuple[np.ndarray, float]:
    """Globally optimal state sequence for fixed centroids (ties -> lowest state index)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    if X.shape[1] != centroids.shape[1]:
        raise ValueError(f"dimension mismatch: X has {X.shape[1]} columns, centroids {centroids.shape[1]}")
    if np.isnan(X).any() or np.isnan(centroids).any():
        raise ValueError("NaN in inputs")
    return assign_states_from_losses(pointwise_loss(X, centroids), lam)


def count_switches(states) -> int:
    s = np.asarray(states)
    return int(np.count_nonzero(s[1:] != s[:-1]))


def objective(X, centroids, states, lam: float) -> float:
    X = np.asarray(X, dtype=float)
    states = np.asarray(states)
    fit = 0.5 * np.sum((X - np.asarray(centroids)[states]) ** 2)
    return float(fit + lam * count_switches(states))


def kmeanspp_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding of K centroids from the rows of X."""
    T = len(X)
    idx = [int(rng.integers(T))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(T, p=d2 / total))
        else:
            nxt = int(rng.integers(T))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[idx].copy()


def update_centroids(X: np.ndarray, states: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Cluster means; an empty cluster jumps to the currently worst-fit row."""
    K = len(centroids)
    new = centroids.copy()
    counts = np.bincount(states, minlength=K)
    for k in range(K):
        if counts[k]:
            new[k] = X[states == k].mean(axis=0)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        own = 0.5 * np.sum((X - new[states]) ** 2, axis=1)
        order = np.argsort(-own, kind="stable")
        for k, row in zip(empty, order):
            new[k] = X[row]
    return new


@dataclass
class DescentResult:
    centroids: np.ndarray
    states: np.ndarray
    objective: float
    history: list[float]
    n_iter: int


def coordinate_descent(X, init_centroids, lam: float, max_iter: int = MAX_ITER) -> DescentResult:
    """Alternate state and centroid steps from the given centroids until S stops changing."""
    X = np.asarray(X, dtype=float)
    centroids = np.array(init_centroids, dtype=float)
    states, _ = assign_states(X, centroids, lam)
    history = [objective(X, centroids, states, lam)]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centroids = update_centroids(X, states, centroids)
        history.append(objective(X, centroids, states, lam))
        new_states, _ = assign_states(X, centroids, lam)
        history.append(objective(X, centroids, new_states, lam))
        if np.array_equal(new_states, states):
            break
        states = new_states
    return DescentResult(centroids, states, history[-1], history, n_iter)


@dataclass
class RegimeStats:
    mean: np.ndarray
    vol: np.ndarray
    cumulative: np.ndarray
    count: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.count == 0

    @property
    def bullish(self) -> int:
        # highest cumulative excess return; ties -> lowest index
        return int(np.argmax(self.cumulative))

    def to_dict(self) -> dict:
        return {
            "mean": _nan_to_none(self.mean),
            "vol": _nan_to_none(self.vol),
            "cumulative": self.cumulative.tolist(),
            "count": self.count.tolist(),
        }


def _nan_to_none(a) -> list:
    return [None if not np.isfinite(v) else float(v) for v in a]


def regime_statistics(states, excess_returns, K: int = 2) -> RegimeStats:
    """Per-state mean, population std, cumulative (summed) excess return and occupancy."""
    states = np.asarray(states)
    r = np.asarray(excess_returns, dtype=float)
    if states.shape != r.shape:
        raise ValueError("states and returns must have equal length")
    mean = np.full(K, np.nan)
    vol = np.full(K, np.nan)
    cum = np.zeros(K)
    count = np.zeros(K, dtype=int)
    for k in range(K):
        sel = r[states == k]
        count[k] = len(sel)
        if len(sel):
            mean[k] = sel.mean()
            vol[k] = sel.std()
            cum[k] = sel.sum()
    return RegimeStats(mean, vol, cum, count)


def transition_matrix(states, K: int) -> np.ndarray:
    """Row-normalized transition counts; rows of never-left states are uniform."""
    s = np.asarray(states, dtype=int)
    if len(s) and (s.min() < 0 or s.max() >= K):
        raise ValueError("state out of range")
    counts = np.zeros((K, K))
    np.add.at(counts, (s[:-1], s[1:]), 1.0)
    rows = counts.sum(axis=1, keepdims=True)
    return np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), 1.0 / K)


@dataclass
class JumpModelFit:
    centroids: np.ndarray
    states: np.ndarray
    lam: float
    objective: float
    labels: np.ndarray  # raw cluster index -> regime (0 bullish, 1 bearish for K=2)
    transition_matrix: np.ndarray
    regime_stats: RegimeStats | None = None
    history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def K(self) -> int:
        return len(self.centroids)

    def to_dict(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "states": self.states.tolist(),
            "lambda": self.lam,
            "objective": self.objective,
            "labels": self.labels.tolist(),
            "transition_matrix": self.transition_matrix.tolist(),
            "regime_stats": None if self.regime_stats is None else self.regime_stats.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def fit(X, K: int = 2, lam: float = 0.0, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
        returns=None, max_iter: int = MAX_ITER) -> JumpModelFit:
    """Best-of-``restarts`` coordinate descent.

    With ``returns`` (aligned excess returns) and K=2 the states are relabeled
    so 0 is the regime with the higher cumulative excess return.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be T x D")
    if len(X) <= K:
        raise ValueError(f"need more rows than states (T={len(X)}, K={K})")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if not np.isfinite(X).all():
        raise NumericalError("non-finite features")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        res = coordinate_descent(X, kmeanspp_init(X, K, rng), lam, max_iter)
        if best is None or res.objective < best.objective:
            best = res
    raw = best.states
    labels = np.arange(K)
    stats = None
    if returns is not None:
        stats = regime_statistics(raw, returns, K)
        if K == 2:
            bull = stats.bullish
            labels = np.array([0, 1]) if bull == 0 else np.array([1, 0])
            order = np.argsort(labels)
            stats = RegimeStats(stats.mean[order], stats.vol[order], stats.cumulative[order], stats.count[order])
    inverse = np.argsort(labels)
    states = labels[raw]
    centroids = best.centroids[inverse]
    return JumpModelFit(
        centroids=centroids,
        states=states,
        lam=float(lam),
        objective=best.objective,
        labels=labels,
        transition_matrix=transition_matrix(states, K),
        regime_stats=stats,
        history=best.history,
        n_iter=best.n_iter,
    )
