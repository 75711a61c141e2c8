"""Binary gradient-boosted regression trees on the logistic loss.

Second-order boosting with exact greedy split search. Trees are grown
level-wise; a row goes left when ``x[feature] < threshold``. Thresholds are
midpoints of adjacent distinct training values inside the node.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from numba import njit


@dataclass(frozen=True)
class GBDTParams:
    rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0


@njit(cache=True)
def _grow_tree(X, order, xsorted, g, h, max_depth, min_child_weight, reg_lambda, eta,
               feat, thr, left, right, value):
    n, d = X.shape
    node_of = np.zeros(n, dtype=np.int64)
    for i in range(feat.shape[0]):
        feat[i] = -1
        left[i] = -1
        right[i] = -1
        thr[i] = 0.0
        value[i] = 0.0
    # per-feature sorted row lists, compacted as rows settle into leaves
    rows = order.copy()
    vals = xsorted.copy()
    gs = np.empty((d, n))
    hs = np.empty((d, n))
    for f in range(d):
        for j in range(n):
            gs[f, j] = g[rows[f, j]]
            hs[f, j] = h[rows[f, j]]
    n_live = n
    active = np.zeros(1, dtype=np.int64)
    n_nodes = 1
    slot_of = np.full(feat.shape[0], -1, dtype=np.int64)
    for depth in range(max_depth + 1):
        m = active.shape[0]
        if m == 0:
            break
        for s in range(m):
            slot_of[active[s]] = s
        G = np.zeros(m)
        H = np.zeros(m)
        for j in range(n_live):
            s = slot_of[node_of[rows[0, j]]]
            G[s] += gs[0, j]
            H[s] += hs[0, j]
        parent = G * G / (H + reg_lambda)
        best_gain = np.zeros(m)
        best_feat = np.full(m, -1, dtype=np.int64)
        best_thr = np.zeros(m)
        if depth < max_depth:
            row_slot = np.empty(n, dtype=np.int64)
            for j in range(n_live):
                i = rows[0, j]
                row_slot[i] = slot_of[node_of[i]]
            GL = np.empty(m)
            HL = np.empty(m)
            last = np.empty(m)
            lam = reg_lambda
            for f in range(d):
                GL[:] = 0.0
                HL[:] = 0.0
                last[:] = -np.inf
                rf = rows[f]
                vf = vals[f]
                gf = gs[f]
                hf = hs[f]
                for j in range(n_live):
                    s = row_slot[rf[j]]
                    v = vf[j]
                    hl = HL[s]
                    gl = GL[s]
                    # the first row of a node has an empty left side (last is -inf)
                    if v > last[s] and last[s] > -np.inf and hl >= min_child_weight:
                        hr = H[s] - hl
                        if hr >= min_child_weight:
                            gr = G[s] - gl
                            a = hl + lam
                            b = hr + lam
                            gain = (gl * gl * b + gr * gr * a) / (a * b) - parent[s]
                            if gain > best_gain[s]:
                                best_gain[s] = gain
                                best_feat[s] = f
                                t = last[s] + 0.5 * (v - last[s])
                                if t <= last[s]:
                                    t = v
                                best_thr[s] = t
                    GL[s] = gl + gf[j]
                    HL[s] = hl + hf[j]
                    last[s] = v
        n_split = 0
        for s in range(m):
            if best_feat[s] >= 0:
                n_split += 1
        nxt = np.empty(2 * n_split, dtype=np.int64)
        c = 0
        for s in range(m):
            k = active[s]
            if best_feat[s] >= 0:
                feat[k] = best_feat[s]
                thr[k] = best_thr[s]
                left[k] = n_nodes
                right[k] = n_nodes + 1
                nxt[c] = n_nodes
                nxt[c + 1] = n_nodes + 1
                c += 2
                n_nodes += 2
            else:
                value[k] = -eta * G[s] / (H[s] + reg_lambda)
        for j in range(n_live):
            i = rows[0, j]
            k = node_of[i]
            if feat[k] >= 0:
                if X[i, feat[k]] < thr[k]:
                    node_of[i] = left[k]
                else:
                    node_of[i] = right[k]
            else:
                node_of[i] = -1
        if n_split == 0:
            break
        kept = 0
        for f in range(d):
            kept = 0
            for j in range(n_live):
                i = rows[f, j]
                if node_of[i] >= 0:
                    rows[f, kept] = i
                    vals[f, kept] = vals[f, j]
                    gs[f, kept] = gs[f, j]
                    hs[f, kept] = hs[f, j]
                    kept += 1
        n_live = kept
        active = nxt
    return n_nodes


@njit(cache=True)
def _predict_margin(X, base, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.full(n, base)
    for t in range(feat.shape[0]):
        for i in range(n):
            k = 0
            while feat[t, k] >= 0:
                if X[i, feat[t, k]] < thr[t, k]:
                    k = left[t, k]
                else:
                    k = right[t, k]
            out[i] += value[t, k]
    return out


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _logloss(y, margin) -> float:
    # log(1 + exp(-m)) for y=1, log(1 + exp(m)) for y=0
    signed = np.where(y > 0.5, margin, -margin)
    return float(np.mean(np.logaddexp(0.0, -signed)))


@dataclass
class BoostedTreesModel:
    base_score: float
    params: GBDTParams
    feature_names: list[str]
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    train_loss: list[float] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    def to_dict(self) -> dict:
        trees = []
        for t in range(self.n_trees):
            used = self.feature[t] >= 0
            n = int(max(np.max(np.where(used, self.right[t], 0)) + 1, 1))
            trees.append({
                "feature": self.feature[t, :n].tolist(),
                "threshold": self.threshold[t, :n].tolist(),
                "left": self.left[t, :n].tolist(),
                "right": self.right[t, :n].tolist(),
                "value": self.value[t, :n].tolist(),
            })
        return {
            "base_score": self.base_score,
            "params": asdict(self.params),
            "feature_names": self.feature_names,
            "trees": trees,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedTreesModel":
        params = GBDTParams(**d["params"])
        width = 2 ** (params.max_depth + 1) - 1
        nt = len(d["trees"])
        feat = np.full((nt, width), -1, dtype=np.int64)
        thr = np.zeros((nt, width))
        left = np.full((nt, width), -1, dtype=np.int64)
        right = np.full((nt, width), -1, dtype=np.int64)
        value = np.zeros((nt, width))
        for t, tree in enumerate(d["trees"]):
            n = len(tree["feature"])
            feat[t, :n] = tree["feature"]
            thr[t, :n] = tree["threshold"]
            left[t, :n] = tree["left"]
            right[t, :n] = tree["right"]
            value[t, :n] = tree["value"]
        return cls(d["base_score"], params, list(d["feature_names"]), feat, thr, left, right, value)


def _design(features, names=None) -> tuple[np.ndarray, list[str]]:
    if isinstance(features, pd.DataFrame):
        cols = sorted(features.columns) if names is None else names
        missing = [c for c in cols if c not in features.columns]
        if missing:
            raise ValueError(f"missing feature columns: {missing}")
        return np.ascontiguousarray(features[cols].to_numpy(dtype=float)), list(cols)
    X = np.ascontiguousarray(np.asarray(features, dtype=float))
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if names is None:
        names = [f"f{i}" for i in range(X.shape[1])]
    elif X.shape[1] != len(names):
        raise ValueError(f"dimension mismatch: expected {len(names)} features, got {X.shape[1]}")
    return X, list(names)


def train(features, targets, params: GBDTParams | None = None) -> BoostedTreesModel:
    """Fit a boosted-trees classifier; ``targets`` are 0/1 with 1 = positive class.

    DataFrame inputs are keyed by column name (sorted), so column order does not matter.
    """
    params = params or GBDTParams()
    X, names = _design(features)
    y = np.asarray(targets, dtype=float)
    if len(X) == 0:
        raise ValueError("no training rows")
    if len(y) != len(X):
        raise ValueError("features and targets differ in length")
    if not np.isfinite(X).all():
        raise ValueError("training features contain NaN")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("targets must be binary")
    rate = y.mean()
    if rate == 0.0 or rate == 1.0:
        raise ValueError("targets contain a single class")
    base = float(np.log(rate / (1.0 - rate)))
    width = 2 ** (params.max_depth + 1) - 1
    R = params.rounds
    feat = np.full((R, width), -1, dtype=np.int64)
    thr = np.zeros((R, width))
    left = np.full((R, width), -1, dtype=np.int64)
    right = np.full((R, width), -1, dtype=np.int64)
    value = np.zeros((R, width))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    xsorted = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    margin = np.full(len(X), base)
    losses = [_logloss(y, margin)]
    for r in range(R):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        _grow_tree(X, order, xsorted, g, h, params.max_depth, params.min_child_weight, params.reg_lambda,
                   params.learning_rate, feat[r], thr[r], left[r], right[r], value[r])
        margin = margin + _predict_margin(X, 0.0, feat[r:r + 1], thr[r:r + 1], left[r:r + 1],
                                          right[r:r + 1], value[r:r + 1])
        losses.append(_logloss(y, margin))
    return BoostedTreesModel(base, params, names, feat, thr, left, right, value, losses)


def predict_margin(model: BoostedTreesModel, features) -> np.ndarray:
    X, _ = _design(features, model.feature_names)
    return _predict_margin(X, model.base_score, model.feature, model.threshold,
                           model.left, model.right, model.value)


def predict_proba(model: BoostedTreesModel, features) -> np.ndarray:
    """Positive-class probability, clipped into the open interval (0, 1)."""
    p = _sigmoid(predict_margin(model, features))
    eps = np.finfo(float).eps
    return np.clip(p, eps, 1.0 - eps)


def classify(probabilities, threshold: float = 0.5) -> np.ndarray:
    """1 where probability >= threshold."""
    return (np.asarray(probabilities, dtype=float) >= threshold).astype(int)
