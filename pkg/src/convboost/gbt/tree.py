"""Second-order regression trees: closed-form leaves, structure score, exact greedy splits."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from ..errors import ConfigError, DataError, DegenerateLeafError, ShapeError

# Relative gap under which two candidate gains are treated as equal.
TIE_RTOL = 1e-12


@dataclass
class BoostConfig:
    learning_rate: float = 0.1
    max_depth: int = 15
    n_estimators: int = 500
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_hessian: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_hessian < 0:
            raise ConfigError("lambda, gamma and min_child_hessian must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def leaf_weight(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    """Optimal leaf output ``-G / (H + lambda)``."""
    denom = h_sum + reg_lambda
    if denom == 0:
        raise DegenerateLeafError("hessian sum + lambda is zero")
    return -g_sum / denom


def structure_score(leaf_stats: Iterable[tuple[float, float]], reg_lambda: float, gamma: float) -> float:
    """``-1/2 * sum_j G_j^2 / (H_j + lambda) + gamma * T``; lower is better."""
    total, n_leaves = 0.0, 0
    for g, h in leaf_stats:
        if h + reg_lambda == 0:
            raise DegenerateLeafError("hessian sum + lambda is zero")
        total += g * g / (h + reg_lambda)
        n_leaves += 1
    return -0.5 * total + gamma * n_leaves


def split_gain(left: tuple[float, float], right: tuple[float, float], reg_lambda: float, gamma: float) -> float:
    """Reduction in structure score from splitting a node into ``left`` and ``right``.

    Each side is a ``(G, H)`` pair of gradient and hessian sums.
    """
    gl, hl = left
    gr, hr = right
    if hl + reg_lambda == 0 or hr + reg_lambda == 0:
        raise DegenerateLeafError("hessian sum + lambda is zero on one side")
    return _gain(gl, hl, gr, hr, gl + gr, hl + hr, reg_lambda, gamma)


def _gain(gl, hl, gr, hr, g, h, lam, gamma):
    # Shared by the scalar API and the vectorized search so both agree bit for bit.
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam)) - gamma


class Tree:
    """Binary tree stored as flat node arrays; node 0 is the root.

    Internal nodes send ``x[feature] <= threshold`` to ``left``. Leaves have
    ``feature == -1`` and carry their output in ``value``.
    """

    def __init__(self, feature, threshold, left, right, value, gain=None, cover=None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        n = len(self.feature)
        self.gain = np.zeros(n) if gain is None else np.asarray(gain, dtype=np.float64)
        self.cover = np.zeros(n) if cover is None else np.asarray(cover, dtype=np.float64)

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls([-1], [0.0], [-1], [-1], [value])

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``x``."""
        x = np.atleast_2d(x)
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            f = np.where(internal, self.feature[node], 0)
            go_left = x[rows, f] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                nodes.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i]),
                              "gain": float(self.gain[i]), "cover": float(self.cover[i])})
            else:
                nodes.append({"leaf": float(self.value[i]), "cover": float(self.cover[i])})
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feat, thr, left, right, val, gain, cover = [], [], [], [], [], [], []
        for node in d["nodes"]:
            if "leaf" in node:
                feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1)
                val.append(float(node["leaf"])); gain.append(0.0)
            else:
                feat.append(int(node["feature"])); thr.append(float(node["threshold"]))
                left.append(int(node["left"])); right.append(int(node["right"]))
                val.append(0.0); gain.append(float(node.get("gain", 0.0)))
            cover.append(float(node.get("cover", 0.0)))
        n = len(feat)
        for i in range(n):
            if feat[i] >= 0 and not (0 < left[i] < n and 0 < right[i] < n):
                raise ValueError(f"node {i} has out-of-range children")
        return cls(feat, thr, left, right, val, gain, cover)


def _midpoint(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    t = a / 2 + b / 2
    # Guard against rounding onto b (adjacent floats): keep a <= t < b.
    return np.where((t >= a) & (t < b), t, a)


def build_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: BoostConfig) -> Tree:
    """Grow one tree by exact greedy search on gradient/hessian statistics.

    Nodes are expanded level by level. At each node every midpoint between
    consecutive distinct sorted values of every feature is scored with
    ``split_gain``; the best candidate is taken if its gain is strictly
    positive. Ties (gains within ``TIE_RTOL`` relative of the best) go to the
    lowest feature index, then the lowest threshold.
    Candidates leaving a side with hessian sum below ``min_child_hessian``
    are skipped.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be a [N, D] matrix, got {x.shape}")
    n, d = x.shape
    if n == 0:
        raise DataError("cannot build a tree on an empty sample set")
    if d == 0:
        raise DataError("features need at least one column")
    if g.shape != (n,) or h.shape != (n,):
        raise ShapeError("g and h must have one entry per sample")
    lam, gamma, mch = cfg.reg_lambda, cfg.gamma, cfg.min_child_hessian

    feature, threshold, left, right, value, gain, cover = [-1], [0.0], [-1], [-1], [0.0], [0.0], [0.0]
    node_of = np.zeros(n, dtype=np.int64)
    order = np.argsort(x, axis=0, kind="stable").T  # [D, N], grouped by node, ascending values
    frontier = np.array([0])
    rows = np.arange(d)[:, None]
    depth = 0

    while frontier.size:
        g_node = np.bincount(node_of[order[0]], weights=g[order[0]], minlength=len(feature))
        h_node = np.bincount(node_of[order[0]], weights=h[order[0]], minlength=len(feature))
        for nid in frontier:
            cover[nid] = float(h_node[nid])
        if depth >= cfg.max_depth:
            break

        m = order.shape[1]
        grp = node_of[order[0]]
        starts = np.flatnonzero(np.r_[True, grp[1:] != grp[:-1]])
        ends = np.r_[starts[1:], m]
        group_index = np.repeat(np.arange(len(starts)), ends - starts)
        gs, hs = g[order], h[order]
        vs = x[order, rows]
        cg, ch = np.cumsum(gs, axis=1), np.cumsum(hs, axis=1)
        base_g = np.where(starts > 0, cg[:, starts - 1], 0.0)[:, group_index]
        base_h = np.where(starts > 0, ch[:, starts - 1], 0.0)[:, group_index]
        gl, hl = cg - base_g, ch - base_h
        gt, ht = g_node[grp], h_node[grp]
        gr, hr = gt - gl, ht - hl

        valid = np.zeros((d, m), dtype=bool)
        valid[:, :-1] = (grp[1:] == grp[:-1]) & (vs[:, :-1] < vs[:, 1:])
        valid &= (hl >= mch) & (hr >= mch) & (hl + lam > 0) & (hr + lam > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = _gain(gl, hl, gr, hr, gt, ht, lam, gamma)
        gains = np.where(valid, gains, -np.inf)

        best = np.maximum.reduceat(gains, starts, axis=1).max(axis=0)
        # Equal partitions reached through different sort orders can differ in the
        # last bits; anything within rounding of the best counts as a tie.
        tol = np.where(np.isfinite(best), TIE_RTOL * np.maximum(1.0, np.abs(best)), 0.0)
        tied = gains >= (best - tol)[group_index]
        key = np.where(tied, np.arange(d)[:, None] * m + np.arange(m), d * m)
        first = np.minimum.reduceat(key, starts, axis=1).min(axis=0)

        new_frontier = []
        split_node = np.zeros(len(feature), dtype=bool)
        goes_left = np.zeros(n, dtype=bool)
        for k, nid in enumerate(grp[starts]):
            fd, j = divmod(int(first[k]), m)
            if not best[k] > 0 or not gains[fd, j] > 0:
                continue
            thr = float(_midpoint(vs[fd, j], vs[fd, j + 1]))
            feature[nid], threshold[nid], gain[nid] = fd, thr, float(gains[fd, j])
            for child in (len(feature), len(feature) + 1):
                feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
                value.append(0.0); gain.append(0.0); cover.append(0.0)
            left[nid], right[nid] = len(feature) - 2, len(feature) - 1
            new_frontier += [left[nid], right[nid]]
            split_node[nid] = True
            members = order[0, starts[k]:ends[k]]
            goes_left[members] = x[members, fd] <= thr
        if not new_frontier:
            break

        live = split_node[node_of]
        left_arr, right_arr = np.asarray(left), np.asarray(right)
        node_of = np.where(live, np.where(goes_left, left_arr[node_of], right_arr[node_of]), node_of)
        order = order[live[order]].reshape(d, -1)
        order = np.take_along_axis(order, np.argsort(node_of[order], axis=1, kind="stable"), axis=1)
        frontier = np.asarray(new_frontier)
        depth += 1

    # Leaf sums over every sample routed to each node, in sample order.
    tree = Tree(feature, threshold, left, right, value, gain, cover)
    leaf_of = tree.apply(x)
    g_leaf = np.bincount(leaf_of, weights=g, minlength=tree.n_nodes)
    h_leaf = np.bincount(leaf_of, weights=h, minlength=tree.n_nodes)
    for i in np.flatnonzero(tree.feature < 0):
        tree.value[i] = leaf_weight(g_leaf[i], h_leaf[i], lam)
        tree.cover[i] = h_leaf[i]
    return tree
