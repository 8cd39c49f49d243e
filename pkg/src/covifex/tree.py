"""Binary decision-tree machinery shared by every classifier.

Covers gini impurity, exhaustive weighted split search with midpoint
thresholds, CART growth, quantile histogram binning, and the two
second-order-gain tree growers used by the boosting learners.

Routing convention everywhere: a sample goes LEFT iff x[feature] < threshold.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class TreeConfig:
    max_depth: Optional[int] = None
    min_leaf: int = 1
    feature_subsample: Optional[int] = None
    criterion: str = "gini"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.min_leaf < 1:
            raise ValidationError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.criterion not in ("gini", "second_order_gain"):
            raise ValidationError(f"unknown criterion {self.criterion!r}")


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    impurity_decrease: float
    left_count: int
    right_count: int


@dataclass
class TreeNode:
    """Internal node (feature_index/threshold/left/right) or leaf.

    Classification leaves carry ``class_distribution`` (sums to 1);
    regression leaves used by the boosting growers carry ``value``.
    """

    feature_index: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    class_distribution: Optional[np.ndarray] = None
    value: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def count_nodes(self) -> int:
        if self.is_leaf:
            return 1
        return 1 + self.left.count_nodes() + self.right.count_nodes()

    def count_leaves(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.count_leaves() + self.right.count_leaves()


def gini(counts: Sequence[float]) -> float:
    """Gini impurity 1 - sum(p_k^2) of a per-class count vector."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise ValidationError("gini undefined for empty node (total count 0)")
    p = c / total
    return float(1.0 - np.dot(p, p))


def _check_training_arrays(X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> None:
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValidationError(f"y length {y.shape} does not match {X.shape[0]} rows")
    if weights.shape != (X.shape[0],):
        raise ValidationError("weights length does not match row count")
    if (weights < 0).any():
        raise ValidationError("weights must be nonnegative")
    if weights.sum() == 0:
        raise ValidationError("weights must not all be zero")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be binary {0, 1}")


def _best_gini_split(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    min_leaf: int,
    feature_indices: np.ndarray,
) -> Optional[SplitCandidate]:
    """Weighted-gini split scan over the given feature columns.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values. Ties break toward the lowest feature index, then the lowest
    threshold. Returns None when no candidate strictly decreases impurity.
    """
    n = X.shape[0]
    if n < 2 * min_leaf:
        return None
    W = w.sum()
    w1_tot = float(w[y == 1].sum())
    w0_tot = float(W - w1_tot)
    parent_imp = 1.0 - (w0_tot / W) ** 2 - (w1_tot / W) ** 2

    cols = X[:, feature_indices]
    order = np.argsort(cols, axis=0, kind="stable")
    sx = np.take_along_axis(cols, order, axis=0)
    sy = y[order]
    sw = w[order]

    cw1 = np.cumsum(sw * sy, axis=0)[:-1]
    cw = np.cumsum(sw, axis=0)[:-1]
    cw0 = cw - cw1
    wr = W - cw
    wr1 = w1_tot - cw1
    wr0 = wr - wr1

    # impurity mass of a side: w_side * gini_side = w_side - (w0^2 + w1^2)/w_side
    with np.errstate(divide="ignore", invalid="ignore"):
        left_mass = cw - np.where(cw > 0, (cw0 ** 2 + cw1 ** 2) / np.where(cw > 0, cw, 1.0), 0.0)
        right_mass = wr - np.where(wr > 0, (wr0 ** 2 + wr1 ** 2) / np.where(wr > 0, wr, 1.0), 0.0)
    decrease = parent_imp - (left_mass + right_mass) / W

    pos = np.arange(1, n)[:, None]
    valid = (sx[:-1] < sx[1:]) & (pos >= min_leaf) & ((n - pos) >= min_leaf)
    decrease = np.where(valid, decrease, -np.inf)

    best_per_feat = decrease.max(axis=0)
    j = int(np.argmax(best_per_feat))  # first max: lowest feature index wins ties
    if not (best_per_feat[j] > 0.0) or not np.isfinite(best_per_feat[j]):
        return None
    i = int(np.argmax(decrease[:, j]))  # first max: lowest threshold wins ties
    thr = float(0.5 * (sx[i, j] + sx[i + 1, j]))
    return SplitCandidate(
        feature_index=int(feature_indices[j]),
        threshold=thr,
        impurity_decrease=float(best_per_feat[j]),
        left_count=i + 1,
        right_count=n - i - 1,
    )


def best_split_exhaustive(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    cfg: TreeConfig,
) -> Optional[SplitCandidate]:
    """Best weighted-gini split over all features (or a seeded subsample)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_training_arrays(X, y, weights)
    d = X.shape[1]
    k = cfg.feature_subsample
    if k is not None and k < d:
        rng = np.random.default_rng(cfg.rng_seed)
        feats = np.sort(rng.choice(d, size=k, replace=False))
    else:
        feats = np.arange(d)
    return _best_gini_split(X, y, weights, cfg.min_leaf, feats)


def build_cart(
    X: np.ndarray,
    y: np.ndarray,
    weights: Optional[np.ndarray],
    cfg: TreeConfig,
) -> TreeNode:
    """Grow a CART classifier: recurse until purity, depth bound, min_leaf,
    or no impurity-decreasing split remains."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape if X.ndim == 2 else (0, 0)
    if weights is None:
        weights = np.ones(len(y), dtype=np.float64)
    else:
        weights = np.asarray(weights, dtype=np.float64)
    _check_training_arrays(X, y, weights)

    rng = np.random.default_rng(cfg.rng_seed)
    k = cfg.feature_subsample

    def leaf(idx: np.ndarray) -> TreeNode:
        wsub = weights[idx]
        ysub = y[idx]
        wtot = wsub.sum()
        if wtot > 0:
            dist = np.array([wsub[ysub == 0].sum(), wsub[ysub == 1].sum()]) / wtot
        else:  # zero-weight branch: fall back to unweighted counts
            dist = np.bincount(ysub, minlength=2).astype(np.float64) / len(ysub)
        return TreeNode(class_distribution=dist)

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        ysub = y[idx]
        if (
            (cfg.max_depth is not None and depth >= cfg.max_depth)
            or len(idx) < 2 * cfg.min_leaf
            or (ysub == ysub[0]).all()
        ):
            return leaf(idx)
        if k is not None and k < d:
            feats = np.sort(rng.choice(d, size=k, replace=False))
        else:
            feats = np.arange(d)
        split = _best_gini_split(X[idx], ysub, weights[idx], cfg.min_leaf, feats)
        if split is None:
            return leaf(idx)
        go_left = X[idx, split.feature_index] < split.threshold
        node = TreeNode(feature_index=split.feature_index, threshold=split.threshold)
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return grow(np.arange(n), 0)


def tree_predict_proba(root: TreeNode, x: np.ndarray) -> np.ndarray:
    """Class distribution for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    node = root
    while not node.is_leaf:
        if x.shape[0] <= node.feature_index:
            raise ValidationError(
                f"input width {x.shape[0]} too small for feature {node.feature_index}"
            )
        node = node.left if x[node.feature_index] < node.threshold else node.right
    return node.class_distribution.copy()


def _route_apply(root: TreeNode, X: np.ndarray, out: np.ndarray, payload) -> None:
    # Vectorized routing: push the whole index set down, partitioning at
    # each internal node.
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = payload(node)
            continue
        go_left = X[idx, node.feature_index] < node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))


def tree_predict_proba_matrix(root: TreeNode, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty((X.shape[0], 2), dtype=np.float64)
    _route_apply(root, X, out, lambda node: node.class_distribution)
    return out


def tree_predict_value_matrix(root: TreeNode, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.float64)
    _route_apply(root, X, out, lambda node: node.value)
    return out


def histogram_bin(X: np.ndarray, n_bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Quantile-bin every column into at most ``n_bins`` bins.

    Returns (binned uint8 matrix, per-column ascending edge arrays).
    bin(x) counts the edges <= x, so binning is monotone and
    ``bin(x) <= b`` is exactly ``x < edges[b]``.
    """
    if not (2 <= n_bins <= 255):
        raise ValidationError(f"n_bins must be in [2, 255], got {n_bins}")
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    binned = np.empty((n, d), dtype=np.uint8)
    edges: list[np.ndarray] = []
    qs = np.arange(1, n_bins) / n_bins
    for j in range(d):
        col = X[:, j]
        e = np.unique(np.quantile(col, qs))
        e = e[e > col.min()] if e.size else e  # an edge at/below the min makes an empty bin
        binned[:, j] = np.searchsorted(e, col, side="right")
        edges.append(e)
    return binned, edges


def _grad_gain(gl, hl, gr, hr, g_tot, h_tot, lam):
    return 0.5 * (
        gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - g_tot ** 2 / (h_tot + lam)
    )


def _best_grad_split_exact(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, lam: float
) -> Optional[tuple[int, float, float]]:
    """Second-order-gain split over raw columns. Returns (feature, threshold,
    gain) or None if no strictly positive gain exists."""
    n = X.shape[0]
    if n < 2:
        return None
    g_tot = g.sum()
    h_tot = h.sum()

    order = np.argsort(X, axis=0, kind="stable")
    sx = np.take_along_axis(X, order, axis=0)
    cg = np.cumsum(g[order], axis=0)[:-1]
    ch = np.cumsum(h[order], axis=0)[:-1]

    gain = _grad_gain(cg, ch, g_tot - cg, h_tot - ch, g_tot, h_tot, lam)
    valid = sx[:-1] < sx[1:]
    gain = np.where(valid, gain, -np.inf)

    best_per_feat = gain.max(axis=0)
    j = int(np.argmax(best_per_feat))
    if not (best_per_feat[j] > 0.0) or not np.isfinite(best_per_feat[j]):
        return None
    i = int(np.argmax(gain[:, j]))
    thr = float(0.5 * (sx[i, j] + sx[i + 1, j]))
    return j, thr, float(best_per_feat[j])


def grow_levelwise_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    lam: float,
    max_depth: Optional[int],
) -> TreeNode:
    """Depth-bounded regression tree on exact splits; every node with a
    positive-gain split is expanded (level-wise growth). Leaf value is the
    damped Newton step -sum(g)/(sum(h) + lambda)."""

    def leaf(idx: np.ndarray) -> TreeNode:
        return TreeNode(value=float(-g[idx].sum() / (h[idx].sum() + lam)))

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        if (max_depth is not None and depth >= max_depth) or idx.size < 2:
            return leaf(idx)
        found = _best_grad_split_exact(X[idx], g[idx], h[idx], lam)
        if found is None:
            return leaf(idx)
        j, thr, _gain = found
        go_left = X[idx, j] < thr
        node = TreeNode(feature_index=j, threshold=thr)
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return grow(np.arange(X.shape[0]), 0)


_BIN_STRIDE = 256  # > max bin count, so feature j owns slots [j*256, (j+1)*256)


def _best_grad_split_binned(
    binned: np.ndarray,
    edges: list[np.ndarray],
    idx: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    lam: float,
) -> Optional[tuple[int, float, float, np.ndarray]]:
    """Best histogram split for the rows in ``idx``. Returns (feature,
    raw-space threshold, gain, go_left mask over idx) or None."""
    d = binned.shape[1]
    gs = g[idx]
    hs = h[idx]
    g_tot = gs.sum()
    h_tot = hs.sum()
    m = idx.size

    # one histogram pass over every (feature, bin) cell
    combined = (binned[idx].astype(np.int64) + np.arange(d) * _BIN_STRIDE).ravel()
    size = d * _BIN_STRIDE
    cnt = np.bincount(combined, minlength=size).reshape(d, _BIN_STRIDE)
    gb = np.bincount(combined, weights=np.repeat(gs, d), minlength=size).reshape(d, _BIN_STRIDE)
    hb = np.bincount(combined, weights=np.repeat(hs, d), minlength=size).reshape(d, _BIN_STRIDE)

    ccnt = np.cumsum(cnt, axis=1)[:, :-1]
    cg = np.cumsum(gb, axis=1)[:, :-1]
    ch = np.cumsum(hb, axis=1)[:, :-1]
    gain = _grad_gain(cg, ch, g_tot - cg, h_tot - ch, g_tot, h_tot, lam)

    n_edges = np.array([len(e) for e in edges])
    boundary = np.arange(_BIN_STRIDE - 1)
    valid = (ccnt > 0) & (ccnt < m) & (boundary[None, :] < n_edges[:, None])
    gain = np.where(valid, gain, -np.inf)

    flat = int(np.argmax(gain))  # row-major: lowest feature, then lowest bin, wins ties
    j, t = divmod(flat, _BIN_STRIDE - 1)
    if not (gain[j, t] > 0.0) or not np.isfinite(gain[j, t]):
        return None
    thr = float(edges[j][t])
    go_left = binned[idx, j] <= t
    return j, thr, float(gain[j, t]), go_left


def grow_leafwise_tree(
    binned: np.ndarray,
    edges: list[np.ndarray],
    g: np.ndarray,
    h: np.ndarray,
    lam: float,
    num_leaves: int,
) -> TreeNode:
    """Histogram regression tree grown best-leaf-first: repeatedly split the
    leaf with the globally largest gain until ``num_leaves`` is reached or no
    leaf has a positive-gain split."""
    if num_leaves < 1:
        raise ValidationError(f"num_leaves must be >= 1, got {num_leaves}")

    def leaf_value(idx: np.ndarray) -> float:
        return float(-g[idx].sum() / (h[idx].sum() + lam))

    root = TreeNode(value=leaf_value(np.arange(binned.shape[0])))
    if num_leaves == 1:
        return root

    counter = 0
    heap: list[tuple[float, int, TreeNode, np.ndarray, tuple]] = []

    def push(node: TreeNode, idx: np.ndarray) -> None:
        nonlocal counter
        found = _best_grad_split_binned(binned, edges, idx, g, h, lam)
        if found is not None:
            heapq.heappush(heap, (-found[2], counter, node, idx, found))
            counter += 1

    push(root, np.arange(binned.shape[0]))
    leaves = 1
    while heap and leaves < num_leaves:
        _neg_gain, _c, node, idx, (j, thr, _gain, go_left) = heapq.heappop(heap)
        left_idx = idx[go_left]
        right_idx = idx[~go_left]
        node.feature_index = j
        node.threshold = thr
        node.value = None
        node.left = TreeNode(value=leaf_value(left_idx))
        node.right = TreeNode(value=leaf_value(right_idx))
        leaves += 1
        push(node.left, left_idx)
        push(node.right, right_idx)
    return root
