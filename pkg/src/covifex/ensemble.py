"""The six tree-based classifiers behind one train/predict contract.

Kinds: a single CART, bootstrap bagging, random forest, SAMME boosting on
stumps, and two second-order gradient-boosting variants (depth-bounded
level-wise on exact splits, best-leaf-first on histogram bins).
"""
from __future__ import annotations

import math
import struct
import time
import zlib
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .data import FeatureMatrix, feature_matrix_validate
from .errors import FileFormatError, ValidationError
from .tree import (
    TreeConfig,
    TreeNode,
    build_cart,
    grow_leafwise_tree,
    grow_levelwise_tree,
    histogram_bin,
    tree_predict_proba_matrix,
    tree_predict_value_matrix,
)


class ClassifierKind(str, Enum):
    decision_tree = "decision_tree"
    random_forest = "random_forest"
    bagging = "bagging"
    adaboost = "adaboost"
    gbdt_levelwise = "gbdt_levelwise"
    gbdt_leafwise = "gbdt_leafwise"


ALL_KINDS = tuple(ClassifierKind)
_GBDT_KINDS = (ClassifierKind.gbdt_levelwise, ClassifierKind.gbdt_leafwise)
_N_CLASSES = 2


@dataclass(frozen=True)
class EnsembleConfig:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: Optional[int] = None
    num_leaves: int = 31
    n_bins: int = 255
    subsample_ratio: float = 1.0
    feature_subsample: Optional[int] = None
    rng_seed: int = 0
    l2_leaf_penalty: float = 1.0
    bootstrap: bool = True  # False + subsample_ratio 1.0 = identity resample (test hook)

    def __post_init__(self) -> None:
        if self.n_estimators < 0:
            raise ValidationError(f"n_estimators must be >= 0, got {self.n_estimators}")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValidationError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.num_leaves < 1:
            raise ValidationError(f"num_leaves must be >= 1, got {self.num_leaves}")
        if self.n_bins < 2:
            raise ValidationError(f"n_bins must be >= 2, got {self.n_bins}")
        if not (0.0 < self.subsample_ratio <= 1.0):
            raise ValidationError(f"subsample_ratio must be in (0, 1], got {self.subsample_ratio}")
        if self.feature_subsample is not None and self.feature_subsample < 1:
            raise ValidationError("feature_subsample must be >= 1 when set")
        if self.l2_leaf_penalty < 0:
            raise ValidationError(f"l2_leaf_penalty must be >= 0, got {self.l2_leaf_penalty}")


def default_config(kind: ClassifierKind, seed: int = 0) -> EnsembleConfig:
    """Per-kind training defaults (echoed into every report)."""
    kind = ClassifierKind(kind)
    base = EnsembleConfig(rng_seed=seed)
    if kind == ClassifierKind.decision_tree:
        return replace(base, n_estimators=1)
    if kind in (ClassifierKind.bagging, ClassifierKind.random_forest):
        return replace(base, n_estimators=100)
    if kind == ClassifierKind.adaboost:
        return replace(base, n_estimators=50)
    if kind == ClassifierKind.gbdt_levelwise:
        return replace(base, n_estimators=100, learning_rate=0.1, max_depth=6)
    return replace(base, n_estimators=100, learning_rate=0.1, num_leaves=31, n_bins=255)


@dataclass
class TrainedModel:
    kind: ClassifierKind
    feature_dim: int
    hyperparameters: EnsembleConfig
    trees: list[TreeNode]
    member_weights: np.ndarray  # per-member vote weights (SAMME alphas); ones elsewhere
    class_prior: np.ndarray  # training-set class distribution, prediction fallback
    initial_score: float = 0.0  # boosting log-odds offset
    train_time_s: float = 0.0  # wall clock; not part of the serialized model
    train_curve: Optional[list[float]] = None  # boosting per-round train log-loss


def samme_alpha(eps: float, n_classes: int = _N_CLASSES) -> float:
    """Stage weight ln((1-eps)/eps) + ln(K-1); eps is floored to keep a
    perfect weak learner finite."""
    eps = max(float(eps), 1e-10)
    return math.log((1.0 - eps) / eps) + math.log(n_classes - 1)


def samme_update(weights: np.ndarray, miss: np.ndarray, alpha: float) -> np.ndarray:
    """Multiply misclassified sample weights by exp(alpha), renormalize to 1."""
    w = weights * np.exp(alpha * miss.astype(np.float64))
    return w / w.sum()


def _sigmoid(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


def log_loss(scores: np.ndarray, y: np.ndarray) -> float:
    """Mean binary log-loss of raw scores, computed in a saturation-safe form."""
    return float(np.mean(np.logaddexp(0.0, scores) - y * scores))


def _member_seeds(seed: int, n: int) -> list[tuple[int, int]]:
    # Independent (bootstrap, tree) streams per member, stable across runs.
    out = []
    for child in np.random.SeedSequence(seed).spawn(n):
        boot, tree = child.spawn(2)
        out.append((int(boot.generate_state(1)[0]), int(tree.generate_state(1)[0])))
    return out


def _resample_indices(rng: np.random.Generator, n: int, cfg: EnsembleConfig) -> np.ndarray:
    m = max(1, round(cfg.subsample_ratio * n))
    if cfg.bootstrap:
        return rng.integers(0, n, size=m)
    if m >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=m, replace=False))


def _train_bagged(X, y, cfg: EnsembleConfig, per_split_features: Optional[int]) -> list[TreeNode]:
    if cfg.n_estimators < 1:
        raise ValidationError("bagged kinds need n_estimators >= 1")
    trees = []
    for boot_seed, tree_seed in _member_seeds(cfg.rng_seed, cfg.n_estimators):
        idx = _resample_indices(np.random.default_rng(boot_seed), len(y), cfg)
        tree_cfg = TreeConfig(
            max_depth=cfg.max_depth,
            min_leaf=1,
            feature_subsample=per_split_features,
            rng_seed=tree_seed,
        )
        trees.append(build_cart(X[idx], y[idx], None, tree_cfg))
    return trees


def _train_adaboost(X, y, cfg: EnsembleConfig) -> tuple[list[TreeNode], list[float]]:
    if cfg.n_estimators < 1:
        raise ValidationError("adaboost needs n_estimators >= 1")
    n = len(y)
    w = np.full(n, 1.0 / n)
    trees: list[TreeNode] = []
    alphas: list[float] = []
    for _boot_seed, tree_seed in _member_seeds(cfg.rng_seed, cfg.n_estimators):
        stump = build_cart(X, y, w, TreeConfig(max_depth=1, min_leaf=1, rng_seed=tree_seed))
        pred = np.argmax(tree_predict_proba_matrix(stump, X), axis=1)
        miss = pred != y
        eps = float(w[miss].sum())
        if eps >= 1.0 - 1.0 / _N_CLASSES:  # no better than chance: reject round, stop
            break
        alpha = samme_alpha(eps)
        trees.append(stump)
        alphas.append(alpha)
        if eps == 0.0:
            break
        w = samme_update(w, miss, alpha)
    return trees, alphas


def _train_gbdt(X, y, cfg: EnsembleConfig, leafwise: bool) -> tuple[list[TreeNode], float, list[float]]:
    if cfg.n_bins > 255:
        raise ValidationError(f"n_bins must be <= 255 for gradient boosting, got {cfg.n_bins}")
    yf = y.astype(np.float64)
    p = yf.mean()
    initial = math.log(p / (1.0 - p))
    scores = np.full(len(y), initial)
    lam = cfg.l2_leaf_penalty
    if leafwise:
        binned, edges = histogram_bin(X, cfg.n_bins)
    trees: list[TreeNode] = []
    curve: list[float] = []
    for _ in range(cfg.n_estimators):
        prob = _sigmoid(scores)
        g = prob - yf
        h = prob * (1.0 - prob)
        if leafwise:
            tree = grow_leafwise_tree(binned, edges, g, h, lam, cfg.num_leaves)
        else:
            tree = grow_levelwise_tree(X, g, h, lam, cfg.max_depth)
        trees.append(tree)
        scores = scores + cfg.learning_rate * tree_predict_value_matrix(tree, X)
        curve.append(log_loss(scores, yf))
    return trees, initial, curve


def train(kind: ClassifierKind, X: FeatureMatrix, cfg: EnsembleConfig) -> TrainedModel:
    """Fit one of the six classifier kinds on a validated feature matrix."""
    kind = ClassifierKind(kind)
    feature_matrix_validate(X)
    if X.n == 0:
        raise ValidationError("cannot train on an empty dataset")
    y = X.labels
    if len(np.unique(y)) < 2:
        raise ValidationError("degenerate labels: training set contains a single class")
    Xf = X.values.astype(np.float64)
    prior = np.bincount(y, minlength=2).astype(np.float64) / len(y)

    t0 = time.perf_counter()
    initial = 0.0
    curve: Optional[list[float]] = None
    if kind == ClassifierKind.decision_tree:
        tree_cfg = TreeConfig(max_depth=cfg.max_depth, min_leaf=1, rng_seed=cfg.rng_seed)
        trees = [build_cart(Xf, y, None, tree_cfg)]
        weights = np.ones(1)
    elif kind == ClassifierKind.bagging:
        trees = _train_bagged(Xf, y, cfg, per_split_features=None)
        weights = np.ones(len(trees))
    elif kind == ClassifierKind.random_forest:
        k = cfg.feature_subsample or math.ceil(math.sqrt(X.d))
        trees = _train_bagged(Xf, y, cfg, per_split_features=k)
        weights = np.ones(len(trees))
    elif kind == ClassifierKind.adaboost:
        trees, alphas = _train_adaboost(Xf, y, cfg)
        weights = np.asarray(alphas, dtype=np.float64)
    else:
        trees, initial, curve = _train_gbdt(Xf, y, cfg, leafwise=kind == ClassifierKind.gbdt_leafwise)
        weights = np.ones(len(trees))
    elapsed = time.perf_counter() - t0

    return TrainedModel(
        kind=kind,
        feature_dim=X.d,
        hyperparameters=cfg,
        trees=trees,
        member_weights=weights,
        class_prior=prior,
        initial_score=initial,
        train_time_s=elapsed,
        train_curve=curve,
    )


def _as_matrix(m: TrainedModel, x: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != m.feature_dim:
        raise ValidationError(
            f"input width {arr.shape[-1] if arr.ndim else 0} != model feature_dim {m.feature_dim}"
        )
    return arr, single


def predict_proba(m: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Class distribution(s) for a vector or matrix of features."""
    X, single = _as_matrix(m, x)
    n = X.shape[0]
    if m.kind in _GBDT_KINDS:
        scores = np.full(n, m.initial_score)
        lr = m.hyperparameters.learning_rate
        for tree in m.trees:
            scores += lr * tree_predict_value_matrix(tree, X)
        p1 = _sigmoid(scores)
        out = np.stack([1.0 - p1, p1], axis=1)
    elif m.kind == ClassifierKind.adaboost:
        if not m.trees:
            out = np.tile(m.class_prior, (n, 1))
        else:
            votes = np.zeros((n, _N_CLASSES))
            for tree, alpha in zip(m.trees, m.member_weights):
                pred = np.argmax(tree_predict_proba_matrix(tree, X), axis=1)
                votes[np.arange(n), pred] += alpha
            shifted = votes - votes.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            out = e / e.sum(axis=1, keepdims=True)
    else:
        acc = np.zeros((n, _N_CLASSES))
        for tree in m.trees:
            acc += tree_predict_proba_matrix(tree, X)
        out = acc / len(m.trees)
    return out[0] if single else out


def predict(m: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Hard label(s): argmax of predict_proba, ties resolved to class 0."""
    proba = predict_proba(m, x)
    if proba.ndim == 1:
        return int(proba[1] > proba[0])
    return (proba[:, 1] > proba[:, 0]).astype(np.int64)


# ---------------------------------------------------------------------------
# Model file format: little-endian, magic CVMD, version, kind tag, config
# block, flat node pools with u32 child offsets, trailing CRC32.

_MAGIC = b"CVMD"
_VERSION = 1
_KIND_TAGS = {k: i for i, k in enumerate(ALL_KINDS)}
_TAG_KINDS = {i: k for k, i in _KIND_TAGS.items()}
_NODE_INTERNAL = 0
_NODE_LEAF_CLASS = 1
_NODE_LEAF_VALUE = 2


def _flatten(root: TreeNode) -> list[TreeNode]:
    pool: list[TreeNode] = []
    stack = [root]
    while stack:
        node = stack.pop()
        pool.append(node)
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)
    return pool


def _pack_tree(root: TreeNode, out: bytearray) -> None:
    pool = _flatten(root)
    index = {id(node): i for i, node in enumerate(pool)}
    out += struct.pack("<I", len(pool))
    for node in pool:
        if node.is_leaf:
            if node.class_distribution is not None:
                out += struct.pack(
                    "<BIdIIdd",
                    _NODE_LEAF_CLASS, 0, 0.0, 0, 0,
                    float(node.class_distribution[0]),
                    float(node.class_distribution[1]),
                )
            else:
                out += struct.pack("<BIdIIdd", _NODE_LEAF_VALUE, 0, 0.0, 0, 0, float(node.value), 0.0)
        else:
            out += struct.pack(
                "<BIdIIdd",
                _NODE_INTERNAL,
                node.feature_index,
                node.threshold,
                index[id(node.left)],
                index[id(node.right)],
                0.0,
                0.0,
            )


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.buf):
            raise FileFormatError(f"truncated model file at offset {self.off}")
        vals = struct.unpack_from(fmt, self.buf, self.off)
        self.off += size
        return vals


def _unpack_tree(cur: _Cursor) -> TreeNode:
    (n_nodes,) = cur.take("<I")
    if n_nodes < 1:
        raise FileFormatError(f"empty tree pool at offset {cur.off}")
    raw = [cur.take("<BIdIIdd") for _ in range(n_nodes)]
    nodes = [TreeNode() for _ in range(n_nodes)]
    for node, (ntype, feat, thr, left, right, a, b) in zip(nodes, raw):
        if ntype == _NODE_INTERNAL:
            if left >= n_nodes or right >= n_nodes:
                raise FileFormatError(f"node offset out of range at offset {cur.off}")
            node.feature_index = int(feat)
            node.threshold = float(thr)
            node.left = nodes[left]
            node.right = nodes[right]
        elif ntype == _NODE_LEAF_CLASS:
            node.class_distribution = np.array([a, b])
        elif ntype == _NODE_LEAF_VALUE:
            node.value = float(a)
        else:
            raise FileFormatError(f"unknown node type {ntype} at offset {cur.off}")
    return nodes[0]


def _pack_config(cfg: EnsembleConfig) -> bytes:
    return struct.pack(
        "<IdiIIdiqdB",
        cfg.n_estimators,
        cfg.learning_rate,
        -1 if cfg.max_depth is None else cfg.max_depth,
        cfg.num_leaves,
        cfg.n_bins,
        cfg.subsample_ratio,
        -1 if cfg.feature_subsample is None else cfg.feature_subsample,
        cfg.rng_seed,
        cfg.l2_leaf_penalty,
        int(cfg.bootstrap),
    )


def _unpack_config(cur: _Cursor) -> EnsembleConfig:
    (n_est, lr, max_depth, num_leaves, n_bins, ratio, feat_sub, seed, lam, boot) = cur.take(
        "<IdiIIdiqdB"
    )
    return EnsembleConfig(
        n_estimators=n_est,
        learning_rate=lr,
        max_depth=None if max_depth < 0 else max_depth,
        num_leaves=num_leaves,
        n_bins=n_bins,
        subsample_ratio=ratio,
        feature_subsample=None if feat_sub < 0 else feat_sub,
        rng_seed=seed,
        l2_leaf_penalty=lam,
        bootstrap=bool(boot),
    )


def model_to_bytes(m: TrainedModel) -> bytes:
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<IB", _VERSION, _KIND_TAGS[m.kind])
    out += _pack_config(m.hyperparameters)
    out += struct.pack(
        "<Iddd",
        m.feature_dim,
        m.initial_score,
        float(m.class_prior[0]),
        float(m.class_prior[1]),
    )
    out += struct.pack("<I", len(m.trees))
    for tree, weight in zip(m.trees, m.member_weights):
        out += struct.pack("<d", float(weight))
        _pack_tree(tree, out)
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def model_from_bytes(buf: bytes) -> TrainedModel:
    if len(buf) < 12 or buf[:4] != _MAGIC:
        raise FileFormatError("not a model file (bad magic)")
    if len(buf) < 4 + struct.calcsize("<IB") + 4:
        raise FileFormatError(f"truncated model file at offset {len(buf)}")
    stored_crc = struct.unpack_from("<I", buf, len(buf) - 4)[0]
    actual_crc = zlib.crc32(buf[:-4])
    if stored_crc != actual_crc:
        raise FileFormatError(f"checksum mismatch at offset {len(buf) - 4}")
    cur = _Cursor(buf[:-4])
    cur.off = 4
    version, tag = cur.take("<IB")
    if version != _VERSION:
        raise FileFormatError(f"unsupported model-file version {version}, expected {_VERSION}")
    if tag not in _TAG_KINDS:
        raise FileFormatError(f"unknown classifier kind tag {tag}")
    kind = _TAG_KINDS[tag]
    cfg = _unpack_config(cur)
    feature_dim, initial, p0, p1 = cur.take("<Iddd")
    (n_members,) = cur.take("<I")
    trees = []
    weights = []
    for _ in range(n_members):
        (w,) = cur.take("<d")
        weights.append(w)
        trees.append(_unpack_tree(cur))
    if cur.off != len(cur.buf):
        raise FileFormatError(f"trailing bytes at offset {cur.off}")
    return TrainedModel(
        kind=kind,
        feature_dim=feature_dim,
        hyperparameters=cfg,
        trees=trees,
        member_weights=np.asarray(weights, dtype=np.float64),
        class_prior=np.array([p0, p1]),
        initial_score=initial,
    )


def model_save(m: TrainedModel, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(model_to_bytes(m))
    return path


def model_load(path: str | Path) -> TrainedModel:
    return model_from_bytes(Path(path).read_bytes())
