"""Stage 3: gradient-boosted trees over beat descriptors.

Features per beat: the classifier logit/probability and embedding, the
recording-wide mean/median/std of the logit and of every embedding
component (constant within a recording), and RR-interval rate features
(current RR, recording mean/median RR, local mean RR over the nearest 100
and 10 beats, plus current-RR ratios against each aggregate).

The booster fits regression trees to logistic-loss gradients/hessians with
histogram split finding over quantile bins; validation logloss drives
early stopping and the model is truncated at its best iteration. No row or
feature subsampling, so training is deterministic by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .cls import BeatDescriptor
from .io import FormatError

DEFAULT_FALLBACK_RR_MS = 800.0


@dataclass
class GbdtConfig:
    max_trees: int = 1000
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 20
    n_bins: int = 256
    early_stopping_rounds: int = 50
    reg_lambda: float = 1.0
    seed: int = 0

    def validate(self):
        if min(self.max_trees, self.max_depth, self.min_samples_leaf,
               self.n_bins, self.early_stopping_rounds) < 1:
            raise ValueError("GBDT hyperparameters must be positive")
        if self.n_bins > 256:
            raise ValueError("n_bins must fit uint8 binning (<= 256)")
        if not (self.learning_rate > 0) or self.reg_lambda < 0:
            raise ValueError("learning_rate must be positive, reg_lambda >= 0")


# ---------------------------------------------------------------------------
# Feature construction

@dataclass
class FeatureMatrix:
    values: np.ndarray  # [n_beats, n_features] float64
    columns: list


def _local_window_mean(values: np.ndarray, k: int) -> np.ndarray:
    """Mean over the k index-nearest entries (centered, shifted at edges)."""
    n = values.size
    if n == 0:
        return values.copy()
    k = min(k, n)
    cs = np.concatenate(([0.0], np.cumsum(values)))
    lo = np.clip(np.arange(n) - k // 2, 0, n - k)
    hi = lo + k
    return (cs[hi] - cs[lo]) / k


def feature_columns(embedding_dim: int) -> list:
    cols = ["logit", "prob_wide"]
    cols += [f"e_{i}" for i in range(embedding_dim)]
    cols += ["rec_logit_mean", "rec_logit_median", "rec_logit_std"]
    for i in range(embedding_dim):
        cols += [f"rec_e_{i}_mean", f"rec_e_{i}_median", f"rec_e_{i}_std"]
    cols += ["rr_ms", "rec_rr_mean", "rec_rr_median", "rr_local100", "rr_local10",
             "rr_over_mean", "rr_over_median", "rr_over_local100", "rr_over_local10"]
    return cols


def build_features(descriptors: list[BeatDescriptor], positions, fs: float,
                   fallback_rr_ms: float = DEFAULT_FALLBACK_RR_MS) -> FeatureMatrix:
    """One row per beat. Pure function of (descriptors, positions, fs).

    The first beat has no preceding interval; its RR is imputed with the
    recording's median RR, or ``fallback_rr_ms`` when the recording has a
    single beat.
    """
    positions = np.asarray(positions, dtype=np.int64)
    n = len(descriptors)
    if n < 1:
        raise ValueError("build_features needs at least one beat")
    if positions.size != n:
        raise ValueError("descriptors and positions must align")
    d = descriptors[0].embedding.size
    logits = np.asarray([x.logit for x in descriptors])
    probs = np.asarray([x.prob_wide for x in descriptors])
    emb = np.stack([x.embedding for x in descriptors])  # [n, d]

    rr = np.empty(n)
    if n >= 2:
        rr[1:] = np.diff(positions) / fs * 1000.0
        rr[0] = np.median(rr[1:])
    else:
        rr[0] = fallback_rr_ms

    rr_mean = rr.mean()
    rr_median = float(np.median(rr))
    local100 = _local_window_mean(rr, 100)
    local10 = _local_window_mean(rr, 10)

    cols = feature_columns(d)
    out = np.empty((n, len(cols)))
    out[:, 0] = logits
    out[:, 1] = probs
    out[:, 2 : 2 + d] = emb
    base = 2 + d
    out[:, base + 0] = logits.mean()
    out[:, base + 1] = np.median(logits)
    out[:, base + 2] = logits.std()
    for i in range(d):
        out[:, base + 3 + 3 * i] = emb[:, i].mean()
        out[:, base + 4 + 3 * i] = np.median(emb[:, i])
        out[:, base + 5 + 3 * i] = emb[:, i].std()
    rbase = base + 3 + 3 * d
    out[:, rbase + 0] = rr
    out[:, rbase + 1] = rr_mean
    out[:, rbase + 2] = rr_median
    out[:, rbase + 3] = local100
    out[:, rbase + 4] = local10
    out[:, rbase + 5] = rr / rr_mean
    out[:, rbase + 6] = rr / rr_median
    out[:, rbase + 7] = rr / local100
    out[:, rbase + 8] = rr / local10
    if not np.isfinite(out).all():
        raise ValueError("feature matrix contains non-finite values")
    return FeatureMatrix(values=out, columns=cols)


# ---------------------------------------------------------------------------
# Quantile binning

@dataclass
class BinMapper:
    edges: list  # per feature, ascending float64 arrays (maybe empty)

    def transform(self, x: np.ndarray) -> np.ndarray:
        n, f = x.shape
        out = np.zeros((n, f), dtype=np.uint8)
        for j in range(f):
            if self.edges[j].size:
                out[:, j] = np.searchsorted(self.edges[j], x[:, j], side="right")
        return out


def fit_bins(x: np.ndarray, n_bins: int) -> BinMapper:
    """Midpoint edges between up to ``n_bins`` distinct quantile values.

    Features with <= n_bins distinct values get one bin per value, which
    makes histogram split finding exact on such data.
    """
    edges = []
    for j in range(x.shape[1]):
        uniq = np.unique(x[:, j])
        if uniq.size > n_bins:
            qs = np.quantile(x[:, j], np.linspace(0.0, 1.0, n_bins))
            uniq = np.unique(qs)
        if uniq.size <= 1:
            edges.append(np.zeros(0))
        else:
            edges.append((uniq[:-1] + uniq[1:]) / 2.0)
    return BinMapper(edges=edges)


# ---------------------------------------------------------------------------
# Tree growth

@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0


def _leaf_value(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    return -g_sum / (h_sum + reg_lambda)


def _gain(gl, hl, gr, hr, reg_lambda):
    def score(g, h):
        return g * g / (h + reg_lambda)
    return 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))


def _best_split(binned, grad, hess, idx, mapper: BinMapper, config: GbdtConfig):
    """(gain, feature, bin, threshold) of the best histogram split, or None."""
    hg, hh, cnt = kernels.histogram_gh(binned, grad, hess, idx, config.n_bins)
    n_feat = binned.shape[1]
    best = None
    for f in range(n_feat):
        edges = mapper.edges[f]
        if edges.size == 0:
            continue
        g_tot = hg[f].sum()
        h_tot = hh[f].sum()
        c_tot = cnt[f].sum()
        gl = hl = 0.0
        cl = 0
        max_bin = edges.size  # split "bin <= b" is meaningful for b < n_bins_used
        for b in range(max_bin):
            gl += hg[f, b]
            hl += hh[f, b]
            cl += cnt[f, b]
            if cl < config.min_samples_leaf or c_tot - cl < config.min_samples_leaf:
                continue
            gain = _gain(gl, hl, g_tot - gl, h_tot - hl, config.reg_lambda)
            if best is None or gain > best[0] + 1e-12:
                best = (gain, f, b, float(edges[b]))
    if best is None or best[0] <= 1e-12:
        return None
    return best


def _grow_tree(binned, grad, hess, idx, mapper, config) -> list[_Node]:
    nodes: list[_Node] = []

    def build(sample_idx, depth) -> int:
        g_sum = float(grad[sample_idx].sum())
        h_sum = float(hess[sample_idx].sum())
        node_id = len(nodes)
        nodes.append(_Node(value=_leaf_value(g_sum, h_sum, config.reg_lambda)))
        if depth >= config.max_depth or sample_idx.size < 2 * config.min_samples_leaf:
            return node_id
        split = _best_split(binned, grad, hess, sample_idx, mapper, config)
        if split is None:
            return node_id
        _, f, b, thr = split
        go_left = binned[sample_idx, f] <= b
        left_idx = sample_idx[go_left]
        right_idx = sample_idx[~go_left]
        if left_idx.size < config.min_samples_leaf or right_idx.size < config.min_samples_leaf:
            return node_id
        nodes[node_id].feature = f
        nodes[node_id].threshold = thr
        nodes[node_id].left = build(left_idx, depth + 1)
        nodes[node_id].right = build(right_idx, depth + 1)
        return node_id

    build(np.asarray(idx, dtype=np.int64), 0)
    return nodes


# ---------------------------------------------------------------------------
# Model

@dataclass
class GbdtModel:
    trees: list  # list of list[_Node]
    learning_rate: float
    n_features: int
    feature_names: list = field(default_factory=list)
    best_iteration: int = -1  # index of the last kept tree
    train_log: list = field(default_factory=list)

    def _flatten(self):
        feat, thr, left, right, value, offsets = [], [], [], [], [], [0]
        for tree in self.trees:
            base = len(feat)
            for nd in tree:
                feat.append(nd.feature)
                thr.append(nd.threshold)
                left.append(nd.left + base if nd.left >= 0 else -1)
                right.append(nd.right + base if nd.right >= 0 else -1)
                value.append(nd.value)
            offsets.append(len(feat))
        return (np.asarray(feat, dtype=np.int32), np.asarray(thr),
                np.asarray(left, dtype=np.int32), np.asarray(right, dtype=np.int32),
                np.asarray(value), np.asarray(offsets, dtype=np.int64))

    def raw_score(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected [n, {self.n_features}] features, got {x.shape}")
        if not self.trees:
            return np.zeros(x.shape[0])
        feat, thr, left, right, value, offsets = self._flatten()
        return self.learning_rate * kernels.predict_forest(
            x, feat, thr, left, right, value, offsets)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def gbdt_predict(model: GbdtModel, x: np.ndarray) -> np.ndarray:
    """Probabilities: sigmoid of the learning-rate-scaled tree sum."""
    return _sigmoid(model.raw_score(x))


def logloss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def train_gbdt(train_x: np.ndarray, train_y: np.ndarray,
               valid_x: np.ndarray | None, valid_y: np.ndarray | None,
               config: GbdtConfig,
               feature_names: list | None = None) -> GbdtModel:
    """Boosted logistic trees with early stopping on validation logloss."""
    config.validate()
    train_x = np.ascontiguousarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64)
    if train_x.ndim != 2 or train_y.shape != (train_x.shape[0],):
        raise ValueError("train matrix/labels shapes disagree")
    if not np.isfinite(train_x).all():
        raise ValueError("training features must be finite")
    classes = np.unique(train_y)
    if not np.isin(classes, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if classes.size < 2:
        raise ValueError("training labels are single-class; nothing to boost")
    has_valid = valid_x is not None and valid_y is not None
    if has_valid:
        valid_x = np.ascontiguousarray(valid_x, dtype=np.float64)
        valid_y = np.asarray(valid_y, dtype=np.float64)

    mapper = fit_bins(train_x, config.n_bins)
    binned = mapper.transform(train_x)
    n = train_x.shape[0]
    all_idx = np.arange(n, dtype=np.int64)

    model = GbdtModel(trees=[], learning_rate=config.learning_rate,
                      n_features=train_x.shape[1],
                      feature_names=list(feature_names or []))
    f_train = np.zeros(n)
    f_valid = np.zeros(valid_x.shape[0]) if has_valid else None
    best_loss = np.inf
    best_iter = -1
    log = []
    for it in range(config.max_trees):
        p = _sigmoid(f_train)
        grad = p - train_y
        hess = p * (1.0 - p)
        tree = _grow_tree(binned, grad, hess, all_idx, mapper, config)
        model.trees.append(tree)
        feat, thr, left, right, value, offsets = _flatten_one(tree)
        f_train += config.learning_rate * kernels.predict_forest(
            train_x, feat, thr, left, right, value, offsets)
        entry = {"iteration": it, "train_logloss": logloss(train_y, _sigmoid(f_train))}
        if has_valid:
            f_valid += config.learning_rate * kernels.predict_forest(
                valid_x, feat, thr, left, right, value, offsets)
            vl = logloss(valid_y, _sigmoid(f_valid))
            entry["valid_logloss"] = vl
            if vl < best_loss - 1e-12:
                best_loss = vl
                best_iter = it
            elif it - best_iter >= config.early_stopping_rounds:
                log.append(entry)
                break
        log.append(entry)
    if has_valid and best_iter >= 0:
        model.trees = model.trees[: best_iter + 1]
        model.best_iteration = best_iter
    else:
        model.best_iteration = len(model.trees) - 1
    model.train_log = log
    return model


def _flatten_one(tree: list[_Node]):
    feat = np.asarray([nd.feature for nd in tree], dtype=np.int32)
    thr = np.asarray([nd.threshold for nd in tree])
    left = np.asarray([nd.left for nd in tree], dtype=np.int32)
    right = np.asarray([nd.right for nd in tree], dtype=np.int32)
    value = np.asarray([nd.value for nd in tree])
    offsets = np.asarray([0, len(tree)], dtype=np.int64)
    return feat, thr, left, right, value, offsets


# ---------------------------------------------------------------------------
# Persistence: JSON with exact float round trip (repr-based)

def save_gbdt(model: GbdtModel, path) -> None:
    doc = {
        "format": "holterbeat-gbdt",
        "version": 1,
        "learning_rate": model.learning_rate,
        "n_features": model.n_features,
        "feature_names": model.feature_names,
        "best_iteration": model.best_iteration,
        "trees": [
            {
                "feature": [nd.feature for nd in tree],
                "threshold": [nd.threshold for nd in tree],
                "left": [nd.left for nd in tree],
                "right": [nd.right for nd in tree],
                "value": [nd.value for nd in tree],
            }
            for tree in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_gbdt(path) -> GbdtModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid GBDT model JSON: {exc}") from exc
    if doc.get("format") != "holterbeat-gbdt" or doc.get("version") != 1:
        raise FormatError(f"{path}: not a holterbeat-gbdt v1 file")
    trees = []
    for t in doc["trees"]:
        trees.append([
            _Node(feature=f, threshold=th, left=l, right=r, value=v)
            for f, th, l, r, v in zip(t["feature"], t["threshold"], t["left"],
                                      t["right"], t["value"])
        ])
    return GbdtModel(trees=trees, learning_rate=doc["learning_rate"],
                     n_features=doc["n_features"],
                     feature_names=list(doc.get("feature_names", [])),
                     best_iteration=doc.get("best_iteration", len(trees) - 1))
