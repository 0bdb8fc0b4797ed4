"""Feature construction, histogram boosting, split-finder oracles."""

import numpy as np
import pytest

from holterbeat.cls import BeatDescriptor
from holterbeat.gbdt import (GbdtConfig, GbdtModel, _best_split, build_features,
                             feature_columns, fit_bins, gbdt_predict, load_gbdt,
                             logloss, save_gbdt, train_gbdt)


def make_descriptors(n, rng, d=4):
    out = []
    pos = np.cumsum(rng.integers(80, 140, size=n)) + 100
    for i in range(n):
        logit = float(rng.normal())
        out.append(BeatDescriptor(position=int(pos[i]),
                                  prob_wide=1.0 / (1.0 + np.exp(-logit)),
                                  logit=logit,
                                  embedding=rng.normal(size=d)))
    return out, pos.astype(np.int64)


# ---------------------------------------------------------------------------
# features

def test_features_constant_rr():
    rng = np.random.default_rng(0)
    n = 20
    pos = 100 + 100 * np.arange(n)  # RR = 100 samples = 800 ms at 125 Hz
    descriptors, _ = make_descriptors(n, rng)
    feats = build_features(descriptors, pos, fs=125.0)
    cols = feats.columns
    idx = {c: i for i, c in enumerate(cols)}
    vals = feats.values
    for c in ("rr_ms", "rec_rr_mean", "rec_rr_median", "rr_local100", "rr_local10"):
        assert np.allclose(vals[:, idx[c]], 800.0)
    for c in ("rr_over_mean", "rr_over_median", "rr_over_local100", "rr_over_local10"):
        assert np.allclose(vals[:, idx[c]], 1.0)


def test_features_constant_logit_zero_std():
    rng = np.random.default_rng(1)
    descriptors, pos = make_descriptors(15, rng)
    for d in descriptors:
        d.logit = 0.3
    feats = build_features(descriptors, pos, fs=125.0)
    idx = {c: i for i, c in enumerate(feats.columns)}
    assert np.allclose(feats.values[:, idx["rec_logit_std"]], 0.0)
    assert np.allclose(feats.values[:, idx["rec_logit_mean"]], 0.3)


def test_features_local_mean_brute_force_oracle():
    rng = np.random.default_rng(2)
    n = 500
    descriptors, pos = make_descriptors(n, rng)
    feats = build_features(descriptors, pos, fs=125.0)
    idx = {c: i for i, c in enumerate(feats.columns)}
    rr = feats.values[:, idx["rr_ms"]]

    def brute_local(values, k):
        out = np.empty(values.size)
        for i in range(values.size):
            lo = min(max(i - k // 2, 0), max(values.size - k, 0))
            hi = min(values.size, lo + k)
            out[i] = values[lo:hi].mean()
        return out

    assert np.array_equal(feats.values[:, idx["rr_local100"]], brute_local(rr, 100))
    assert np.array_equal(feats.values[:, idx["rr_local10"]], brute_local(rr, 10))


def test_features_pure_and_aggregates_constant():
    rng = np.random.default_rng(3)
    descriptors, pos = make_descriptors(40, rng)
    a = build_features(descriptors, pos, fs=125.0)
    b = build_features(descriptors, pos, fs=125.0)
    assert np.array_equal(a.values, b.values)
    assert a.columns == b.columns
    idx = {c: i for i, c in enumerate(a.columns)}
    for c in a.columns:
        if c.startswith("rec_"):
            col = a.values[:, idx[c]]
            assert np.all(col == col[0])


def test_features_single_beat_fallback():
    rng = np.random.default_rng(4)
    descriptors, pos = make_descriptors(1, rng)
    feats = build_features(descriptors, pos, fs=125.0, fallback_rr_ms=800.0)
    idx = {c: i for i, c in enumerate(feats.columns)}
    assert feats.values[0, idx["rr_ms"]] == 800.0


def test_feature_column_order_stable():
    assert feature_columns(2)[:6] == ["logit", "prob_wide", "e_0", "e_1",
                                      "rec_logit_mean", "rec_logit_median"]


# ---------------------------------------------------------------------------
# exact-split oracle

def exact_best_split(x, grad, hess, reg_lambda, min_leaf):
    """Scan every boundary between distinct raw values (oracle)."""
    n, f = x.shape
    g_tot, h_tot = grad.sum(), hess.sum()

    def score(g, h):
        return g * g / (h + reg_lambda)

    best = None
    for j in range(f):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        gs = grad[order]
        hs = hess[order]
        gl = hl = 0.0
        for i in range(n - 1):
            gl += gs[i]
            hl += hs[i]
            if xs[i] == xs[i + 1]:
                continue
            cl = i + 1
            if cl < min_leaf or n - cl < min_leaf:
                continue
            gain = 0.5 * (score(gl, hl) + score(g_tot - gl, h_tot - hl)
                          - score(g_tot, h_tot))
            thr = (xs[i] + xs[i + 1]) / 2.0
            if best is None or gain > best[0] + 1e-12:
                best = (gain, j, thr)
    return best


def test_histogram_split_equals_exact_le256_distinct():
    rng = np.random.default_rng(5)
    config = GbdtConfig(n_bins=256, min_samples_leaf=5)
    for trial in range(50):
        n = int(rng.integers(40, 400))
        f = int(rng.integers(1, 6))
        # <= 256 distinct values per feature
        base = rng.normal(size=(int(rng.integers(2, 200)), f))
        x = base[rng.integers(0, base.shape[0], size=n)]
        p = rng.uniform(0.05, 0.95, size=n)
        y = (rng.random(n) < 0.5).astype(np.float64)
        grad = p - y
        hess = p * (1.0 - p)
        mapper = fit_bins(x, config.n_bins)
        binned = mapper.transform(x)
        got = _best_split(binned, grad, hess, np.arange(n, dtype=np.int64),
                          mapper, config)
        want = exact_best_split(x, grad, hess, config.reg_lambda,
                                config.min_samples_leaf)
        if want is None:
            assert got is None
            continue
        assert got is not None
        assert got[1] == want[1], f"trial {trial}: feature differs"
        assert abs(got[0] - want[0]) < 1e-9 * max(1.0, abs(want[0]))
        # identical partition of the training rows
        assert np.array_equal(x[:, got[1]] < got[3], x[:, want[1]] < want[2])


def test_depth1_separable_reproduces_analytic_split():
    # 1-D, classes separated by a gap: the stump threshold must fall in it
    x = np.concatenate([np.linspace(0.0, 1.0, 30), np.linspace(2.0, 3.0, 30)])
    x = x.reshape(-1, 1)
    y = np.concatenate([np.zeros(30), np.ones(30)])
    config = GbdtConfig(max_trees=1, max_depth=1, min_samples_leaf=1,
                        learning_rate=1.0, early_stopping_rounds=10)
    model = train_gbdt(x, y, None, None, config)
    tree = model.trees[0]
    assert tree[0].feature == 0
    assert 1.0 < tree[0].threshold < 2.0
    probs = gbdt_predict(model, x)
    assert np.array_equal(probs > 0.5, y.astype(bool))
    # matches exact-oracle choice
    p0 = np.full(60, 0.5)
    want = exact_best_split(x, p0 - y, p0 * (1 - p0), config.reg_lambda, 1)
    assert abs(tree[0].threshold - want[2]) < 1e-12


def test_random_labels_validation_logloss_floor():
    rng = np.random.default_rng(6)
    n = 2000
    x = rng.normal(size=(n, 8))
    y = (rng.random(n) < 0.5).astype(np.float64)
    vx = rng.normal(size=(800, 8))
    vy = (rng.random(800) < 0.5).astype(np.float64)
    config = GbdtConfig(max_trees=120, max_depth=3, early_stopping_rounds=20)
    model = train_gbdt(x, y, vx, vy, config)
    best_valid = min(e["valid_logloss"] for e in model.train_log)
    assert best_valid >= np.log(2.0) - 0.02


def test_training_logloss_monotone_nonincreasing():
    rng = np.random.default_rng(7)
    n = 600
    x = rng.normal(size=(n, 5))
    y = (x[:, 0] + 0.5 * x[:, 1] + 0.3 * rng.normal(size=n) > 0).astype(np.float64)
    config = GbdtConfig(max_trees=60, max_depth=3, learning_rate=0.1,
                        early_stopping_rounds=60)
    model = train_gbdt(x, y, None, None, config)
    ll = [e["train_logloss"] for e in model.train_log]
    assert all(b <= a + 1e-12 for a, b in zip(ll, ll[1:]))


def test_zero_trees_predict_half():
    model = GbdtModel(trees=[], learning_rate=0.1, n_features=3)
    probs = gbdt_predict(model, np.random.default_rng(0).normal(size=(5, 3)))
    assert np.all(probs == 0.5)


def test_batch_equals_per_row_prediction():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(300, 4))
    y = (x[:, 0] > 0).astype(np.float64)
    model = train_gbdt(x, y, None, None, GbdtConfig(max_trees=20, max_depth=3,
                                                    early_stopping_rounds=20))
    batch = gbdt_predict(model, x)
    rows = np.concatenate([gbdt_predict(model, x[i : i + 1]) for i in range(300)])
    assert np.array_equal(batch, rows)


def test_train_reproducible():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(500, 6))
    y = (x[:, 2] - x[:, 3] > 0).astype(np.float64)
    cfg = GbdtConfig(max_trees=30, max_depth=4, early_stopping_rounds=30)
    m1 = train_gbdt(x, y, None, None, cfg)
    m2 = train_gbdt(x, y, None, None, cfg)
    assert len(m1.trees) == len(m2.trees)
    assert np.array_equal(gbdt_predict(m1, x), gbdt_predict(m2, x))


def test_early_stopping_truncates():
    rng = np.random.default_rng(10)
    n = 800
    x = rng.normal(size=(n, 4))
    y = (x[:, 0] > 0).astype(np.float64)
    vx = rng.normal(size=(400, 4))
    vy = (vx[:, 0] > 0).astype(np.float64)
    cfg = GbdtConfig(max_trees=500, max_depth=2, early_stopping_rounds=15)
    model = train_gbdt(x, y, vx, vy, cfg)
    assert len(model.trees) == model.best_iteration + 1
    assert len(model.trees) < 500


def test_single_class_labels_rejected():
    x = np.random.default_rng(11).normal(size=(50, 2))
    with pytest.raises(ValueError, match="single-class"):
        train_gbdt(x, np.zeros(50), None, None, GbdtConfig())


def test_gbdt_config_validation():
    with pytest.raises(ValueError):
        GbdtConfig(n_bins=512).validate()
    with pytest.raises(ValueError):
        GbdtConfig(max_depth=0).validate()


def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    x = rng.normal(size=(300, 5))
    y = (x[:, 1] > 0.2).astype(np.float64)
    model = train_gbdt(x, y, None, None,
                       GbdtConfig(max_trees=15, max_depth=3,
                                  early_stopping_rounds=15),
                       feature_names=[f"f{i}" for i in range(5)])
    p1 = tmp_path / "m.json"
    save_gbdt(model, p1)
    back = load_gbdt(p1)
    assert np.array_equal(gbdt_predict(back, x), gbdt_predict(model, x))
    p2 = tmp_path / "m2.json"
    save_gbdt(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_logloss_value():
    assert abs(logloss(np.array([1.0, 0.0]), np.array([0.5, 0.5])) - np.log(2)) < 1e-12
