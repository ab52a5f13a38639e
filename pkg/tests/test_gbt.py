import numpy as np
import pytest

from gamc.errors import DegenerateLabels, EmptyInput, InvalidConfig, ShapeError
from gamc.gbt import (
    BoostParams,
    GradientBoostedClassifier,
    RegressionTree,
    count_complexity,
    train_ensemble,
)


def blobs(n_per=70, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    X = np.concatenate([rng.normal(c, 0.5, size=(n_per, 2)) for c in centers])
    y = np.repeat([0, 1, 2], n_per)
    return X, y


def oracle_first_split(X, y, n_classes, l2=1.0, mcw=1.0):
    """Exhaustive (feature, midpoint) search replicating the gain rule and
    the (lower feature, lower threshold) tie-break, for tiny datasets."""
    n = len(y)
    probs = np.full((n, n_classes), 1.0 / n_classes)
    g = probs[:, 0] - (y == 0)
    h = probs[:, 0] * (1 - probs[:, 0])
    G, H = g.sum(), h.sum()
    best = None
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            t = (lo + hi) / 2.0
            left = X[:, f] < t
            GL, HL = g[left].sum(), h[left].sum()
            GR, HR = G - GL, H - HL
            if HL < mcw or HR < mcw:
                continue
            gain = 0.5 * (GL**2 / (HL + l2) + GR**2 / (HR + l2) - G**2 / (H + l2))
            if best is None or gain > best[0] + 1e-15:
                best = (gain, f, t)
    return best


def test_blobs_high_training_accuracy():
    X, y = blobs()
    clf = GradientBoostedClassifier(n_rounds=100).fit(X, y)
    assert clf.score(X, y) >= 0.98


def test_mlogloss_monotone_nonincreasing():
    X, y = blobs(seed=3)
    clf = GradientBoostedClassifier(n_rounds=100).fit(X, y)
    losses = np.array(clf.train_losses_)
    assert len(losses) == 100
    assert np.all(np.diff(losses) <= 1e-9 * np.abs(losses[:-1]) + 1e-15)


def test_every_tree_respects_depth_bound():
    X, y = blobs(seed=5)
    clf = GradientBoostedClassifier(n_rounds=30, max_depth=2).fit(X, y)
    for row in clf.trees_:
        for tree in row:
            assert tree.depth() <= 2
            assert tree.n_internal <= 3
            assert tree.n_leaves <= 4


def test_leaf_value_closed_form():
    # constant feature forces a single leaf; y = [0 x3, 1 x1] gives
    # class-0 gradient sum 4*0.5 - 3 = -1, hessian sum 4*0.25 = 1
    X = np.ones((4, 1))
    y = np.array([0, 0, 0, 1])
    clf = GradientBoostedClassifier(n_rounds=1, l2_reg=1.0).fit(X, y)
    tree0 = clf.trees_[0][0]
    assert tree0.n_nodes == 1
    assert tree0.value[0] == pytest.approx(-(-1.0) / (1.0 + 1.0))
    tree1 = clf.trees_[0][1]
    assert tree1.value[0] == pytest.approx(-(4 * 0.5 - 1.0) / (1.0 + 1.0))


def test_first_split_matches_exhaustive_oracle():
    rng = np.random.default_rng(11)
    for trial in range(40):
        n = int(rng.integers(4, 9))
        X = rng.integers(0, 2, size=(n, 2)).astype(float)
        y = rng.integers(0, 2, size=n)
        if len(np.unique(y)) < 2:
            continue
        oracle = oracle_first_split(X, y, n_classes=2)
        clf = GradientBoostedClassifier(n_rounds=1).fit(X, y)
        tree = clf.trees_[0][0]
        if oracle is None or oracle[0] <= 1e-12:
            assert tree.n_nodes == 1
        else:
            assert tree.feature[0] == oracle[1]
            assert tree.threshold[0] == pytest.approx(oracle[2])


def test_zero_round_margins_give_uniform_proba():
    X, y = blobs(n_per=10)
    clf = GradientBoostedClassifier(n_rounds=1).fit(X, y)
    clf.trees_ = []  # zero completed rounds
    proba = clf.predict_proba(X[:5])
    np.testing.assert_allclose(proba, 1.0 / 3.0)


def test_probabilities_sum_to_one():
    X, y = blobs(seed=7)
    clf = GradientBoostedClassifier(n_rounds=20).fit(X, y)
    rng = np.random.default_rng(0)
    probe = rng.normal(0, 3, size=(1000, 2))
    proba = clf.predict_proba(probe)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    assert (proba >= 0).all()


def test_heldout_centroid_classified():
    X, y = blobs(seed=9)
    clf = GradientBoostedClassifier(n_rounds=50).fit(X, y)
    assert clf.predict(np.array([[4.0, 0.0]]))[0] == 1
    assert clf.predict(np.array([[0.0, 4.0]]))[0] == 2


def test_determinism_identical_models():
    X, y = blobs(seed=13)
    a = GradientBoostedClassifier(n_rounds=15).fit(X, y)
    b = GradientBoostedClassifier(n_rounds=15).fit(X, y)
    for row_a, row_b in zip(a.trees_, b.trees_):
        for ta, tb in zip(row_a, row_b):
            np.testing.assert_array_equal(ta.feature, tb.feature)
            np.testing.assert_array_equal(ta.threshold, tb.threshold)
            np.testing.assert_array_equal(ta.value, tb.value)


def test_numpy_fallback_matches_compiled_scan(monkeypatch):
    import gamc.gbt as gbt_mod

    X, y = blobs(n_per=40, seed=17)
    fast = GradientBoostedClassifier(n_rounds=10).fit(X, y)
    monkeypatch.setattr(gbt_mod, "USE_COMPILED_SCAN", False)
    slow = GradientBoostedClassifier(n_rounds=10).fit(X, y)
    for row_a, row_b in zip(fast.trees_, slow.trees_):
        for ta, tb in zip(row_a, row_b):
            np.testing.assert_array_equal(ta.feature, tb.feature)
            np.testing.assert_allclose(ta.threshold, tb.threshold)
            np.testing.assert_allclose(ta.value, tb.value)
    np.testing.assert_allclose(fast.train_losses_, slow.train_losses_)


def test_class_labels_preserved():
    X, y = blobs(n_per=20)
    clf = GradientBoostedClassifier(n_rounds=5).fit(X, y + 10)
    assert set(clf.predict(X)) <= {10, 11, 12}


def test_errors():
    X = np.ones((5, 2))
    with pytest.raises(DegenerateLabels):
        GradientBoostedClassifier().fit(X, np.zeros(5, dtype=int))
    with pytest.raises(EmptyInput):
        GradientBoostedClassifier().fit(np.empty((0, 2)), np.empty(0, dtype=int))
    Xb, yb = blobs(n_per=10)
    clf = GradientBoostedClassifier(n_rounds=2).fit(Xb, yb)
    with pytest.raises(ShapeError):
        clf.predict(np.ones((3, 5)))
    with pytest.raises(InvalidConfig):
        BoostParams(learning_rate=0.0)
    with pytest.raises(InvalidConfig):
        BoostParams(max_depth=0)


def test_train_ensemble_wrapper_uses_params():
    X, y = blobs(n_per=12)
    clf = train_ensemble(X, y, BoostParams(n_rounds=3, max_depth=1))
    assert len(clf.trees_) == 3
    assert all(t.depth() <= 1 for row in clf.trees_ for t in row)


def test_complexity_counts_full_depth2_tree():
    # one full depth-2 tree: 3 internal nodes and 4 leaves
    tree = RegressionTree(
        feature=np.array([0, 1, 1, -1, -1, -1, -1], dtype=np.int32),
        threshold=np.array([0.5, 0.2, 0.7, 0, 0, 0, 0]),
        left=np.array([1, 3, 5, -1, -1, -1, -1], dtype=np.int32),
        right=np.array([2, 4, 6, -1, -1, -1, -1], dtype=np.int32),
        value=np.zeros(7),
    )
    assert 3 * tree.n_internal + tree.n_leaves == 13
    assert tree.depth() == 2
    clf = GradientBoostedClassifier()
    clf.trees_ = [[tree, tree]]
    clf.classes_ = np.array([0, 1])
    clf.n_features_in_ = 2
    rep = count_complexity(clf)
    assert rep.param_count == 26
    # 2 comparisons per tree + 1 accumulation add per tree + softmax (3c-1)
    assert rep.flops_classifier == 2 * 2 + 2 * 1 + (3 * 2 - 1)
    rep2 = count_complexity(clf, feature_flops=1000)
    assert rep2.flops_pipeline == rep2.flops_classifier + 1000
