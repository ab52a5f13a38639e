"""From-scratch multiclass gradient-boosted regression trees.

Second-order boosting on the softmax cross-entropy objective: each round
grows one depth-limited tree per class on gradients g = p - 1{y=c} and
hessians h = p(1-p), with the standard regularized gain
0.5 * [GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)] and leaf values
-G/(H+l2). Split search is exact greedy over sorted unique values (columns
are presorted once per fit); ties break on (lower feature index, lower
threshold) by scanning features and thresholds in ascending order and
accepting only strictly better gains. Training is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import BaseEstimator, check_is_fitted
from .errors import DegenerateLabels, EmptyInput, InvalidConfig, ShapeError
from .validation import check_X_y

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco


#: dispatch switch; the numpy fallback implements identical split semantics
USE_COMPILED_SCAN = _HAVE_NUMBA

_MIN_GAIN = 1e-12
_PROB_FLOOR = 1e-15


@dataclass(frozen=True)
class BoostParams:
    """Hyperparameters; defaults follow the usual boosted-tree setup
    (learning rate 0.3, depth 2, 100 rounds, multiclass log-loss)."""

    learning_rate: float = 0.3
    max_depth: int = 2
    n_rounds: int = 100
    l2_reg: float = 1.0
    min_child_weight: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_depth < 1:
            raise InvalidConfig(f"max_depth must be >= 1, got {self.max_depth}")
        if self.n_rounds < 1:
            raise InvalidConfig(f"n_rounds must be >= 1, got {self.n_rounds}")


@dataclass
class RegressionTree:
    """Flat node arrays; feature[i] == -1 marks a leaf."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def n_internal(self) -> int:
        return int((self.feature >= 0).sum())

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))

        return rec(0) if self.n_nodes else 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            f = feat[rows]
            go_left = X[rows, f] < self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return self.value[node]


class _TreeBuilder:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def done(self) -> RegressionTree:
        return RegressionTree(
            np.array(self.feature, dtype=np.int32),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int32),
            np.array(self.right, dtype=np.int32),
            np.array(self.value, dtype=np.float64),
        )


class _Presorted:
    """Per-fit presorted column structure shared by every tree."""

    def __init__(self, X: np.ndarray):
        self.X = X
        order = np.argsort(X, axis=0, kind="stable")  # (n, f)
        self.order = np.ascontiguousarray(order.T.astype(np.int32))  # (f, n)
        xs = np.take_along_axis(X, order, axis=0)
        self.x_sorted = np.ascontiguousarray(xs.T)  # (f, n)
        # positions i where a cut between sorted rank i and i+1 separates
        # distinct values
        self.boundary = self.x_sorted[:, 1:] > self.x_sorted[:, :-1]


@njit(cache=True)
def _scan_splits_compiled(order, boundary, g, h, member, G, H, n_node, l2, mcw,
                          parent):  # pragma: no cover - exercised via _find_split
    n_feat, n = order.shape
    best_gain = -np.inf
    best_f = -1
    best_pos = -1
    for f in range(n_feat):
        GL = 0.0
        HL = 0.0
        NL = 0
        for i in range(n - 1):
            idx = order[f, i]
            if member[idx]:
                GL += g[idx]
                HL += h[idx]
                NL += 1
            if not boundary[f, i]:
                continue
            if NL < 1 or NL > n_node - 1:
                continue
            HR = H - HL
            if HL < mcw or HR < mcw:
                continue
            GR = G - GL
            gain = 0.5 * (GL * GL / (HL + l2) + GR * GR / (HR + l2) - parent)
            if gain > best_gain:  # strict: first max wins = lowest (f, threshold)
                best_gain = gain
                best_f = f
                best_pos = i
    return best_gain, best_f, best_pos


def _scan_splits_numpy(ps: "_Presorted", g, h, member, G, H, n_node, l2, mcw, parent):
    """Vectorized equivalent of the compiled scan (fallback path)."""
    gm = np.where(member, g, 0.0)
    hm = np.where(member, h, 0.0)
    GL = np.cumsum(gm[ps.order][:, :-1], axis=1)
    HL = np.cumsum(hm[ps.order][:, :-1], axis=1)
    NL = np.cumsum(member[ps.order][:, :-1], axis=1)
    GR = G - GL
    HR = H - HL
    valid = (
        ps.boundary
        & (NL >= 1)
        & (NL <= n_node - 1)
        & (HL >= mcw)
        & (HR >= mcw)
    )
    if not valid.any():
        return -np.inf, -1, -1
    gain = 0.5 * (GL * GL / (HL + l2) + GR * GR / (HR + l2) - parent)
    gain[~valid] = -np.inf
    flat = int(np.argmax(gain))  # first max in C order = lowest (feature, threshold)
    f, pos = divmod(flat, gain.shape[1])
    return float(gain[f, pos]), int(f), int(pos)


@njit(cache=True)
def _scan_splits_pair_compiled(order, boundary, g, h, side, GA, HA, nA, GB, HB, nB,
                               l2, mcw, parentA, parentB):  # pragma: no cover
    """One traversal scanning two disjoint nodes (side 1 / side 2) at once;
    sibling nodes partition their parent, so this halves the level cost."""
    n_feat, n = order.shape
    bgA = -np.inf
    bfA = -1
    bpA = -1
    bgB = -np.inf
    bfB = -1
    bpB = -1
    for f in range(n_feat):
        GLa = 0.0
        HLa = 0.0
        NLa = 0
        GLb = 0.0
        HLb = 0.0
        NLb = 0
        for i in range(n - 1):
            idx = order[f, i]
            s = side[idx]
            if s == 1:
                GLa += g[idx]
                HLa += h[idx]
                NLa += 1
            elif s == 2:
                GLb += g[idx]
                HLb += h[idx]
                NLb += 1
            if not boundary[f, i]:
                continue
            if 1 <= NLa <= nA - 1:
                HRa = HA - HLa
                if HLa >= mcw and HRa >= mcw:
                    GRa = GA - GLa
                    gain = 0.5 * (GLa * GLa / (HLa + l2) + GRa * GRa / (HRa + l2)
                                  - parentA)
                    if gain > bgA:
                        bgA = gain
                        bfA = f
                        bpA = i
            if 1 <= NLb <= nB - 1:
                HRb = HB - HLb
                if HLb >= mcw and HRb >= mcw:
                    GRb = GB - GLb
                    gain = 0.5 * (GLb * GLb / (HLb + l2) + GRb * GRb / (HRb + l2)
                                  - parentB)
                    if gain > bgB:
                        bgB = gain
                        bfB = f
                        bpB = i
    return bgA, bfA, bpA, bgB, bfB, bpB


def _package_split(ps: "_Presorted", best, f, pos):
    if f < 0 or best <= _MIN_GAIN:
        return None
    thr = float(ps.x_sorted[f, pos] + ps.x_sorted[f, pos + 1]) / 2.0
    return best, int(f), thr, int(pos)


def _find_split(ps: "_Presorted", g, h, member, G, H, n_node, l2, mcw):
    """Exact greedy split over all features for one node; returns
    (gain, feature, threshold, position) or None."""
    parent = G * G / (H + l2)
    if USE_COMPILED_SCAN:
        best, f, pos = _scan_splits_compiled(
            ps.order, ps.boundary, g, h, member, G, H, n_node, l2, mcw, parent
        )
    else:
        best, f, pos = _scan_splits_numpy(
            ps, g, h, member, G, H, n_node, l2, mcw, parent
        )
    return _package_split(ps, best, f, pos)


def _find_split_pair(ps: "_Presorted", g, h, member_a, stats_a, member_b, stats_b,
                     l2, mcw):
    """Split search for two disjoint nodes in one pass (compiled path) or
    two passes (fallback)."""
    GA, HA, nA = stats_a
    GB, HB, nB = stats_b
    if not USE_COMPILED_SCAN:
        return (
            _find_split(ps, g, h, member_a, GA, HA, nA, l2, mcw),
            _find_split(ps, g, h, member_b, GB, HB, nB, l2, mcw),
        )
    side = np.zeros(len(g), dtype=np.int8)
    side[member_a] = 1
    side[member_b] = 2
    bgA, bfA, bpA, bgB, bfB, bpB = _scan_splits_pair_compiled(
        ps.order, ps.boundary, g, h, side, GA, HA, nA, GB, HB, nB,
        l2, mcw, GA * GA / (HA + l2), GB * GB / (HB + l2),
    )
    return _package_split(ps, bgA, bfA, bpA), _package_split(ps, bgB, bfB, bpB)


def _grow_tree(ps: _Presorted, g: np.ndarray, h: np.ndarray, params: BoostParams
               ) -> RegressionTree:
    n = len(g)
    builder = _TreeBuilder()
    root = builder.add()
    level = [(root, np.ones(n, dtype=bool))]
    depth = 0
    while level:
        stats = []
        for _, member in level:
            stats.append((float(g[member].sum()), float(h[member].sum()),
                          int(member.sum())))
        splits = [None] * len(level)
        if depth < params.max_depth:
            i = 0
            while i < len(level):
                if i + 1 < len(level):
                    # nodes at one level are pairwise disjoint; scan two at once
                    splits[i], splits[i + 1] = _find_split_pair(
                        ps, g, h, level[i][1], stats[i], level[i + 1][1],
                        stats[i + 1], params.l2_reg, params.min_child_weight,
                    )
                    i += 2
                else:
                    G, H, n_node = stats[i]
                    if n_node >= 2:
                        splits[i] = _find_split(
                            ps, g, h, level[i][1], G, H, n_node,
                            params.l2_reg, params.min_child_weight,
                        )
                    i += 1
        nxt = []
        for (node_id, member), (G, H, n_node), split in zip(level, stats, splits):
            if split is None or n_node < 2:
                builder.value[node_id] = -G / (H + params.l2_reg)
                continue
            _, f, thr, _ = split
            builder.feature[node_id] = f
            builder.threshold[node_id] = thr
            go_left = member & (ps.X[:, f] < thr)
            left_id = builder.add()
            right_id = builder.add()
            builder.left[node_id] = left_id
            builder.right[node_id] = right_id
            nxt.append((left_id, go_left))
            nxt.append((right_id, member & ~go_left))
        level = nxt
        depth += 1
    return builder.done()


def _softmax(margins: np.ndarray) -> np.ndarray:
    z = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _mlogloss(probs: np.ndarray, y_idx: np.ndarray) -> float:
    p = np.maximum(probs[np.arange(len(y_idx)), y_idx], _PROB_FLOOR)
    return float(-np.mean(np.log(p)))


class GradientBoostedClassifier(BaseEstimator):
    """Multiclass boosted trees with the sklearn classifier protocol.

    Fitted attributes: classes_, trees_ (n_rounds x n_classes grid),
    train_losses_ (multiclass log-loss after each round, non-increasing).
    """

    def __init__(self, learning_rate: float = 0.3, max_depth: int = 2,
                 n_rounds: int = 100, l2_reg: float = 1.0,
                 min_child_weight: float = 1.0, seed: int = 0):
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.n_rounds = n_rounds
        self.l2_reg = l2_reg
        self.min_child_weight = min_child_weight
        self.seed = seed  # reserved; exact greedy training draws nothing

    def _params(self) -> BoostParams:
        return BoostParams(
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            n_rounds=self.n_rounds,
            l2_reg=self.l2_reg,
            min_child_weight=self.min_child_weight,
        )

    def fit(self, X, y) -> "GradientBoostedClassifier":
        X, y = check_X_y(X, y)
        if X.shape[0] == 0:
            raise EmptyInput("empty training matrix")
        params = self._params()
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        n_classes = len(self.classes_)
        if n_classes < 2:
            raise DegenerateLabels(f"need >= 2 classes, got {n_classes}")
        n = X.shape[0]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y_idx] = 1.0

        ps = _Presorted(X)
        margins = np.zeros((n, n_classes))
        self.trees_: list[list[RegressionTree]] = []
        self.train_losses_: list[float] = []
        for _ in range(params.n_rounds):
            probs = _softmax(margins)
            round_trees = []
            for c in range(n_classes):
                g = probs[:, c] - onehot[:, c]
                h = probs[:, c] * (1.0 - probs[:, c])
                tree = _grow_tree(ps, g, h, params)
                margins[:, c] += params.learning_rate * tree.predict(X)
                round_trees.append(tree)
            self.trees_.append(round_trees)
            self.train_losses_.append(_mlogloss(_softmax(margins), y_idx))
        self.n_features_in_ = X.shape[1]
        return self

    def _check_input(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"model was trained on {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def decision_function(self, X) -> np.ndarray:
        X = self._check_input(X)
        margins = np.zeros((X.shape[0], len(self.classes_)))
        for round_trees in self.trees_:
            for c, tree in enumerate(round_trees):
                margins[:, c] += self.learning_rate * tree.predict(X)
        return margins

    def predict_proba(self, X) -> np.ndarray:
        return _softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def score(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))


def train_ensemble(X, y, params: BoostParams = BoostParams(), seed: int = 0
                   ) -> GradientBoostedClassifier:
    """Functional wrapper around GradientBoostedClassifier.fit."""
    clf = GradientBoostedClassifier(
        learning_rate=params.learning_rate,
        max_depth=params.max_depth,
        n_rounds=params.n_rounds,
        l2_reg=params.l2_reg,
        min_child_weight=params.min_child_weight,
        seed=seed,
    )
    return clf.fit(X, y)


# ---------------------------------------------------------------------------
# complexity accounting
# ---------------------------------------------------------------------------

@dataclass
class ComplexityReport:
    """Parameter and per-inference FLOP accounting.

    params: 3 per internal node (feature id, threshold, child pointer pair
    counted as one slot) + 1 per leaf value. flops_classifier: worst-case
    routed path comparisons + one accumulation add per tree (learning rate
    folded into leaves) + softmax cost (3c - 1). flops_pipeline adds the
    feature-extraction estimate when one is supplied.
    """

    param_count: int
    flops_classifier: int
    flops_pipeline: int
    detail: dict = field(default_factory=dict)


def _ensemble_params(clf: GradientBoostedClassifier) -> int:
    return sum(3 * t.n_internal + t.n_leaves for row in clf.trees_ for t in row)


def _ensemble_flops(clf: GradientBoostedClassifier) -> int:
    comparisons = sum(t.depth() for row in clf.trees_ for t in row)
    adds = sum(len(row) for row in clf.trees_)  # one accumulation per tree
    softmax = 3 * len(clf.classes_) - 1
    return comparisons + adds + softmax


def count_complexity(model, feature_flops: int = 0) -> ComplexityReport:
    """Model size and inference cost of an ensemble or a hierarchy.

    For a hierarchy the classifier FLOPs are the worst-case route: the
    coarse ensemble plus the most expensive refinement.
    """
    from .hier import HierarchicalClassifier  # local import, no cycle at module load

    if isinstance(model, GradientBoostedClassifier):
        params = _ensemble_params(model)
        flops = _ensemble_flops(model)
        detail = {"ensembles": {"single": {"params": params, "flops": flops}}}
    elif isinstance(model, HierarchicalClassifier):
        check_is_fitted(model, "coarse_")
        parts = {"coarse": model.coarse_}
        for name, ref in model.refinements_.items():
            if isinstance(ref, GradientBoostedClassifier):
                parts[name] = ref
        per = {
            name: {"params": _ensemble_params(e), "flops": _ensemble_flops(e)}
            for name, e in parts.items()
        }
        params = sum(v["params"] for v in per.values())
        refinement_flops = [v["flops"] for k, v in per.items() if k != "coarse"]
        flops = per["coarse"]["flops"] + (max(refinement_flops) if refinement_flops else 0)
        detail = {"ensembles": per}
    else:
        raise InvalidConfig(f"cannot count complexity of {type(model).__name__}")
    return ComplexityReport(
        param_count=params,
        flops_classifier=flops,
        flops_pipeline=flops + int(feature_flops),
        detail=detail,
    )
