"""Coarse-to-fine hierarchical classification and the SNR-sweep evaluation.

The 24 classes fall into four coarse groups by modulation property:
amplitude-keyed (AMP), frequency (FREQ), phase-keyed (PHASE), and mixed
amplitude/phase (MIXED, the QAM and APSK families). A first-stage ensemble
predicts the group; per-group refinement ensembles predict the final class.
FREQ holds only FM, so it is terminal and routes straight to FM with no
second-stage evaluation. GMSK sits in PHASE (continuous-phase keying is
closest to the PSK family); OQPSK likewise.

Refinement accuracies are reported conditionally on the true group, so a
refinement column can exceed the overall column; overall accuracy can never
exceed coarse accuracy because a correct final label implies a correct
group.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .base import BaseEstimator, check_is_fitted
from .errors import DegenerateLabels, InvalidConfig, ShapeError
from .gbt import BoostParams, GradientBoostedClassifier
from .siggen import MOD_CLASSES, ModClass, class_id
from .validation import check_X_y


class Group(enum.IntEnum):
    AMP = 0
    FREQ = 1
    PHASE = 2
    MIXED = 3


#: Refinement slots: R0 refines AMP, R1 refines PHASE, R2 refines MIXED;
#: FREQ is terminal and routes straight to FM.
REFINEMENT_OF = {Group.AMP: "r0", Group.PHASE: "r1", Group.MIXED: "r2"}

GROUP_MAP: dict[ModClass, Group] = {
    ModClass.OOK: Group.AMP,
    ModClass.ASK4: Group.AMP,
    ModClass.ASK8: Group.AMP,
    ModClass.AM_SSB_WC: Group.AMP,
    ModClass.AM_SSB_SC: Group.AMP,
    ModClass.AM_DSB_WC: Group.AMP,
    ModClass.AM_DSB_SC: Group.AMP,
    ModClass.FM: Group.FREQ,
    ModClass.BPSK: Group.PHASE,
    ModClass.QPSK: Group.PHASE,
    ModClass.OQPSK: Group.PHASE,
    ModClass.PSK8: Group.PHASE,
    ModClass.PSK16: Group.PHASE,
    ModClass.PSK32: Group.PHASE,
    ModClass.GMSK: Group.PHASE,
    ModClass.APSK16: Group.MIXED,
    ModClass.APSK32: Group.MIXED,
    ModClass.APSK64: Group.MIXED,
    ModClass.APSK128: Group.MIXED,
    ModClass.QAM16: Group.MIXED,
    ModClass.QAM32: Group.MIXED,
    ModClass.QAM64: Group.MIXED,
    ModClass.QAM128: Group.MIXED,
    ModClass.QAM256: Group.MIXED,
}

assert len(GROUP_MAP) == len(MOD_CLASSES), "group map must cover all 24 classes"

#: class id (0..23) -> group id (0..3)
GROUP_OF_ID = np.array([GROUP_MAP[m] for m in MOD_CLASSES], dtype=np.int64)


def groups_of(labels) -> np.ndarray:
    """Map class ids to group ids."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= len(MOD_CLASSES)):
        raise InvalidConfig("labels must be class ids in 0..23")
    return GROUP_OF_ID[labels]


class HierarchicalClassifier(BaseEstimator):
    """Coarse group ensemble plus per-group refinements, all with the same
    boosting hyperparameters.

    fit() expects integer class ids (0..23, in MOD_CLASSES order). Groups
    entirely absent from the training set are recorded in
    ``skipped_groups_`` and fall back to the group's first mapped class at
    predict time; groups with exactly one observed class become constant
    refinements with no second-stage evaluation.
    """

    def __init__(self, learning_rate: float = 0.3, max_depth: int = 2,
                 n_rounds: int = 100, l2_reg: float = 1.0,
                 min_child_weight: float = 1.0, seed: int = 0):
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.n_rounds = n_rounds
        self.l2_reg = l2_reg
        self.min_child_weight = min_child_weight
        self.seed = seed

    def _new_ensemble(self) -> GradientBoostedClassifier:
        return GradientBoostedClassifier(
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            n_rounds=self.n_rounds,
            l2_reg=self.l2_reg,
            min_child_weight=self.min_child_weight,
            seed=self.seed,
        )

    def fit(self, X, y) -> "HierarchicalClassifier":
        X, y = check_X_y(X, y)
        y = y.astype(np.int64)
        groups = groups_of(y)
        present_groups = np.unique(groups)
        if len(present_groups) < 2:
            raise DegenerateLabels(
                "all training classes fall into one coarse group; "
                "the hierarchy needs at least two groups"
            )
        self.coarse_ = self._new_ensemble().fit(X, groups)
        self.refinements_: dict[str, object] = {}
        self.skipped_groups_: list[str] = []
        for group, slot in REFINEMENT_OF.items():
            rows = groups == int(group)
            classes_here = np.unique(y[rows])
            if classes_here.size == 0:
                self.refinements_[slot] = None
                self.skipped_groups_.append(group.name)
                warnings.warn(f"group {group.name} has no training samples; skipped")
            elif classes_here.size == 1:
                self.refinements_[slot] = int(classes_here[0])
            else:
                self.refinements_[slot] = self._new_ensemble().fit(X[rows], y[rows])
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        return self

    def _fallback_class(self, group: Group) -> int:
        # first mapped class keeps the prediction inside the routed group
        for m in MOD_CLASSES:
            if GROUP_MAP[m] == group:
                return class_id(m)
        raise InvalidConfig(f"group {group} has no classes")  # pragma: no cover

    def predict_group(self, X) -> np.ndarray:
        check_is_fitted(self, "coarse_")
        return self.coarse_.predict(X).astype(np.int64)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "coarse_")
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"expected (n, {self.n_features_in_}) matrix, got shape {X.shape}"
            )
        group_pred = self.predict_group(X)
        out = np.empty(X.shape[0], dtype=np.int64)
        for group in Group:
            rows = np.flatnonzero(group_pred == int(group))
            if rows.size == 0:
                continue
            if group is Group.FREQ:
                out[rows] = class_id(ModClass.FM)
                continue
            ref = self.refinements_.get(REFINEMENT_OF[group])
            if ref is None:
                out[rows] = self._fallback_class(group)
            elif isinstance(ref, int):
                out[rows] = ref
            else:
                out[rows] = ref.predict(X[rows])
        return out


def train_hierarchy(X, y, params: BoostParams = BoostParams(), seed: int = 0
                    ) -> HierarchicalClassifier:
    """Functional wrapper around HierarchicalClassifier.fit."""
    model = HierarchicalClassifier(
        learning_rate=params.learning_rate,
        max_depth=params.max_depth,
        n_rounds=params.n_rounds,
        l2_reg=params.l2_reg,
        min_child_weight=params.min_child_weight,
        seed=seed,
    )
    return model.fit(X, y)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalRow:
    snr_db: float
    coarse_acc: float
    r0_acc: float | None
    r1_acc: float | None
    r2_acc: float | None
    overall_acc: float
    n_frames: int


@dataclass
class EvalReport:
    """Per-SNR accuracy table (percent) plus one confusion matrix per SNR.

    Confusion matrices are (24, 24) over the full class list; row = true
    class id, column = predicted class id, so rows sum to per-class frame
    counts.
    """

    rows: list[EvalRow]
    confusion: dict[float, np.ndarray]
    meta: dict = field(default_factory=dict)

    def overall_by_snr(self) -> dict[float, float]:
        return {r.snr_db: r.overall_acc for r in self.rows}

    def to_text(self) -> str:
        def cell(v):
            return "   --" if v is None else f"{v:5.2f}"

        lines = ["  SNR  Coarse %    R0 %    R1 %    R2 %  Overall %"]
        for r in self.rows:
            lines.append(
                f"{r.snr_db:5.0f}     {r.coarse_acc:6.2f}   {cell(r.r0_acc)}   "
                f"{cell(r.r1_acc)}   {cell(r.r2_acc)}     {r.overall_acc:6.2f}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["snr_db,coarse_acc,r0_acc,r1_acc,r2_acc,overall_acc,n_frames"]
        for r in self.rows:
            def num(v):
                return "" if v is None else f"{v:.6f}"

            lines.append(
                f"{r.snr_db:g},{r.coarse_acc:.6f},{num(r.r0_acc)},{num(r.r1_acc)},"
                f"{num(r.r2_acc)},{r.overall_acc:.6f},{r.n_frames}"
            )
        return "\n".join(lines) + "\n"


def _pct(correct: np.ndarray) -> float:
    return float(100.0 * np.mean(correct)) if correct.size else 0.0


def evaluate(model: HierarchicalClassifier, X, y, snr_db) -> EvalReport:
    """Per-SNR coarse / conditional-refinement / overall accuracies and
    confusion matrices. Refinement accuracy for a group is measured only on
    samples whose TRUE group matches (so it is independent of coarse
    routing errors); empty cells are reported as missing."""
    X, y = check_X_y(X, y)
    y = y.astype(np.int64)
    snr_db = np.asarray(snr_db, dtype=np.float64)
    if snr_db.shape[0] != X.shape[0]:
        raise ShapeError("snr_db must have one entry per row of X")

    group_true = groups_of(y)
    group_pred = model.predict_group(X)
    class_pred = np.empty_like(y)
    # reuse the group predictions rather than re-running the coarse stage
    for group in Group:
        rows = np.flatnonzero(group_pred == int(group))
        if rows.size == 0:
            continue
        if group is Group.FREQ:
            class_pred[rows] = class_id(ModClass.FM)
            continue
        ref = model.refinements_.get(REFINEMENT_OF[group])
        if ref is None:
            class_pred[rows] = model._fallback_class(group)
        elif isinstance(ref, int):
            class_pred[rows] = ref
        else:
            class_pred[rows] = ref.predict(X[rows])

    # conditional refinement predictions on true-group samples
    ref_correct: dict[str, np.ndarray] = {}
    for group, slot in REFINEMENT_OF.items():
        rows = np.flatnonzero(group_true == int(group))
        if rows.size == 0:
            ref_correct[slot] = None
            continue
        ref = model.refinements_.get(slot)
        if ref is None:
            pred = np.full(rows.size, model._fallback_class(group))
        elif isinstance(ref, int):
            pred = np.full(rows.size, ref)
        else:
            pred = ref.predict(X[rows])
        correct = np.zeros(X.shape[0], dtype=bool)
        correct[rows] = pred == y[rows]
        ref_correct[slot] = correct

    n_classes = len(MOD_CLASSES)
    rows_out = []
    confusion = {}
    # rows come from the SNR values actually present, ascending; requested
    # grid cells with no test frames are therefore omitted
    for snr in np.unique(snr_db):
        cell = snr_db == snr

        def cond_acc(slot, group):
            mask = cell & (group_true == int(group))
            if not mask.any():
                return None
            return _pct(ref_correct[slot][mask])

        row = EvalRow(
            snr_db=float(snr),
            coarse_acc=_pct(group_pred[cell] == group_true[cell]),
            r0_acc=cond_acc("r0", Group.AMP),
            r1_acc=cond_acc("r1", Group.PHASE),
            r2_acc=cond_acc("r2", Group.MIXED),
            overall_acc=_pct(class_pred[cell] == y[cell]),
            n_frames=int(cell.sum()),
        )
        rows_out.append(row)
        conf = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(conf, (y[cell], class_pred[cell]), 1)
        confusion[float(snr)] = conf
    return EvalReport(rows=rows_out, confusion=confusion)


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks for ties."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise InvalidConfig("spearman needs two equal-length 1-d arrays, n >= 2")

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(len(v), dtype=np.float64)
        # average ranks over ties
        for val in np.unique(v):
            mask = v == val
            if mask.sum() > 1:
                r[mask] = r[mask].mean()
        return r

    ra, rb = ranks(a), ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra**2).sum() * (rb**2).sum())
    if denom == 0:
        return 0.0
    return float((ra * rb).sum() / denom)
