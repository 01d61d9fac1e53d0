"""Per-class and overall scores from a confusion matrix, and subject-wise split plans.

Confusion matrices are oriented rows = predicted, columns = true. With
e_ij the count at row i, column j:

    PR_i = e_ii / sum_j e_ij          (row sum)
    RE_i = e_ii / sum_j e_ji          (column sum)
    F1_i = 2 PR_i RE_i / (PR_i + RE_i)
    acc  = trace / total
    MF1  = mean_i F1_i
    kappa = (p_o - p_e) / (1 - p_e),  p_o = acc,  p_e = sum_i (row_i/total)(col_i/total)
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ingest import DatasetKind
from .stages import N_CLASSES, STAGE_NAMES, ConfusionMatrix


class ZeroSupportWarning(UserWarning):
    pass


@dataclass
class MetricsReport:
    confusion: ConfusionMatrix
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    mf1: float
    kappa: float
    n_epochs: int
    L: int | None = None
    dataset_kind: str | None = None
    model: str | None = None
    zero_support: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "orientation": "rows=predicted, columns=true",
            "classes": STAGE_NAMES,
            "confusion": self.confusion.counts.tolist(),
            "per_class": {
                name: {"PR": float(p), "RE": float(r), "F1": float(f)}
                for name, p, r, f in zip(STAGE_NAMES, self.precision, self.recall, self.f1)
            },
            "accuracy": self.accuracy,
            "mf1": self.mf1,
            "kappa": self.kappa,
            "n_epochs": self.n_epochs,
            "L": self.L,
            "dataset_kind": self.dataset_kind,
            "model": self.model,
            "zero_support": self.zero_support,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        rep = compute_metrics(ConfusionMatrix(np.array(d["confusion"])), warn=False)
        rep.L, rep.dataset_kind, rep.model = d.get("L"), d.get("dataset_kind"), d.get("model")
        return rep

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def compute_metrics(confusion, L=None, dataset_kind=None, model=None, warn=True) -> MetricsReport:
    if not isinstance(confusion, ConfusionMatrix):
        confusion = ConfusionMatrix(confusion)
    e = confusion.counts.astype(np.float64)
    total = e.sum()
    if total <= 0:
        raise ValueError("cannot compute metrics from an empty confusion matrix")
    diag = np.diag(e)
    rows = e.sum(axis=1)
    cols = e.sum(axis=0)
    pr = _safe_div(diag, rows)
    re = _safe_div(diag, cols)
    f1 = _safe_div(2 * pr * re, pr + re)
    zero = [STAGE_NAMES[i] for i in range(N_CLASSES) if rows[i] == 0 or cols[i] == 0]
    if zero and warn:
        warnings.warn(f"classes with no predictions or no true epochs scored 0: {zero}",
                      ZeroSupportWarning, stacklevel=2)
    p_o = diag.sum() / total
    p_e = float(np.dot(rows / total, cols / total))
    if p_e >= 1.0:
        # a single class on both sides: agreement is perfect and chance is total
        kappa = 1.0 if p_o == 1.0 else 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return MetricsReport(
        confusion=confusion, precision=pr, recall=re, f1=f1, accuracy=float(p_o),
        mf1=float(f1.mean()), kappa=float(kappa), n_epochs=int(total), L=L,
        dataset_kind=dataset_kind, model=model, zero_support=zero,
    )


def chance_agreement(confusion: ConfusionMatrix) -> float:
    e = confusion.counts.astype(np.float64)
    t = e.sum()
    return float(np.dot(e.sum(axis=1) / t, e.sum(axis=0) / t))


# ---------------------------------------------------------------------------
# subject-wise split plans


class SplitPlanError(ValueError):
    pass


@dataclass(frozen=True)
class Fold:
    train: tuple
    val: tuple
    test: tuple

    def check(self, fold_id=None):
        a, b, c = set(self.train), set(self.val), set(self.test)
        leaked = (a & b) | (a & c) | (b & c)
        if leaked:
            raise SplitPlanError(f"fold {fold_id}: subjects in more than one split: {sorted(leaked)}")
        if not a or not c:
            raise SplitPlanError(f"fold {fold_id}: empty train or test split")


@dataclass
class SplitPlan:
    folds: list
    protocol: str = "generic"
    seed: int | None = None

    def __len__(self):
        return len(self.folds)

    def validate(self):
        for i, f in enumerate(self.folds):
            f.check(i)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "seed": self.seed,
            "folds": [{"train": list(f.train), "val": list(f.val), "test": list(f.test)}
                      for f in self.folds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SplitPlan:
        plan = cls([Fold(tuple(f["train"]), tuple(f["val"]), tuple(f["test"])) for f in d["folds"]],
                   d.get("protocol", "generic"), d.get("seed"))
        plan.validate()
        return plan

    def subset(self, fold_ids) -> SplitPlan:
        return SplitPlan([self.folds[i] for i in fold_ids], self.protocol, self.seed)


# subjects, folds, (train, val, test) per fold
PROTOCOLS = {
    DatasetKind.SleepEDF: (20, 20, (15, 4, 1)),
    DatasetKind.MASS: (62, 31, (45, 15, 2)),
}


def _k_fold(subjects, n_folds, n_val, rng) -> list:
    order = list(rng.permutation(len(subjects)))
    shuffled = [subjects[i] for i in order]
    folds = []
    for chunk in np.array_split(np.arange(len(shuffled)), n_folds):
        test = [shuffled[i] for i in chunk]
        rest = [s for s in shuffled if s not in test]
        rest = [rest[i] for i in rng.permutation(len(rest))]
        folds.append(Fold(tuple(sorted(rest[n_val:])), tuple(sorted(rest[:n_val])), tuple(sorted(test))))
    return folds


def build_split_plan(dataset_kind, subjects, seed: int = 0, ratios=None, n_folds=None,
                     n_val=None) -> SplitPlan:
    """Subject-wise splits for the dataset's evaluation protocol.

    SleepEDF: 20 folds, 15/4/1 subjects. MASS: 31 folds, 45/15/2 with
    non-overlapping test pairs. SHHS: one 5:2:3 split. Generic: ``n_folds``
    k-fold with ``n_val`` validation subjects, or a single split by ``ratios``.
    """
    kind = DatasetKind(dataset_kind)
    subjects = sorted(set(subjects))
    rng = np.random.default_rng(seed)
    if kind in PROTOCOLS:
        expected, folds, (_, val, _) = PROTOCOLS[kind]
        if len(subjects) != expected:
            raise SplitPlanError(
                f"{kind.value} protocol expects {expected} subjects, got {len(subjects)}"
            )
        plan = SplitPlan(_k_fold(subjects, folds, val, rng), kind.value, seed)
    elif kind is DatasetKind.SHHS or ratios is not None:
        ratios = ratios or (5, 2, 3)
        plan = SplitPlan([_ratio_split(subjects, ratios, rng)], kind.value, seed)
    else:
        if n_folds is None:
            raise SplitPlanError("generic protocol needs n_folds or ratios")
        if not 2 <= n_folds <= len(subjects):
            raise SplitPlanError(f"cannot make {n_folds} folds from {len(subjects)} subjects")
        n_val = 1 if n_val is None else n_val
        per = -(-len(subjects) // n_folds)
        if len(subjects) - per - n_val < 1:
            raise SplitPlanError("not enough subjects left for training")
        plan = SplitPlan(_k_fold(subjects, n_folds, n_val, rng), kind.value, seed)
    plan.validate()
    return plan


def _ratio_split(subjects, ratios, rng) -> Fold:
    n = len(subjects)
    if n < 3:
        raise SplitPlanError(f"need at least 3 subjects for a train/val/test split, got {n}")
    r = np.asarray(ratios, dtype=float)
    r = r / r.sum()
    n_val = max(1, int(round(n * r[1])))
    n_test = max(1, int(round(n * r[2])))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise SplitPlanError(f"ratios {tuple(ratios)} leave no training subjects out of {n}")
    order = [subjects[i] for i in rng.permutation(n)]
    return Fold(tuple(sorted(order[:n_train])), tuple(sorted(order[n_train:n_train + n_val])),
                tuple(sorted(order[n_train + n_val:])))
