"""Subject-wise cross-validation: one model per fold, pooled confusion matrix overall."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import SequenceSet, split_by_subject
from .evaluation import MetricsReport, SplitPlan, compute_metrics
from .stages import ConfusionMatrix
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)


class FoldFailure(RuntimeError):
    def __init__(self, fold_id, cause):
        self.fold_id = fold_id
        super().__init__(f"fold {fold_id} failed: {cause}")


@dataclass
class FoldResult:
    fold_id: int
    report: MetricsReport
    predictions: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    best_validation_accuracy: float
    step: int
    checkpoint_path: str | None = None


@dataclass
class CVResult:
    aggregate: MetricsReport
    folds: list = field(default_factory=list)

    def fold_mean(self) -> dict:
        """Per-fold metric averages, reported apart from the pooled numbers."""
        return {
            key: float(np.mean([getattr(f.report, key) for f in self.folds]))
            for key in ("accuracy", "mf1", "kappa")
        }

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate.to_dict(),
            "fold_mean": self.fold_mean(),
            "folds": [
                {"fold": f.fold_id, "report": f.report.to_dict(),
                 "best_validation_accuracy": f.best_validation_accuracy, "step": f.step,
                 "checkpoint": f.checkpoint_path}
                for f in self.folds
            ],
        }


def run_cross_validation(plan: SplitPlan, arrays: list, model_factory, train_config: TrainConfig,
                         L: int, out_dir=None, dataset_kind=None, pad: str = "repeat",
                         fold_ids=None) -> CVResult:
    """Train and test one model per fold, then pool the fold confusion matrices.

    ``model_factory(fold_id)`` returns a fresh model. When ``out_dir`` is set,
    each fold's report and checkpoint are written as soon as the fold ends.
    """
    plan.validate()
    available = {a.subject_id for a in arrays}
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    results = []
    ids = range(len(plan.folds)) if fold_ids is None else fold_ids
    for k in ids:
        fold = plan.folds[k]
        missing = (set(fold.train) | set(fold.val) | set(fold.test)) - available
        if missing:
            raise FoldFailure(k, f"no ingested data for subjects {sorted(missing)}")
        if not fold.val:
            raise FoldFailure(k, "fold has no validation subjects")
        try:
            train_set = SequenceSet(split_by_subject(arrays, fold.train), L, pad)
            val_set = SequenceSet(split_by_subject(arrays, fold.val), L, pad)
            test_set = SequenceSet(split_by_subject(arrays, fold.test), L, pad)
            torch.manual_seed(train_config.seed + k)
            model = model_factory(k)
            log_path = out / f"fold{k:02d}_train.jsonl" if out else None
            ckpt = train(model, train_set, val_set, train_config, log_path=log_path,
                         extra={"fold": k, "plan": plan.to_dict()["folds"][k]})
            ev = evaluate(model, test_set)
        except Exception as exc:
            raise FoldFailure(k, exc) from exc
        cm = ConfusionMatrix.from_labels(ev["predictions"], test_set.labels)
        model_name = getattr(model, "kind", None)
        report = compute_metrics(cm, L=L, dataset_kind=dataset_kind, model=model_name, warn=False)
        ckpt_path = None
        if out:
            ckpt_path = str(ckpt.save(out / f"fold{k:02d}.ckpt"))
            (out / f"fold{k:02d}_report.json").write_text(report.to_json())
            np.savetxt(out / f"fold{k:02d}_predictions.txt",
                       np.stack([ev["predictions"], test_set.labels], axis=1), fmt="%d",
                       header="predicted true")
        log.info("fold %d: acc %.4f mf1 %.4f kappa %.4f", k, report.accuracy, report.mf1, report.kappa)
        results.append(FoldResult(k, report, ev["predictions"], test_set.labels, test_set.subjects,
                                  ckpt.best_validation_accuracy, ckpt.step, ckpt_path))
    pooled = sum((r.report.confusion for r in results), ConfusionMatrix())
    aggregate = compute_metrics(pooled, L=L, dataset_kind=dataset_kind,
                                model=results[0].report.model if results else None, warn=False)
    result = CVResult(aggregate, results)
    if out:
        (out / "cv_report.json").write_text(json.dumps(result.to_dict(), indent=2))
    return result
