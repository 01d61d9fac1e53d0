import json

import numpy as np
import pytest
import torch

from iitnet.crossval import FoldFailure, run_cross_validation
from iitnet.evaluation import Fold, SplitPlan, SplitPlanError, build_split_plan, compute_metrics
from iitnet.training import TrainConfig

from toys import toy_arrays, toy_model


@pytest.fixture(scope="module")
def arrays():
    return toy_arrays(n_subjects=5, per_subject=80, seed=1)


def test_two_fold_learnability(arrays, tmp_path):
    plan = build_split_plan("generic", [a.subject_id for a in arrays], n_folds=5, n_val=1, seed=0)
    cfg = TrainConfig(batch_size=32, max_passes=25, early_stop_patience=25)
    result = run_cross_validation(plan, arrays, lambda k: toy_model(), cfg, L=1, out_dir=tmp_path,
                                  dataset_kind="generic", fold_ids=[0, 1])
    assert [f.fold_id for f in result.folds] == [0, 1]
    assert result.aggregate.accuracy >= 0.95
    # pooled confusion is the sum of the folds
    pooled = sum(f.report.confusion.counts for f in result.folds)
    np.testing.assert_array_equal(result.aggregate.confusion.counts, pooled)
    saved = json.loads((tmp_path / "cv_report.json").read_text())
    assert saved["aggregate"]["n_epochs"] == 160
    for name in ("fold00.ckpt", "fold00_report.json", "fold00_predictions.txt", "fold00_train.jsonl"):
        assert (tmp_path / name).exists()


def test_single_fold_aggregate_equals_fold(arrays):
    ids = [a.subject_id for a in arrays]
    plan = SplitPlan([Fold(tuple(ids[:3]), (ids[3],), (ids[4],))])
    torch.manual_seed(0)
    result = run_cross_validation(plan, arrays, lambda k: toy_model(), TrainConfig(batch_size=64, max_passes=2), L=2)
    fold = result.folds[0].report
    assert result.aggregate.to_dict() == fold.to_dict()
    assert result.fold_mean()["accuracy"] == pytest.approx(fold.accuracy)
    expected = compute_metrics(np.asarray(fold.confusion.counts), L=2, warn=False)
    assert expected.kappa == fold.kappa


def test_leaked_subject_rejected(arrays):
    ids = [a.subject_id for a in arrays]
    plan = SplitPlan([Fold(tuple(ids[:3]), (ids[3],), (ids[0],))])
    with pytest.raises(SplitPlanError):
        run_cross_validation(plan, arrays, lambda k: toy_model(), TrainConfig(), L=1)


def test_missing_subject_names_fold(arrays):
    ids = [a.subject_id for a in arrays]
    plan = SplitPlan([Fold(tuple(ids[:3]), (ids[3],), ("ghost",))])
    with pytest.raises(FoldFailure) as err:
        run_cross_validation(plan, arrays, lambda k: toy_model(), TrainConfig(), L=1)
    assert err.value.fold_id == 0 and "ghost" in str(err.value)
