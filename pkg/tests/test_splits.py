import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iitnet.evaluation import Fold, SplitPlan, SplitPlanError, build_split_plan


def _subjects(n):
    return [f"s{i:03d}" for i in range(n)]


def _assert_partition(plan, subjects):
    for f in plan.folds:
        parts = [set(f.train), set(f.val), set(f.test)]
        assert sum(map(len, parts)) == len(set().union(*parts)), "overlapping roles"
        assert set().union(*parts) == set(subjects)


def test_sleepedf_protocol():
    subjects = _subjects(20)
    plan = build_split_plan("sleepedf", subjects, seed=0)
    assert len(plan) == 20
    assert all((len(f.train), len(f.val), len(f.test)) == (15, 4, 1) for f in plan.folds)
    tests = [f.test[0] for f in plan.folds]
    assert sorted(tests) == subjects
    _assert_partition(plan, subjects)


def test_mass_protocol():
    subjects = _subjects(62)
    plan = build_split_plan("mass", subjects, seed=0)
    assert len(plan) == 31
    assert all((len(f.train), len(f.val), len(f.test)) == (45, 15, 2) for f in plan.folds)
    pairs = [set(f.test) for f in plan.folds]
    assert sorted(s for p in pairs for s in p) == subjects
    _assert_partition(plan, subjects)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_disjoint_for_any_seed(seed):
    for kind, n in (("sleepedf", 20), ("mass", 62), ("shhs", 30)):
        _assert_partition(build_split_plan(kind, _subjects(n), seed=seed), _subjects(n))


def test_subject_count_mismatch():
    with pytest.raises(SplitPlanError, match="20"):
        build_split_plan("sleepedf", _subjects(19))
    with pytest.raises(SplitPlanError):
        build_split_plan("mass", _subjects(60))


def test_shhs_ratio_split():
    plan = build_split_plan("shhs", _subjects(100), seed=3)
    f = plan.folds[0]
    assert (len(f.train), len(f.val), len(f.test)) == (50, 20, 30)


def test_generic_k_fold_partitions_tests():
    subjects = _subjects(7)
    plan = build_split_plan("generic", subjects, n_folds=3, n_val=1)
    assert sorted(s for f in plan.folds for s in f.test) == subjects
    assert sorted(len(f.test) for f in plan.folds) == [2, 2, 3]
    _assert_partition(plan, subjects)
    with pytest.raises(SplitPlanError):
        build_split_plan("generic", subjects)
    with pytest.raises(SplitPlanError):
        build_split_plan("generic", _subjects(3), n_folds=2, n_val=1)


def test_same_seed_same_plan_and_round_trip():
    a = build_split_plan("sleepedf", _subjects(20), seed=5)
    b = build_split_plan("sleepedf", _subjects(20), seed=5)
    assert a.to_dict() == b.to_dict()
    assert SplitPlan.from_dict(a.to_dict()).to_dict() == a.to_dict()
    assert build_split_plan("sleepedf", _subjects(20), seed=6).to_dict() != a.to_dict()


def test_leaky_fold_rejected():
    with pytest.raises(SplitPlanError):
        SplitPlan([Fold(("a", "b"), ("c",), ("a",))]).validate()
    with pytest.raises(SplitPlanError):
        SplitPlan.from_dict({"folds": [{"train": ["a"], "val": ["a"], "test": ["b"]}]})
