import dataclasses
import json

import numpy as np
import pytest
import torch
from torch import nn

from iitnet.data import SequenceSet
from iitnet.training import (
    Checkpoint,
    NonFiniteLoss,
    TrainConfig,
    TrainingError,
    evaluate,
    l2_penalty,
    objective,
    predict_proba,
    resolve_device,
    train,
)

from toys import toy_arrays, toy_model


@pytest.fixture(scope="module")
def data():
    arrays = toy_arrays(n_subjects=3, per_subject=100)
    return SequenceSet(arrays[:2], 1), SequenceSet(arrays[2:], 1)


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_reg) == (0.005, 0.9, 0.999, 1e-8, 1e-6)
    assert cfg.early_stop_patience == 10
    sizes = [TrainConfig.for_dataset(k).batch_size for k in ("sleepedf", "mass", "shhs", "generic")]
    assert sizes == [256, 128, 256, 32]


def test_overfits_small_set():
    arrays = toy_arrays(n_subjects=2, per_subject=100)
    # same epochs under another subject id, so checkpoint selection tracks training fit
    mirror = [dataclasses.replace(a, subject_id=a.subject_id + "-copy") for a in arrays]
    tr, va = SequenceSet(arrays, 1), SequenceSet(mirror, 1)
    torch.manual_seed(0)
    model = toy_model()
    train(model, tr, va, TrainConfig(batch_size=32, max_passes=25, early_stop_patience=25))
    assert evaluate(model, tr)["accuracy"] >= 0.95


def test_checkpoint_is_best_validation_accuracy_earliest_on_ties(data):
    tr, va = data
    model = toy_model()
    ck = train(model, tr, va, TrainConfig(batch_size=32, max_passes=6, eval_every=2))
    accs = [h["val_accuracy"] for h in ck.history]
    best = max(accs)
    assert ck.best_validation_accuracy == best
    assert ck.step == ck.history[accs.index(best)]["step"]
    assert evaluate(model, va)["accuracy"] == pytest.approx(best)


def test_early_stopping_rule(data):
    tr, va = data
    patience = 2
    ck = train(toy_model(), tr, va,
               TrainConfig(batch_size=16, max_passes=30, eval_every=1, early_stop_patience=patience, lr=0.05))
    losses = [h["val_loss"] for h in ck.history]
    # replay the patience counter independently
    best, bad, stop_at = float("inf"), 0, None
    for i, v in enumerate(losses):
        best, bad = (v, 0) if v < best else (best, bad + 1)
        if bad >= patience:
            stop_at = i
            break
    assert ck.extra["early_stopped"] == (stop_at is not None)
    if stop_at is not None:
        assert stop_at == len(losses) - 1
        assert ck.extra["stopped_at_step"] == ck.history[-1]["step"]


def test_same_seed_same_run(data):
    tr, va = data
    cfg = TrainConfig(batch_size=32, max_passes=2, seed=7)
    torch.manual_seed(1)
    a = train(toy_model(), tr, va, cfg)
    torch.manual_seed(1)
    b = train(toy_model(), tr, va, cfg)
    strip = lambda h: [{k: v for k, v in e.items() if k != "elapsed_s"} for e in h]
    assert strip(a.history) == strip(b.history)
    for k in a.model_state:
        assert torch.equal(a.model_state[k], b.model_state[k])


def test_single_step_reduces_batch_loss(data):
    tr, va = data
    torch.manual_seed(0)
    model = toy_model()
    x, y = tr.batch(np.arange(len(tr)))
    model.train()
    with torch.no_grad():
        before = objective(model, x, y, 1e-6)[0].item()
    train(model, tr, va, TrainConfig(lr=1e-4, batch_size=len(tr), max_steps=1))
    model.train()
    with torch.no_grad():
        after = objective(model, x, y, 1e-6)[0].item()
    assert after < before


def test_l2_term_is_exact(data):
    tr, _ = data
    model = toy_model()
    model.train()
    x, y = tr.batch(np.arange(8))
    torch.manual_seed(0)
    with_reg, ce = objective(model, x, y, 1e-6)
    manual = 0.0
    for name, p in model.named_parameters():
        is_matrix = name.endswith("weight") and p.dim() >= 2 or ".weight_" in name
        if is_matrix:
            manual += float((p.detach().double() ** 2).sum())
    # the difference of two float32 losses near 1.6 is only good to a couple of ulp
    assert (with_reg - ce).item() == pytest.approx(1e-6 * manual, abs=3e-7)
    bn_weights = [p for n, p in model.named_parameters() if "bn" in n and n.endswith("weight")]
    assert bn_weights and all(p.dim() == 1 for p in bn_weights)
    assert float(l2_penalty(model).detach()) == pytest.approx(manual, rel=1e-5)


class _Exploding(nn.Module):
    kind = "exploding"

    def __init__(self):
        super().__init__()
        self.w = nn.Parameter(torch.ones(5, 60))

    def forward(self, x):
        return x[:, -1] @ self.w.T * float("inf")

    def describe(self):
        return {"kind": self.kind}


def test_non_finite_loss_aborts_with_context(data):
    tr, va = data
    with pytest.raises(NonFiniteLoss) as err:
        train(_Exploding(), tr, va, TrainConfig(batch_size=32))
    assert err.value.step == 0
    assert err.value.batch_id == (0, 0)
    assert "non-finite" in str(err.value)


def test_rejects_empty_or_leaky_splits(data):
    tr, va = data
    empty = SequenceSet([toy_arrays(1, 0)[0]], 1)
    with pytest.raises(TrainingError):
        train(toy_model(), empty, va, TrainConfig())
    with pytest.raises(TrainingError, match="shared"):
        train(toy_model(), tr, tr, TrainConfig())


def test_checkpoint_round_trip_and_log(tmp_path, data):
    tr, va = data
    model = toy_model()
    log = tmp_path / "train.jsonl"
    ck = train(model, tr, va, TrainConfig(batch_size=32, max_passes=2), log_path=log)
    entries = [json.loads(line) for line in log.read_text().splitlines()]
    assert len(entries) == 2
    assert set(entries[0]) == {"step", "pass", "train_loss", "val_loss", "val_accuracy", "elapsed_s"}
    ck.save(tmp_path / "ck.pt")
    clone = Checkpoint.load(tmp_path / "ck.pt").build_model()
    np.testing.assert_array_equal(predict_proba(model, va), predict_proba(clone, va))
    groups = ck.optimizer_state["param_groups"][0]
    assert groups["lr"] == 0.005 and tuple(groups["betas"]) == (0.9, 0.999)


def test_remainder_batch_is_used(data):
    tr, va = data
    ck = train(toy_model(), tr, va, TrainConfig(batch_size=64, max_passes=1))
    assert ck.extra["stopped_at_step"] == 4  # 200 samples -> 3 full batches + 8 left over


def test_device_resolution():
    assert resolve_device(None).type == "cpu"
    assert resolve_device("cpu").type == "cpu"
    assert resolve_device("auto").type == ("cuda" if torch.cuda.is_available() else "cpu")
