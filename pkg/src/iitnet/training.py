"""One-step end-to-end training with Adam, L2 weight decay and early stopping.

Validation runs on a fixed cadence (every pass over the training set by
default, or every ``eval_every`` batches). Training stops once the
validation cost has not improved for ``early_stop_patience`` consecutive
evaluations; the returned checkpoint is the one with the highest validation
accuracy seen, earliest on ties.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import SequenceSet
from .ingest import DatasetKind

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

BATCH_SIZES = {
    DatasetKind.SleepEDF: 256,
    DatasetKind.MASS: 128,
    DatasetKind.SHHS: 256,
    DatasetKind.Generic: 32,
}


@dataclass
class TrainConfig:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_reg: float = 1e-6
    batch_size: int = 256
    early_stop_patience: int = 10
    max_passes: int = 100
    eval_every: int | None = None
    max_steps: int | None = None
    seed: int = 0

    @classmethod
    def for_dataset(cls, kind, **overrides) -> TrainConfig:
        return cls(batch_size=BATCH_SIZES[DatasetKind(kind)], **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingError(Exception):
    pass


class NonFiniteLoss(TrainingError):
    def __init__(self, step, batch_id, history):
        self.step, self.batch_id, self.history = step, batch_id, list(history)
        super().__init__(
            f"non-finite loss at step {step} (batch {batch_id}); recent losses: {self.history}"
        )


@dataclass
class Checkpoint:
    model_spec: dict
    model_state: dict
    optimizer_state: dict | None
    train_config: dict
    best_validation_accuracy: float
    step: int
    history: list = field(default_factory=list)
    format_version: int = CHECKPOINT_VERSION
    extra: dict = field(default_factory=dict)

    def save(self, path) -> Path:
        path = Path(path)
        torch.save(asdict(self), path)
        return path

    @classmethod
    def load(cls, path) -> Checkpoint:
        raw = torch.load(path, map_location="cpu", weights_only=False)
        version = raw.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise TrainingError(f"{path}: checkpoint format {version}, expected {CHECKPOINT_VERSION}")
        return cls(**raw)

    def build_model(self) -> nn.Module:
        from .models import model_from_spec

        model = model_from_spec(self.model_spec)
        model.load_state_dict(self.model_state)
        model.eval()
        return model


def regularized_parameters(model: nn.Module) -> list:
    """Every parameter with more than one dimension; biases and batch-norm affine terms are excluded."""
    return [p for name, p in model.named_parameters() if p.dim() > 1 and "weight" in name]


def l2_penalty(model: nn.Module) -> torch.Tensor:
    params = regularized_parameters(model)
    if not params:
        return torch.zeros(())
    return sum(p.pow(2).sum() for p in params)


def _device(model: nn.Module) -> torch.device:
    return next(model.parameters()).device


def resolve_device(name: str | None) -> torch.device:
    """``"auto"`` picks CUDA when available; ``None`` means CPU."""
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name or "cpu")


def objective(model, x, y, weight_reg: float) -> tuple[torch.Tensor, torch.Tensor]:
    """(total loss, cross-entropy part) for one batch."""
    dev = _device(model)
    ce = F.cross_entropy(model(x.to(dev)), y.to(dev))
    if weight_reg:
        return ce + weight_reg * l2_penalty(model), ce
    return ce, ce


@torch.no_grad()
def predict_proba(model: nn.Module, data: SequenceSet, batch_size: int = 256) -> np.ndarray:
    was_training = model.training
    model.eval()
    out = []
    dev = _device(model)
    for x, _ in data.batches(batch_size):
        out.append(torch.softmax(model(x.to(dev)).double(), dim=1).cpu().numpy())
    model.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, 5))


@torch.no_grad()
def evaluate(model: nn.Module, data: SequenceSet, batch_size: int = 256) -> dict:
    """Eval-mode loss and accuracy on ``data``, with the argmax predictions."""
    was_training = model.training
    model.eval()
    total, correct, preds = 0.0, 0, []
    dev = _device(model)
    for x, y in data.batches(batch_size):
        logits = model(x.to(dev)).cpu()
        total += F.cross_entropy(logits, y, reduction="sum").item()
        p = logits.argmax(dim=1)
        correct += int((p == y).sum())
        preds.append(p.numpy())
    model.train(was_training)
    n = len(data)
    return {
        "loss": total / n,
        "accuracy": correct / n,
        "predictions": np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64),
    }


def _cpu_state(model: nn.Module) -> dict:
    return {k: v.detach().to("cpu", copy=True) for k, v in model.state_dict().items()}


def train(model: nn.Module, train_set: SequenceSet, val_set: SequenceSet, config: TrainConfig,
          log_path=None, extra=None) -> Checkpoint:
    if len(train_set) == 0 or len(val_set) == 0:
        raise TrainingError("training and validation sets must both be non-empty")
    overlap = set(train_set.subject_ids) & set(val_set.subject_ids)
    if overlap:
        raise TrainingError(f"subjects shared between training and validation: {sorted(overlap)}")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr,
                                 betas=(config.beta1, config.beta2), eps=config.eps)
    log_file = open(log_path, "a") if log_path else None
    history, loss_tail = [], []
    best_cost, bad_evals = math.inf, 0
    best_acc, best_state, best_step = -1.0, None, 0
    step, since_eval, running, running_n = 0, 0, 0.0, 0
    t0 = time.perf_counter()
    n_batches = -(-len(train_set) // config.batch_size)
    eval_every = config.eval_every or n_batches
    stop = False
    model.train()
    try:
        for pass_no in range(config.max_passes):
            order = rng.permutation(len(train_set))
            for b, (x, y) in enumerate(train_set.batches(config.batch_size, order)):
                loss, ce = objective(model, x, y, config.weight_reg)
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(step, (pass_no, b), loss_tail[-10:] + [loss.item()])
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                step += 1
                since_eval += 1
                loss_tail.append(ce.item())
                running += ce.item() * len(y)
                running_n += len(y)
                last_batch = b == n_batches - 1
                if since_eval >= eval_every or (config.eval_every is None and last_batch):
                    since_eval = 0
                    val = evaluate(model, val_set)
                    entry = {
                        "step": step, "pass": pass_no, "train_loss": running / running_n,
                        "val_loss": val["loss"], "val_accuracy": val["accuracy"],
                        "elapsed_s": round(time.perf_counter() - t0, 3),
                    }
                    running, running_n = 0.0, 0
                    history.append(entry)
                    if log_file:
                        log_file.write(json.dumps(entry) + "\n")
                        log_file.flush()
                    log.info("step %d val_loss %.4f val_acc %.4f", step, val["loss"], val["accuracy"])
                    if val["accuracy"] > best_acc:
                        best_acc, best_step = val["accuracy"], step
                        best_state = _cpu_state(model)
                    if val["loss"] < best_cost:
                        best_cost, bad_evals = val["loss"], 0
                    else:
                        bad_evals += 1
                        if bad_evals >= config.early_stop_patience:
                            stop = True
                if config.max_steps is not None and step >= config.max_steps:
                    stop = True
                if stop:
                    break
            if stop:
                break
    finally:
        if log_file:
            log_file.close()
    if best_state is None:
        # no evaluation happened (max_steps below the cadence); score the final weights
        val = evaluate(model, val_set)
        best_acc, best_step, best_state = val["accuracy"], step, _cpu_state(model)
    model.load_state_dict(best_state)
    model.eval()
    return Checkpoint(
        model_spec=model.describe(),
        model_state=best_state,
        optimizer_state=optimizer.state_dict(),
        train_config=config.to_dict(),
        best_validation_accuracy=best_acc,
        step=best_step,
        history=history,
        extra=dict(extra or {}, stopped_at_step=step, early_stopped=bad_evals >= config.early_stop_patience),
    )


def time_forward(model: nn.Module, batch: torch.Tensor, trials: int = 20) -> float:
    """Mean wall-clock milliseconds of one eval-mode forward pass."""
    model.eval()
    with torch.no_grad():
        model(batch)
        t0 = time.perf_counter()
        for _ in range(trials):
            model(batch)
    return (time.perf_counter() - t0) / trials * 1000
