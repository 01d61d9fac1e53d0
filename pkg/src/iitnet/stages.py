"""Stage vocabulary and the value objects shared across the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

EPOCH_SECONDS = 30
N_CLASSES = 5


class StageLabel(enum.IntEnum):
    """AASM five-class stage, encoded 0-4 in a fixed order."""

    W = 0
    N1 = 1
    N2 = 2
    N3 = 3
    REM = 4

    @classmethod
    def decode(cls, value: int) -> StageLabel:
        return cls(int(value))

    def encode(self) -> int:
        return int(self)


STAGE_NAMES = [s.name for s in StageLabel]


class Excluded:
    """Sentinel for epochs that are dropped at ingestion (movement, unscored)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "EXCLUDED"


EXCLUDED = Excluded()


class UnknownStageToken(ValueError):
    def __init__(self, token, source=None):
        self.token = token
        self.source = source
        where = f" in {source}" if source else ""
        super().__init__(f"unknown sleep-stage token {token!r}{where}")


# R&K and AASM spellings seen in SleepEDF / MASS hypnograms and NSRR XML.
_VOCABULARY = {
    "sleep stage w": StageLabel.W,
    "sleep stage 1": StageLabel.N1,
    "sleep stage 2": StageLabel.N2,
    "sleep stage 3": StageLabel.N3,
    "sleep stage 4": StageLabel.N3,
    "sleep stage r": StageLabel.REM,
    "sleep stage n1": StageLabel.N1,
    "sleep stage n2": StageLabel.N2,
    "sleep stage n3": StageLabel.N3,
    "sleep stage ?": EXCLUDED,
    "movement time": EXCLUDED,
    "w": StageLabel.W,
    "n1": StageLabel.N1,
    "n2": StageLabel.N2,
    "n3": StageLabel.N3,
    "n4": StageLabel.N3,
    "s1": StageLabel.N1,
    "s2": StageLabel.N2,
    "s3": StageLabel.N3,
    "s4": StageLabel.N3,
    "r": StageLabel.REM,
    "rem": StageLabel.REM,
    "wake": StageLabel.W,
    "movement": EXCLUDED,
    "mt": EXCLUDED,
    "unknown": EXCLUDED,
    "?": EXCLUDED,
    # NSRR profusion integer codes
    "0": StageLabel.W,
    "1": StageLabel.N1,
    "2": StageLabel.N2,
    "3": StageLabel.N3,
    "4": StageLabel.N3,
    "5": StageLabel.REM,
    "6": EXCLUDED,
    "9": EXCLUDED,
}


def harmonize_label(raw_label: str, source: str | None = None):
    """Map a dataset-native stage token to a StageLabel or ``EXCLUDED``.

    N4 is merged into N3; movement and unscored epochs become ``EXCLUDED``.
    Raises UnknownStageToken for anything outside the known vocabulary.
    """
    key = " ".join(str(raw_label).strip().lower().split())
    try:
        return _VOCABULARY[key]
    except KeyError:
        raise UnknownStageToken(raw_label, source) from None


@dataclass(frozen=True)
class LabeledEpoch:
    samples: np.ndarray
    label: StageLabel
    subject_id: str
    position: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float32)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "label", StageLabel(self.label))


@dataclass(frozen=True)
class SequenceSample:
    """``epochs`` in chronological order; the last one is the scored epoch."""

    epochs: tuple
    target_label: StageLabel

    def __post_init__(self):
        object.__setattr__(self, "epochs", tuple(self.epochs))
        if not self.epochs:
            raise ValueError("a sequence sample needs at least one epoch")
        if self.epochs[-1].label != self.target_label:
            raise ValueError("target_label must be the label of the last epoch")
        if len({e.subject_id for e in self.epochs}) != 1:
            raise ValueError("sequence sample mixes subjects")

    @property
    def L(self) -> int:
        return len(self.epochs)

    @property
    def subject_id(self) -> str:
        return self.epochs[-1].subject_id

    @property
    def position(self) -> int:
        return self.epochs[-1].position

    def signal(self) -> np.ndarray:
        """Stacked (L, n_samples) float32 array."""
        return np.stack([e.samples for e in self.epochs])


@dataclass(frozen=True)
class ConfusionMatrix:
    """5x5 counts, rows = predicted stage, columns = true stage."""

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    )

    def __post_init__(self):
        arr = np.array(self.counts, dtype=np.int64)
        if arr.shape != (N_CLASSES, N_CLASSES):
            raise ValueError(f"confusion matrix must be {N_CLASSES}x{N_CLASSES}, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("confusion counts must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @classmethod
    def from_labels(cls, y_pred, y_true) -> ConfusionMatrix:
        y_pred = np.asarray(y_pred, dtype=np.int64)
        y_true = np.asarray(y_true, dtype=np.int64)
        if y_pred.shape != y_true.shape:
            raise ValueError("prediction and truth lengths differ")
        counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        np.add.at(counts, (y_pred, y_true), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)
