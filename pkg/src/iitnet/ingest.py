"""Recording ingestion: EDF signals + dataset-specific stage sidecars -> labeled epochs.

Each dataset kind has one adapter that knows how to pair a PSG file with its
annotation sidecar and how to read that sidecar:

* SleepEDF  ``SC4ssNx-PSG.edf`` + ``SC4ssNy-Hypnogram.edf`` (EDF+ annotations)
* MASS      ``01-03-0001 PSG.edf`` + ``01-03-0001 Base.edf`` (EDF+ annotations)
* SHHS      ``shhs1-200001.edf`` + ``shhs1-200001-profusion.xml``
* Generic   ``<id>.edf`` + ``<id>.csv``/``<id>.txt`` with one stage token per line,
            or ``onset,duration,stage`` rows
"""

from __future__ import annotations

import csv
import enum
import hashlib
import logging
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .edf import EDFError, EDFReader
from .stages import EPOCH_SECONDS, EXCLUDED, LabeledEpoch, SequenceSample, StageLabel, harmonize_label

log = logging.getLogger(__name__)


class DatasetKind(str, enum.Enum):
    SleepEDF = "sleepedf"
    MASS = "mass"
    SHHS = "shhs"
    Generic = "generic"


DEFAULT_CHANNELS = {
    DatasetKind.SleepEDF: "EEG Fpz-Cz",
    DatasetKind.MASS: "EEG F4-LER",
    DatasetKind.SHHS: "EEG",
    DatasetKind.Generic: "EEG",
}


class IngestError(Exception):
    pass


class AnnotationOverrun(IngestError):
    def __init__(self, epoch_indices, source=None):
        self.epoch_indices = list(epoch_indices)
        super().__init__(
            f"{source or 'recording'}: annotated epochs {self.epoch_indices} extend past the end of the signal"
        )


class AnnotationGranularity(IngestError):
    pass


class MissingAnnotations(IngestError):
    pass


@dataclass
class DatasetConfig:
    dataset_kind: DatasetKind = DatasetKind.SleepEDF
    channel: str | None = None
    sample_rate: float = 100.0
    wake_trim_epochs: int = 60
    sequence_length: int = 1
    trim_wake: bool | None = None
    pad: str = "repeat"

    def __post_init__(self):
        self.dataset_kind = DatasetKind(self.dataset_kind)
        if self.channel is None:
            self.channel = DEFAULT_CHANNELS[self.dataset_kind]
        if self.trim_wake is None:
            self.trim_wake = self.dataset_kind is DatasetKind.SleepEDF
        if not 1 <= int(self.sequence_length) <= 10:
            raise ValueError(f"sequence length must be in [1, 10], got {self.sequence_length}")
        if self.wake_trim_epochs < 0:
            raise ValueError("wake_trim_epochs must be >= 0")
        if self.pad not in ("repeat", "skip"):
            raise ValueError("pad must be 'repeat' or 'skip'")

    @property
    def epoch_samples(self) -> int:
        n = self.sample_rate * EPOCH_SECONDS
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"sample rate {self.sample_rate} does not give whole-sample epochs")
        return int(round(n))

    def to_dict(self) -> dict:
        return {
            "dataset_kind": self.dataset_kind.value,
            "channel": self.channel,
            "sample_rate": self.sample_rate,
            "wake_trim_epochs": self.wake_trim_epochs,
            "sequence_length": self.sequence_length,
            "trim_wake": self.trim_wake,
            "pad": self.pad,
        }


@dataclass
class RawRecording:
    signal: np.ndarray
    sample_rate: float
    channel_name: str
    subject_id: str
    epoch_annotations: list = field(default_factory=list)
    recording_id: str | None = None
    source: str | None = None
    native_rate: float | None = None

    def __post_init__(self):
        if self.recording_id is None:
            self.recording_id = self.subject_id


@dataclass
class EpochArray:
    """Retained epochs of one recording in array form (the unit that is cached)."""

    samples: np.ndarray  # (n, epoch_samples) float32
    labels: np.ndarray  # (n,) int64
    positions: np.ndarray  # (n,) int64, index within the night
    subject_id: str
    recording_id: str
    sample_rate: float

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.samples.ndim != 2 or not len(self.samples) == len(self.labels) == len(self.positions):
            raise ValueError("samples, labels and positions disagree in length")

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_epochs(cls, epochs, recording_id=None, sample_rate=100.0) -> EpochArray:
        if not epochs:
            raise ValueError("no epochs")
        return cls(
            samples=np.stack([e.samples for e in epochs]),
            labels=np.array([int(e.label) for e in epochs]),
            positions=np.array([e.position for e in epochs]),
            subject_id=epochs[0].subject_id,
            recording_id=recording_id or epochs[0].subject_id,
            sample_rate=sample_rate,
        )

    def to_epochs(self) -> list:
        return [
            LabeledEpoch(self.samples[i], StageLabel(int(self.labels[i])), self.subject_id,
                         int(self.positions[i]))
            for i in range(len(self))
        ]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=5)


# ---------------------------------------------------------------------------
# annotation sidecars


def _stage_like(text: str) -> bool:
    t = text.strip().lower()
    return t.startswith("sleep stage") or t.startswith("movement")


def _expand(onset: float, duration: float, label: str, source) -> list:
    """Split one (onset, duration) annotation into 30-s epochs as (onset_s, label)."""
    if duration <= 0:
        return []
    n = duration / EPOCH_SECONDS
    if abs(n - round(n)) > 1e-6:
        raise AnnotationGranularity(
            f"{source}: annotation {label!r} at {onset:g}s lasts {duration:g}s, "
            f"not a multiple of {EPOCH_SECONDS}s epochs"
        )
    return [(onset + i * EPOCH_SECONDS, label) for i in range(int(round(n)))]


def read_edf_stage_annotations(path) -> list:
    reader = EDFReader(path)
    out = []
    for onset, duration, text in sorted(reader.annotations(), key=lambda a: a[0]):
        if _stage_like(text):
            out.extend(_expand(onset, duration, text, path))
    return out


def read_profusion_xml(path) -> list:
    root = ET.parse(path).getroot()
    length = root.findtext(".//EpochLength")
    if length is not None and abs(float(length) - EPOCH_SECONDS) > 1e-6:
        raise AnnotationGranularity(f"{path}: epoch length {length}s, expected {EPOCH_SECONDS}s")
    stages = root.findall(".//SleepStages/SleepStage")
    if not stages:
        raise MissingAnnotations(f"{path}: no <SleepStage> entries")
    return [(i * EPOCH_SECONDS, s.text.strip()) for i, s in enumerate(stages)]


def read_generic_sidecar(path) -> list:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    if rows and len(rows[0]) >= 3 and rows[0][0].strip().lower() == "onset":
        rows = rows[1:]
    out = []
    for i, row in enumerate(rows):
        if len(row) >= 3:
            out.extend(_expand(float(row[0]), float(row[1]), row[2].strip(), path))
        else:
            out.append((i * EPOCH_SECONDS, row[0].strip()))
    return out


_SIDECAR_READERS = {
    DatasetKind.SleepEDF: read_edf_stage_annotations,
    DatasetKind.MASS: read_edf_stage_annotations,
    DatasetKind.SHHS: read_profusion_xml,
    DatasetKind.Generic: read_generic_sidecar,
}


def subject_of(path, kind: DatasetKind) -> str:
    name = Path(path).name
    if kind is DatasetKind.SleepEDF:
        # SC4ssN..: two nights per subject share the first five characters
        return name[:5]
    if kind is DatasetKind.MASS:
        return name.split(" ")[0]
    return re.sub(r"(-PSG)?\.edf$", "", name, flags=re.I)


def find_annotation(psg_path, kind: DatasetKind) -> Path:
    psg = Path(psg_path)
    folder = psg.parent
    if kind is DatasetKind.SleepEDF:
        hits = sorted(folder.glob(psg.name[:6] + "*-Hypnogram.edf"))
    elif kind is DatasetKind.MASS:
        hits = sorted(folder.glob(psg.name.replace(" PSG.edf", "") + " Base.edf"))
    elif kind is DatasetKind.SHHS:
        stem = psg.stem
        hits = sorted(folder.rglob(stem + "-profusion.xml"))
        if not hits:
            hits = sorted(folder.parent.rglob(stem + "-profusion.xml"))
    else:
        hits = [p for ext in (".csv", ".txt") for p in [psg.with_suffix(ext)] if p.exists()]
    if not hits:
        raise MissingAnnotations(f"no {kind.value} annotation sidecar found for {psg}")
    return hits[0]


def find_recordings(dataset_dir, kind: DatasetKind) -> list:
    """PSG files in ``dataset_dir`` (recursively) for the given dataset kind."""
    root = Path(dataset_dir)
    if kind is DatasetKind.SleepEDF:
        pattern = "*-PSG.edf"
    elif kind is DatasetKind.MASS:
        pattern = "* PSG.edf"
    else:
        pattern = "*.edf"
    files = sorted(p for p in root.rglob(pattern) if p.is_file())
    if kind in (DatasetKind.SHHS, DatasetKind.Generic):
        files = [p for p in files if not p.name.endswith(("-Hypnogram.edf", " Base.edf"))]
    return files


# ---------------------------------------------------------------------------


def resample(signal: np.ndarray, native: float, target: float) -> np.ndarray:
    if abs(native - target) < 1e-9:
        return signal
    ratio = Fraction(target / native).limit_denominator(1000)
    return resample_poly(signal, ratio.numerator, ratio.denominator)


def read_recording(path, config: DatasetConfig, annotation_path=None, labeled: bool = True) -> RawRecording:
    """Load the configured channel and its per-epoch annotations.

    The signal is resampled to ``config.sample_rate`` when the file's native
    rate differs; annotation start indices are expressed at the target rate.
    With ``labeled=False`` no sidecar is looked up and the annotation list is empty.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    reader = EDFReader(path)
    index = reader.channel_index(config.channel)
    native = reader.sample_rate(index)
    signal = resample(reader.physical(index), native, config.sample_rate)
    raw = []
    if labeled:
        if annotation_path is None:
            annotation_path = find_annotation(path, config.dataset_kind)
        raw = _SIDECAR_READERS[config.dataset_kind](annotation_path)
    annotations = [(int(round(onset * config.sample_rate)), label) for onset, label in raw]
    subject = subject_of(path, config.dataset_kind)
    return RawRecording(
        signal=signal.astype(np.float32),
        sample_rate=config.sample_rate,
        channel_name=reader.header.labels[index],
        subject_id=subject,
        epoch_annotations=annotations,
        recording_id=path.stem,
        source=str(path),
        native_rate=native,
    )


def trim_wake(labels: np.ndarray, positions: np.ndarray, margin: int) -> np.ndarray:
    """Boolean mask keeping at most ``margin`` epochs before/after the sleep period.

    Measured in night positions. An all-wake night has no sleep period and is kept whole.
    """
    sleep = positions[labels != StageLabel.W]
    if len(sleep) == 0:
        return np.ones(len(labels), dtype=bool)
    return (positions >= sleep.min() - margin) & (positions <= sleep.max() + margin)


def extract_epochs(rec: RawRecording, config: DatasetConfig) -> list:
    """Cut the recording into LabeledEpochs, dropping excluded stages and trimming wake."""
    n = config.epoch_samples
    kept, overrun = [], []
    for position, (start, raw_label) in enumerate(rec.epoch_annotations):
        label = harmonize_label(raw_label, rec.source)
        if label is EXCLUDED:
            continue
        if start < 0 or start + n > len(rec.signal):
            overrun.append(position)
            continue
        kept.append((position, start, label))
    if overrun:
        raise AnnotationOverrun(overrun, rec.source)
    if not kept:
        return []
    labels = np.array([k[2] for k in kept])
    positions = np.array([k[0] for k in kept])
    mask = trim_wake(labels, positions, config.wake_trim_epochs) if config.trim_wake else \
        np.ones(len(kept), dtype=bool)
    return [
        LabeledEpoch(rec.signal[start:start + n], label, rec.subject_id, position)
        for (position, start, label), keep in zip(kept, mask) if keep
    ]


def sequence_index(positions, L: int, pad: str = "repeat") -> np.ndarray:
    """(n_samples, L) indices into a chronological epoch list.

    Row k holds the target epoch and its L-1 predecessors, oldest first. A drop
    in position marks the start of a new night; context never crosses it. With
    ``pad='repeat'`` the first L-1 targets of a night are left-padded with the
    night's first epoch, so every epoch is scored; with ``pad='skip'`` they are
    dropped.
    """
    positions = np.asarray(positions)
    n = len(positions)
    if L < 1:
        raise ValueError("L must be >= 1")
    if n == 0:
        return np.zeros((0, L), dtype=np.int64)
    night_start = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        night_start[i] = i if positions[i] < positions[i - 1] else night_start[i - 1]
    idx = np.arange(n)[:, None] - np.arange(L - 1, -1, -1)[None, :]
    if pad == "skip":
        keep = idx[:, 0] >= night_start
        return idx[keep].astype(np.int64)
    return np.maximum(idx, night_start[:, None]).astype(np.int64)


def make_sequences(epochs: list, L: int, pad: str = "repeat") -> list:
    if not epochs:
        return []
    if len({e.subject_id for e in epochs}) != 1:
        raise ValueError("make_sequences expects epochs of a single subject")
    idx = sequence_index([e.position for e in epochs], L, pad)
    return [SequenceSample([epochs[j] for j in row], epochs[row[-1]].label) for row in idx]


def ingest_file(path, config: DatasetConfig, annotation_path=None) -> EpochArray | None:
    rec = read_recording(path, config, annotation_path)
    epochs = extract_epochs(rec, config)
    if not epochs:
        log.warning("%s: no scored epochs retained", path)
        return None
    return EpochArray.from_epochs(epochs, rec.recording_id, config.sample_rate)


def ingest_directory(dataset_dir, config: DatasetConfig, skip_bad: bool = False):
    """Ingest every recording found; returns (list of EpochArray, list of (path, error))."""
    files = find_recordings(dataset_dir, config.dataset_kind)
    if not files:
        raise IngestError(f"no recordings found in {dataset_dir}")
    arrays, skipped = [], []
    for path in files:
        try:
            arr = ingest_file(path, config)
        except (EDFError, IngestError, ValueError, OSError) as exc:
            if not skip_bad:
                raise
            log.warning("skipping %s: %s", path, exc)
            skipped.append((str(path), str(exc)))
            continue
        if arr is not None:
            arrays.append(arr)
    return arrays, skipped


def content_hash(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(os.fspath(p) for p in paths):
        with open(p, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()
