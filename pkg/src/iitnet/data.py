from __future__ import annotations

import numpy as np
import torch

from .ingest import EpochArray, sequence_index


class SequenceSet:
    """All sequence samples of a group of recordings, held as one epoch matrix + index.

    ``batch(rows)`` gathers an (B, L, samples) tensor without materializing
    every SequenceSample up front.
    """

    def __init__(self, arrays: list, L: int, pad: str = "repeat"):
        if not arrays:
            raise ValueError("SequenceSet needs at least one recording")
        rates = {a.sample_rate for a in arrays}
        widths = {a.samples.shape[1] for a in arrays}
        if len(rates) != 1 or len(widths) != 1:
            raise ValueError(f"recordings disagree in sample rate {rates} or epoch length {widths}")
        self.L = L
        self.sample_rate = rates.pop()
        offsets = np.cumsum([0] + [len(a) for a in arrays])
        self.epochs = torch.from_numpy(np.concatenate([a.samples for a in arrays]))
        self.epoch_labels = np.concatenate([a.labels for a in arrays])
        rows, subjects, recordings = [], [], []
        for off, a in zip(offsets, arrays):
            idx = sequence_index(a.positions, L, pad) + off
            rows.append(idx)
            subjects.extend([a.subject_id] * len(idx))
            recordings.extend([a.recording_id] * len(idx))
        self.index = np.concatenate(rows) if rows else np.zeros((0, L), dtype=np.int64)
        self.labels = self.epoch_labels[self.index[:, -1]]
        self.subjects = np.array(subjects, dtype=object)
        self.recordings = np.array(recordings, dtype=object)

    def __len__(self):
        return len(self.index)

    @property
    def epoch_samples(self) -> int:
        return self.epochs.shape[1]

    @property
    def subject_ids(self) -> list:
        return sorted(set(self.subjects))

    def batch(self, rows) -> tuple[torch.Tensor, torch.Tensor]:
        rows = np.asarray(rows)
        x = self.epochs[torch.from_numpy(self.index[rows].reshape(-1))]
        x = x.reshape(len(rows), self.L, -1)
        return x, torch.from_numpy(self.labels[rows])

    def batches(self, batch_size: int, order=None):
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start:start + batch_size])


def split_by_subject(arrays: list, subjects) -> list:
    wanted = set(subjects)
    return [a for a in arrays if a.subject_id in wanted]


def group_by_subject(arrays: list) -> dict:
    out: dict = {}
    for a in arrays:
        out.setdefault(a.subject_id, []).append(a)
    return out


def class_counts(arrays: list) -> np.ndarray:
    return sum((a.class_counts() for a in arrays), np.zeros(5, dtype=np.int64))


__all__ = ["EpochArray", "SequenceSet", "split_by_subject", "group_by_subject", "class_counts"]
