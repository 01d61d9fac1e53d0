"""Synthetic EEG-like nights for desk-scale checks of the whole pipeline.

Stage sequences follow a first-order Markov chain. Each epoch is coloured
background noise plus the stage's oscillation: a sum of a few sinusoids
with random frequencies inside the stage's band and random phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import EpochArray, RawRecording
from .stages import EPOCH_SECONDS, STAGE_NAMES

# (low Hz, high Hz, amplitude) per stage in W, N1, N2, N3, REM order
DEFAULT_BANDS = [
    (8.0, 12.0, 1.0),   # W: alpha
    (4.0, 7.0, 1.0),    # N1: theta
    (12.0, 14.0, 1.0),  # N2: sigma
    (0.5, 2.0, 2.0),    # N3: delta
    (2.5, 4.0, 1.0),    # REM
]

# Rough shape of a night: strong self-transitions, N1 as the gateway from W.
DEFAULT_KERNEL = [
    [0.80, 0.15, 0.03, 0.00, 0.02],
    [0.10, 0.50, 0.35, 0.00, 0.05],
    [0.03, 0.05, 0.80, 0.07, 0.05],
    [0.02, 0.00, 0.13, 0.85, 0.00],
    [0.05, 0.05, 0.10, 0.00, 0.80],
]


class InvalidKernel(ValueError):
    pass


@dataclass
class SyntheticSpec:
    n_subjects: int = 8
    epochs_per_subject: int = 200
    sample_rate: float = 100.0
    class_signal_map: list = field(default_factory=lambda: list(DEFAULT_BANDS))
    transition_kernel: list = field(default_factory=lambda: [list(r) for r in DEFAULT_KERNEL])
    noise_level: float = 0.3
    components: int = 3

    def validate(self):
        k = np.asarray(self.transition_kernel, dtype=float)
        if k.shape != (5, 5):
            raise InvalidKernel(f"transition kernel must be 5x5, got {k.shape}")
        if (k < 0).any() or not np.allclose(k.sum(axis=1), 1.0, atol=1e-9):
            raise InvalidKernel("transition kernel rows must be non-negative and sum to 1")
        if len(self.class_signal_map) != 5:
            raise ValueError("class_signal_map needs one entry per stage")
        nyquist = self.sample_rate / 2
        for name, (lo, hi, amp) in zip(STAGE_NAMES, self.class_signal_map):
            if not 0 < lo <= hi < nyquist:
                raise ValueError(f"{name} band {lo}-{hi} Hz must lie inside (0, {nyquist}) Hz")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")

    @property
    def epoch_samples(self) -> int:
        return int(round(self.sample_rate * EPOCH_SECONDS))


def stationary_distribution(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=float)
    vals, vecs = np.linalg.eig(k.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    return v / v.sum()


def iid_kernel(prior) -> list:
    """A kernel whose rows are all ``prior``: stages drawn independently."""
    p = np.asarray(prior, dtype=float)
    p = p / p.sum()
    return [list(p) for _ in range(5)]


def sample_stages(kernel, n: int, rng: np.random.Generator, start=None) -> np.ndarray:
    k = np.asarray(kernel, dtype=float)
    cdf = np.cumsum(k, axis=1)
    out = np.empty(n, dtype=np.int64)
    state = rng.choice(5, p=stationary_distribution(k)) if start is None else start
    u = rng.random(n)
    for i in range(n):
        out[i] = state
        state = min(int(np.searchsorted(cdf[state], u[i], side="right")), 4)
    return out


def _background(rng, n, sample_rate) -> np.ndarray:
    # white noise shaped to roughly 1/f amplitude above 0.5 Hz
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec *= 1.0 / np.sqrt(np.maximum(freqs, 0.5))
    x = np.fft.irfft(spec, n)
    return x / (x.std() + 1e-12)


def epoch_signal(stage: int, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.epoch_samples
    t = np.arange(n) / spec.sample_rate
    lo, hi, amp = spec.class_signal_map[stage]
    x = np.zeros(n)
    for _ in range(spec.components):
        f = rng.uniform(lo, hi)
        x += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x *= amp / np.sqrt(spec.components)
    if spec.noise_level:
        x += spec.noise_level * _background(rng, n, spec.sample_rate)
    return x


def generate(spec: SyntheticSpec, seed: int = 0) -> list:
    """One RawRecording per subject; deterministic in (spec, seed)."""
    spec.validate()
    out = []
    for s in range(spec.n_subjects):
        rng = np.random.default_rng([seed, s])
        stages = sample_stages(spec.transition_kernel, spec.epochs_per_subject, rng)
        signal = np.concatenate([epoch_signal(int(st), spec, rng) for st in stages]).astype(np.float32)
        n = spec.epoch_samples
        out.append(RawRecording(
            signal=signal,
            sample_rate=spec.sample_rate,
            channel_name="SYNTH",
            subject_id=f"synth{s:03d}",
            epoch_annotations=[(i * n, STAGE_NAMES[st]) for i, st in enumerate(stages)],
            source=f"synthetic(seed={seed})",
        ))
    return out


def to_epoch_array(rec: RawRecording) -> EpochArray:
    n = int(round(rec.sample_rate * EPOCH_SECONDS))
    labels = np.array([STAGE_NAMES.index(lab) for _, lab in rec.epoch_annotations])
    samples = rec.signal[: len(labels) * n].reshape(len(labels), n)
    return EpochArray(samples, labels, np.arange(len(labels)), rec.subject_id, rec.subject_id,
                      rec.sample_rate)


def generate_arrays(spec: SyntheticSpec, seed: int = 0) -> list:
    return [to_epoch_array(r) for r in generate(spec, seed)]


def run_lengths(stages) -> np.ndarray:
    stages = np.asarray(stages)
    if len(stages) == 0:
        return np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(np.diff(stages)) + 1
    bounds = np.concatenate([[0], change, [len(stages)]])
    return np.diff(bounds)
