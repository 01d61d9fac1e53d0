"""One-dimensional ResNet-50 variant that turns a 30-s epoch into sub-epoch features.

Length chain for a 3000-sample epoch (100 Hz)::

    stem conv /2 -> 1500, max-pool /2 -> 750, stage 1 -> 750, stage 2 /2 -> 375,
    max-pool /2 -> 188, stage 3 /2 -> 94, stage 4 /2 -> 47

Every conv and pool uses "same"-style padding, so each halving is ``ceil(n / 2)``.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn


@dataclass
class EncoderConfig:
    input_length: int = 3000
    stem_width: int = 7
    stem_filters: int = 64
    stem_stride: int = 2
    stage_blocks: list = field(default_factory=lambda: [3, 4, 6, 3])
    stage_filters: list = field(
        default_factory=lambda: [(16, 16, 64), (16, 16, 64), (32, 32, 128), (32, 32, 128)]
    )
    extra_maxpool_before_stage3: bool = True
    dropout_p: float = 0.5
    bn_momentum: float = 0.9

    def __post_init__(self):
        self.stage_blocks = [int(b) for b in self.stage_blocks]
        self.stage_filters = [tuple(int(v) for v in f) for f in self.stage_filters]
        if len(self.stage_blocks) != len(self.stage_filters):
            raise ValueError("stage_blocks and stage_filters must have equal length")

    @property
    def out_channels(self) -> int:
        return self.stage_filters[-1][2]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_filters"] = [list(f) for f in self.stage_filters]
        return d


def _halve(n: int) -> int:
    return -(-n // 2)


def feature_length(input_length: int, config: EncoderConfig | None = None) -> int:
    """Number of sub-epoch feature columns produced for ``input_length`` samples."""
    config = config or EncoderConfig()
    n = _halve(input_length)  # stem
    n = _halve(n)  # post-stem max-pool
    for i in range(len(config.stage_blocks)):
        if i == 2 and config.extra_maxpool_before_stage3:
            n = _halve(n)
        if i > 0:
            n = _halve(n)
    return n


def receptive_field(config: EncoderConfig | None = None) -> tuple[int, int]:
    """(span in samples, hop in samples) of one output feature column.

    Consecutive columns start ``hop`` samples apart and each sees ``span``
    input samples, so neighbouring sub-epochs overlap by ``span - hop``.
    """
    config = config or EncoderConfig()
    span, hop = 1, 1

    def layer(k, s):
        nonlocal span, hop
        span += (k - 1) * hop
        hop *= s

    layer(config.stem_width, config.stem_stride)
    layer(3, 2)
    for i, n_blocks in enumerate(config.stage_blocks):
        if i == 2 and config.extra_maxpool_before_stage3:
            layer(3, 2)
        for b in range(n_blocks):
            layer(1, 2 if (b == 0 and i > 0) else 1)
            layer(3, 1)
            layer(1, 1)
    return span, hop


@contextmanager
def batch_invariant():
    """Run convolutions on torch's native kernels instead of oneDNN.

    oneDNN chooses its algorithm by batch size, so an epoch encoded inside a
    batch can differ in the last bits from the same epoch encoded alone. The
    native kernels process each batch item independently. They are several
    times slower on large batches, so training and bulk evaluation skip this.
    """
    previous = torch.backends.mkldnn.enabled
    torch.backends.mkldnn.enabled = False
    try:
        yield
    finally:
        torch.backends.mkldnn.enabled = previous


class Bottleneck(nn.Module):
    """Post-activation bottleneck: 1x1 -> 3x1 -> 1x1, each followed by BN, ReLU after the sum."""

    def __init__(self, in_ch, mid1, mid2, out_ch, stride=1, bn_momentum=0.9):
        super().__init__()
        # torch's momentum weights the new batch statistic
        m = 1.0 - bn_momentum
        self.conv1 = nn.Conv1d(in_ch, mid1, 1, stride=stride, bias=False)
        self.bn1 = nn.BatchNorm1d(mid1, momentum=m)
        self.conv2 = nn.Conv1d(mid1, mid2, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm1d(mid2, momentum=m)
        self.conv3 = nn.Conv1d(mid2, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm1d(out_ch, momentum=m)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv1d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm1d(out_ch, momentum=m),
            )
        else:
            self.shortcut = nn.Identity()

    def residual(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        return self.bn3(self.conv3(out))

    def forward(self, x):
        return self.relu(self.residual(x) + self.shortcut(x))


class ResNetEncoder(nn.Module):
    """Maps (N, input_length) or (N, 1, input_length) epochs to (N, l, u) feature sequences."""

    def __init__(self, config: EncoderConfig | None = None):
        super().__init__()
        self.config = config = config or EncoderConfig()
        m = 1.0 - config.bn_momentum
        self.stem = nn.Sequential(
            nn.Conv1d(1, config.stem_filters, config.stem_width, stride=config.stem_stride,
                      padding=config.stem_width // 2, bias=False),
            nn.BatchNorm1d(config.stem_filters, momentum=m),
            nn.ReLU(inplace=True),
            nn.MaxPool1d(3, stride=2, padding=1),
        )
        stages = []
        in_ch = config.stem_filters
        for i, (n_blocks, (f1, f2, f3)) in enumerate(zip(config.stage_blocks, config.stage_filters)):
            layers = []
            if i == 2 and config.extra_maxpool_before_stage3:
                layers.append(nn.MaxPool1d(3, stride=2, padding=1))
            for b in range(n_blocks):
                stride = 2 if (b == 0 and i > 0) else 1
                layers.append(Bottleneck(in_ch, f1, f2, f3, stride, config.bn_momentum))
                in_ch = f3
            stages.append(nn.Sequential(*layers))
        self.stages = nn.Sequential(*stages)
        self.dropout = nn.Dropout(config.dropout_p)
        self.reset_parameters()

    @property
    def out_channels(self) -> int:
        return self.config.out_channels

    def output_length(self, input_length: int | None = None) -> int:
        return feature_length(input_length or self.config.input_length, self.config)

    def reset_parameters(self):
        for mod in self.modules():
            if isinstance(mod, nn.Conv1d):
                nn.init.kaiming_normal_(mod.weight, mode="fan_in", nonlinearity="relu")
            elif isinstance(mod, nn.BatchNorm1d):
                nn.init.ones_(mod.weight)
                nn.init.zeros_(mod.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 2:
            x = x.unsqueeze(1)
        if x.dim() != 3 or x.shape[1] != 1:
            raise ValueError(f"expected (N, samples) or (N, 1, samples), got {tuple(x.shape)}")
        if x.shape[-1] != self.config.input_length:
            raise ValueError(
                f"epoch has {x.shape[-1]} samples, encoder expects {self.config.input_length}"
            )
        out = self.stages(self.stem(x))
        out = self.dropout(out)
        # columns are sub-epochs in chronological order
        return out.transpose(1, 2)

    def encode_sequence(self, x: torch.Tensor) -> torch.Tensor:
        """(N, L, samples) -> (N, L*l, u); each epoch is encoded with the same weights."""
        if x.dim() != 3:
            raise ValueError(f"expected (N, L, samples), got {tuple(x.shape)}")
        n, L, s = x.shape
        feats = self.forward(x.reshape(n * L, s))
        return feats.reshape(n, L * feats.shape[1], feats.shape[2])


def encode_epoch(encoder: ResNetEncoder, signal) -> torch.Tensor:
    """Encode one epoch signal into an (l, u) feature sequence (batch-invariant kernels)."""
    x = torch.as_tensor(signal, dtype=torch.float32)
    if x.dim() != 1:
        raise ValueError("encode_epoch takes a single 1-D epoch signal")
    with batch_invariant():
        return encoder(x.unsqueeze(0))[0]


def encode_sequence(encoder: ResNetEncoder, epochs) -> torch.Tensor:
    """Encode L epochs into one (L*l, u) series of feature sequences.

    Each (l, u) block is bitwise equal to ``encode_epoch`` of that epoch.
    """
    lengths = {len(e) for e in epochs}
    if len(lengths) != 1:
        raise ValueError(f"ragged epoch lengths: {sorted(lengths)}")
    x = torch.as_tensor(np.stack([np.asarray(e, dtype=np.float32) for e in epochs]))
    with batch_invariant():
        return encoder.encode_sequence(x.unsqueeze(0))[0]
