"""End-to-end DeepSleepNet baselines sharing IITNet's BiLSTM head.

E2E-DeepSleepNet flattens each epoch's two CNN branches into one vector, so
its recurrence runs over L epoch-level features (inter-epoch context only).
E2E-IntraDeepSleepNet keeps the time axis: the large-filter branch is
linearly interpolated to the small branch's length, the two are stacked on
channels, and two width-1 convolutions halve the channel count, giving a
sub-epoch feature sequence per epoch.
"""

from __future__ import annotations

import enum
import json
import math
from importlib import resources

import torch
import torch.nn.functional as F
from torch import nn

from .head import ContextHead, HeadConfig


class BaselineKind(str, enum.Enum):
    E2E_DeepSleepNet = "e2e-dsn"
    E2E_IntraDeepSleepNet = "e2e-intra-dsn"


def load_dsn_config() -> dict:
    text = resources.files("iitnet.configs").joinpath("deepsleepnet.json").read_text()
    return json.loads(text)


def same_out(n: int, stride: int) -> int:
    return -(-n // stride)


class SameConv1d(nn.Conv1d):
    """Conv1d with TensorFlow-style SAME padding: output length ceil(n / stride)."""

    def forward(self, x):
        n = x.shape[-1]
        k, s = self.kernel_size[0], self.stride[0]
        total = max((same_out(n, s) - 1) * s + k - n, 0)
        x = F.pad(x, (total // 2, total - total // 2))
        return super().forward(x)


class SameMaxPool1d(nn.Module):
    def __init__(self, width, stride):
        super().__init__()
        self.width, self.stride = width, stride

    def forward(self, x):
        n = x.shape[-1]
        total = max((same_out(n, self.stride) - 1) * self.stride + self.width - n, 0)
        x = F.pad(x, (total // 2, total - total // 2), value=-math.inf)
        return F.max_pool1d(x, self.width, self.stride)


def _conv_bn(in_ch, out_ch, width, stride=1):
    return [SameConv1d(in_ch, out_ch, width, stride=stride, bias=False),
            nn.BatchNorm1d(out_ch, momentum=0.1), nn.ReLU(inplace=True)]


def branch(spec: dict, sample_rate: float, dropout: float) -> nn.Sequential:
    c1 = spec["conv1"]
    width = max(1, int(round(sample_rate * c1["width_fs"])))
    stride = max(1, int(sample_rate * c1["stride_fs"]))
    layers = _conv_bn(1, c1["filters"], width, stride)
    layers += [SameMaxPool1d(spec["pool1"]["width"], spec["pool1"]["stride"]), nn.Dropout(dropout)]
    ch = c1["filters"]
    for _ in range(spec["convs"]["count"]):
        layers += _conv_bn(ch, spec["convs"]["filters"], spec["convs"]["width"])
        ch = spec["convs"]["filters"]
    layers.append(SameMaxPool1d(spec["pool2"]["width"], spec["pool2"]["stride"]))
    return nn.Sequential(*layers)


def branch_length(spec: dict, sample_rate: float, input_length: int) -> int:
    """Time steps out of a branch for a given epoch length (SAME padding throughout)."""
    stride = max(1, int(sample_rate * spec["conv1"]["stride_fs"]))
    n = same_out(input_length, stride)
    n = same_out(n, spec["pool1"]["stride"])
    return same_out(n, spec["pool2"]["stride"])


class _DualBranch(nn.Module):
    def __init__(self, sample_rate, input_length, config):
        super().__init__()
        self.small = branch(config["small"], sample_rate, config["dropout"])
        self.large = branch(config["large"], sample_rate, config["dropout"])
        self.input_length = input_length
        self.small_len = branch_length(config["small"], sample_rate, input_length)
        self.large_len = branch_length(config["large"], sample_rate, input_length)
        self.channels = config["small"]["convs"]["filters"] + config["large"]["convs"]["filters"]

    def forward(self, x):
        if x.shape[-1] != self.input_length:
            raise ValueError(f"epoch has {x.shape[-1]} samples, model expects {self.input_length}")
        x = x.unsqueeze(1)
        return self.small(x), self.large(x)


class E2EDeepSleepNet(nn.Module):
    kind = BaselineKind.E2E_DeepSleepNet.value

    def __init__(self, seq_len=1, sample_rate=100.0, input_length=3000, hidden_size=128,
                 config=None):
        super().__init__()
        config = config or load_dsn_config()
        self.seq_len = seq_len
        self.sample_rate = sample_rate
        self.input_length = input_length
        self.cnn = _DualBranch(sample_rate, input_length, config)
        small_ch = config["small"]["convs"]["filters"]
        large_ch = config["large"]["convs"]["filters"]
        self.feature_size = small_ch * self.cnn.small_len + large_ch * self.cnn.large_len
        self.dropout = nn.Dropout(config["dropout"])
        self.head = ContextHead(HeadConfig(input_size=self.feature_size, hidden_size=hidden_size))

    def rnn_steps(self) -> int:
        return self.seq_len

    def features(self, x):
        n, L, s = x.shape
        a, b = self.cnn(x.reshape(n * L, s))
        f = torch.cat([a.flatten(1), b.flatten(1)], dim=1)
        return self.dropout(f).reshape(n, L, -1)

    def forward(self, x):
        if x.dim() == 2:
            x = x.unsqueeze(1)
        return self.head(self.features(x))

    def describe(self) -> dict:
        return {"kind": self.kind, "seq_len": self.seq_len, "sample_rate": self.sample_rate,
                "input_length": self.input_length, "hidden_size": self.head.config.hidden_size}


class E2EIntraDeepSleepNet(nn.Module):
    kind = BaselineKind.E2E_IntraDeepSleepNet.value

    def __init__(self, seq_len=1, sample_rate=100.0, input_length=3000, hidden_size=128,
                 config=None):
        super().__init__()
        config = config or load_dsn_config()
        self.seq_len = seq_len
        self.sample_rate = sample_rate
        self.input_length = input_length
        self.cnn = _DualBranch(sample_rate, input_length, config)
        half = self.cnn.channels // 2
        self.mix = nn.Sequential(
            nn.Conv1d(self.cnn.channels, half, 1, bias=False), nn.BatchNorm1d(half), nn.ReLU(inplace=True),
            nn.Conv1d(half, half, 1, bias=False), nn.BatchNorm1d(half), nn.ReLU(inplace=True),
        )
        self.dropout = nn.Dropout(config["dropout"])
        self.head = ContextHead(HeadConfig(input_size=half, hidden_size=hidden_size))

    @property
    def sub_epochs(self) -> int:
        return self.cnn.small_len

    def rnn_steps(self) -> int:
        return self.seq_len * self.sub_epochs

    def epoch_features(self, x):
        a, b = self.cnn(x)
        b = F.interpolate(b, size=a.shape[-1], mode="linear", align_corners=False)
        f = self.mix(torch.cat([a, b], dim=1))
        return self.dropout(f).transpose(1, 2)

    def features(self, x):
        n, L, s = x.shape
        f = self.epoch_features(x.reshape(n * L, s))
        return f.reshape(n, L * f.shape[1], f.shape[2])

    def forward(self, x):
        if x.dim() == 2:
            x = x.unsqueeze(1)
        return self.head(self.features(x))

    def describe(self) -> dict:
        return {"kind": self.kind, "seq_len": self.seq_len, "sample_rate": self.sample_rate,
                "input_length": self.input_length, "hidden_size": self.head.config.hidden_size}


def build_baseline(kind, L: int, sample_rate: float = 100.0, input_length: int | None = None,
                   hidden_size: int = 128):
    kind = BaselineKind(kind)
    if not 1 <= int(L) <= 10:
        raise ValueError(f"sequence length must be in [1, 10], got {L}")
    input_length = input_length or int(round(sample_rate * 30))
    cls = E2EDeepSleepNet if kind is BaselineKind.E2E_DeepSleepNet else E2EIntraDeepSleepNet
    return cls(seq_len=int(L), sample_rate=sample_rate, input_length=input_length,
               hidden_size=hidden_size)
