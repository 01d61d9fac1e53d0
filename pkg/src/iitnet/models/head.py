"""Stacked BiLSTM over sub-epoch features followed by a single linear classifier."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from ..stages import N_CLASSES, StageLabel


@dataclass
class HeadConfig:
    input_size: int = 128
    hidden_size: int = 128
    num_layers: int = 2
    num_classes: int = N_CLASSES

    @property
    def context_size(self) -> int:
        return 2 * self.hidden_size

    def to_dict(self) -> dict:
        return asdict(self)


class ContextHead(nn.Module):
    """Scores the target epoch from a (N, T, u) series of feature sequences.

    The bidirectional context is the last-layer forward state after step T
    concatenated with the last-layer backward state after step 1. Initial
    hidden and cell states are zero and there is no inter-layer dropout.
    """

    def __init__(self, config: HeadConfig | None = None):
        super().__init__()
        self.config = config = config or HeadConfig()
        self.lstm = nn.LSTM(
            input_size=config.input_size,
            hidden_size=config.hidden_size,
            num_layers=config.num_layers,
            batch_first=True,
            bidirectional=True,
        )
        self.fc = nn.Linear(config.context_size, config.num_classes)

    def context(self, features: torch.Tensor) -> torch.Tensor:
        if features.dim() != 3 or features.shape[1] == 0:
            raise ValueError(f"expected (N, T>=1, u) features, got {tuple(features.shape)}")
        if not torch.isfinite(features).all():
            raise ValueError("non-finite values in feature sequence")
        out, _ = self.lstm(features)
        u = self.config.hidden_size
        return torch.cat([out[:, -1, :u], out[:, 0, u:]], dim=1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """Return unnormalized logits of shape (N, num_classes)."""
        return self.fc(self.context(features))


def classify(head: ContextHead, features) -> np.ndarray:
    """Stage probabilities for a single (T, u) series of feature sequences."""
    x = torch.as_tensor(features, dtype=head.fc.weight.dtype)
    if x.dim() == 2:
        x = x.unsqueeze(0)
    with torch.no_grad():
        prob = torch.softmax(head(x).double(), dim=1)
    return prob[0].numpy()


def predict_stage(prob) -> StageLabel:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return StageLabel(int(np.argmax(np.asarray(prob))))
