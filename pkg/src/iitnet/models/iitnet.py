from __future__ import annotations

import torch
from torch import nn

from .encoder import EncoderConfig, ResNetEncoder
from .head import ContextHead, HeadConfig


class IITNet(nn.Module):
    """ResNet sub-epoch encoder + BiLSTM head, scoring the last of L input epochs.

    Input is (N, L, samples); output is (N, 5) logits.
    """

    kind = "iitnet"

    def __init__(self, encoder_config: EncoderConfig | None = None,
                 head_config: HeadConfig | None = None, seq_len: int = 1):
        super().__init__()
        encoder_config = encoder_config or EncoderConfig()
        head_config = head_config or HeadConfig(input_size=encoder_config.out_channels)
        if head_config.input_size != encoder_config.out_channels:
            raise ValueError("head input size must equal the encoder's final filter count")
        if seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        self.seq_len = seq_len
        self.encoder = ResNetEncoder(encoder_config)
        self.head = ContextHead(head_config)

    @property
    def input_length(self) -> int:
        return self.encoder.config.input_length

    def rnn_steps(self) -> int:
        return self.seq_len * self.encoder.output_length()

    def features(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 2:
            x = x.unsqueeze(1)
        return self.encoder.encode_sequence(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "seq_len": self.seq_len,
            "encoder": self.encoder.config.to_dict(),
            "head": self.head.config.to_dict(),
        }
