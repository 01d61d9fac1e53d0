"""Model zoo: IITNet and the two end-to-end DeepSleepNet baselines."""

from __future__ import annotations

import json
from importlib import resources

from .baselines import BaselineKind, E2EDeepSleepNet, E2EIntraDeepSleepNet, build_baseline
from .encoder import EncoderConfig, ResNetEncoder, encode_epoch, encode_sequence, feature_length
from .head import ContextHead, HeadConfig, classify, predict_stage
from .iitnet import IITNet

MODEL_KINDS = ("iitnet", BaselineKind.E2E_DeepSleepNet.value, BaselineKind.E2E_IntraDeepSleepNet.value)


def default_iitnet_config() -> dict:
    return json.loads(resources.files("iitnet.configs").joinpath("iitnet.json").read_text())


def build_model(kind: str, L: int, sample_rate: float = 100.0, encoder: dict | None = None,
                head: dict | None = None):
    """Construct any of the three compared architectures for a given sequence length."""
    if not 1 <= int(L) <= 10:
        raise ValueError(f"sequence length must be in [1, 10], got {L}")
    input_length = int(round(sample_rate * 30))
    if kind == "iitnet":
        cfg = default_iitnet_config()
        enc = {**cfg["encoder"], "input_length": input_length, **(encoder or {})}
        hd = dict(cfg["head"], **(head or {}))
        enc_cfg = EncoderConfig(**enc)
        head_cfg = HeadConfig(input_size=enc_cfg.out_channels, **hd)
        return IITNet(enc_cfg, head_cfg, seq_len=int(L))
    hidden = (head or {}).get("hidden_size", 128)
    return build_baseline(kind, L, sample_rate, input_length, hidden)


def model_from_spec(spec: dict):
    kind = spec["kind"]
    if kind == "iitnet":
        enc = EncoderConfig(**spec["encoder"])
        head = HeadConfig(**spec["head"])
        return IITNet(enc, head, seq_len=spec["seq_len"])
    return build_baseline(kind, spec["seq_len"], spec["sample_rate"], spec["input_length"],
                          spec["hidden_size"])


__all__ = [
    "BaselineKind", "ContextHead", "E2EDeepSleepNet", "E2EIntraDeepSleepNet", "EncoderConfig",
    "HeadConfig", "IITNet", "MODEL_KINDS", "ResNetEncoder", "build_baseline", "build_model",
    "classify", "encode_epoch", "encode_sequence", "feature_length", "model_from_spec",
    "predict_stage",
]
