from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SidecarConfig:
    model: str  # HF model id or local checkpoint directory (masked LM)
    embed_model: str | None = None  # defaults to the MLM's own encoder
    host: str = "127.0.0.1"
    port: int = 8801
    default_top_k: int = 64
    max_sequence_length: int = 128

    def __post_init__(self):
        if self.default_top_k < 1:
            raise ValueError("default_top_k must be positive")
        if self.max_sequence_length < 1:
            raise ValueError("max_sequence_length must be positive")
