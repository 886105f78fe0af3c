"""Adapter startup configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional


class AdapterConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    """Which models to serve and how to bind the server.

    ``adapter_weights`` points at an optional weights file for fine-tuned
    variants; the stub models fold its content into their seed so a
    different file observably changes the outputs. ``max_batch`` caps how
    many texts reach the encoder in one call; longer requests are split
    internally and the split is invisible on the wire.
    """

    embed_model: str = "stub-16"
    generate_model: str = "stub"
    adapter_weights: Optional[str] = None
    host: str = "127.0.0.1"
    port: int = 8200
    max_batch: int = 32

    def __post_init__(self):
        if not self.embed_model:
            raise AdapterConfigError("embed_model must be non-empty")
        if not self.generate_model:
            raise AdapterConfigError("generate_model must be non-empty")
        if not (1 <= self.port <= 65535):
            raise AdapterConfigError(f"port {self.port} out of range")
        if self.max_batch < 1:
            raise AdapterConfigError("max_batch must be >= 1")
        if self.adapter_weights is not None and not os.path.isfile(self.adapter_weights):
            raise AdapterConfigError(
                f"adapter weights file not found: {self.adapter_weights}"
            )
