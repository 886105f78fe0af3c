"""Stub embedding and generation models.

Both are fully deterministic stand-ins for real checkpoints: outputs are
seeded from a SHA-256 of the input (plus the adapter-weights bytes when a
weights file is loaded, so a "fine-tuned" variant behaves like a different
model). Real backends would slot in behind the same two-method surface.
"""

from __future__ import annotations

import hashlib
import re
import struct
from typing import Optional

import numpy as np

from .config import AdapterConfig, AdapterConfigError

_STUB_EMBED = re.compile(r"^stub-(\d+)$")

_WORDS = (
    "order", "billing", "refund", "account", "delivery", "status",
    "support", "update", "cancel", "schedule", "invoice", "help",
)


class ModelFailure(RuntimeError):
    """The underlying model could not produce an output."""


def _seed(salt: bytes, *parts: str) -> list[int]:
    h = hashlib.sha256(salt)
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return list(struct.unpack(">8I", h.digest()))


def _weights_salt(path: Optional[str]) -> bytes:
    if path is None:
        return b"base"
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).digest()


class StubEncoder:
    """Hash-seeded sentence embeddings with a fixed advertised dim."""

    def __init__(self, dim: int, salt: bytes):
        if dim < 1:
            raise AdapterConfigError("embedding dim must be >= 1")
        self.dim = dim
        self._salt = salt

    def encode(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            rng = np.random.default_rng(_seed(self._salt, "embed", text))
            rows.append(rng.standard_normal(self.dim))
        out = np.stack(rows)
        if not np.all(np.isfinite(out)):
            raise ModelFailure("encoder produced non-finite values")
        return out


class StubGenerator:
    """Deterministic word-salad completions.

    Temperature folds into the seed, so any fixed (prompt, temperature)
    pair reproduces exactly; temperature 0 in particular is the pinned
    deterministic mode the protocol promises.
    """

    def __init__(self, salt: bytes):
        self._salt = salt

    def generate(self, prompt: str, max_tokens: int, temperature: float) -> str:
        rng = np.random.default_rng(
            _seed(self._salt, "generate", prompt, f"{temperature:.6f}")
        )
        n = min(max_tokens, 8)
        picks = rng.integers(0, len(_WORDS), size=n)
        return " ".join(_WORDS[i] for i in picks)


def build_encoder(config: AdapterConfig) -> StubEncoder:
    match = _STUB_EMBED.match(config.embed_model)
    if match is None:
        raise AdapterConfigError(
            f"unknown embedding model {config.embed_model!r}; expected stub-<dim>"
        )
    return StubEncoder(int(match.group(1)), _weights_salt(config.adapter_weights))


def build_generator(config: AdapterConfig) -> StubGenerator:
    if config.generate_model != "stub":
        raise AdapterConfigError(
            f"unknown generation model {config.generate_model!r}; expected 'stub'"
        )
    return StubGenerator(_weights_salt(config.adapter_weights))
