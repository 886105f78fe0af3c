"""Embedding and generation backends behind one wire protocol.

Two capabilities, each a tiny JSON-over-HTTP contract:

    POST /v1/embed     {"texts": ["..."]}                          -> {"dim": d, "embeddings": [[...], ...]}
    POST /v1/generate  {"prompt": "...", "max_tokens": n, "temperature": t} -> {"text": "..."}

Errors come back as {"error": {"code": ..., "message": ...}} with a 4xx/5xx
status. The HTTP clients here speak that contract; the mock classes speak it
in-process so the whole pipeline runs hermetically.
"""

from __future__ import annotations

import hashlib
import re
from typing import Mapping, Optional, Protocol, Sequence

import httpx
import numpy as np

from .errors import BackendError

DEFAULT_TIMEOUT = 30.0


class EmbedBackend(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...

    def health(self) -> bool: ...


class GenerateBackend(Protocol):
    def generate(self, prompt: str, max_tokens: int, temperature: float) -> str: ...

    def health(self) -> bool: ...


def _error_from_response(response: httpx.Response) -> BackendError:
    code = "backend_error"
    message = f"backend returned HTTP {response.status_code}"
    try:
        body = response.json()
        err = body.get("error")
        if isinstance(err, dict):
            code = str(err.get("code", code))
            message = str(err.get("message", message))
    except Exception:
        pass
    return BackendError(message, code=code)


class HttpEmbedBackend:
    """Client for a /v1/embed server."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            raise BackendError("embed called with no texts", code="backend_protocol")
        try:
            response = self._client.post(
                self.base_url + "/v1/embed", json={"texts": list(texts)}
            )
        except httpx.HTTPError as exc:
            raise BackendError(
                f"embed backend unreachable: {exc}", code="backend_unreachable"
            ) from exc
        if response.status_code >= 400:
            raise _error_from_response(response)
        try:
            body = response.json()
            dim = int(body["dim"])
            matrix = np.asarray(body["embeddings"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(
                f"malformed embed response: {exc}", code="backend_protocol"
            ) from exc
        if matrix.ndim != 2 or matrix.shape != (len(texts), dim):
            raise BackendError(
                f"embed shape mismatch: got {matrix.shape}, want ({len(texts)}, {dim})",
                code="backend_protocol",
            )
        return matrix

    def health(self) -> bool:
        try:
            response = self._client.get(self.base_url + "/v1/health")
        except httpx.HTTPError:
            return False
        # A backend without a health route still counts as reachable.
        return response.status_code < 500


class HttpGenerateBackend:
    """Client for a /v1/generate server."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def generate(self, prompt: str, max_tokens: int, temperature: float) -> str:
        payload = {
            "prompt": prompt,
            "max_tokens": int(max_tokens),
            "temperature": float(temperature),
        }
        try:
            response = self._client.post(self.base_url + "/v1/generate", json=payload)
        except httpx.HTTPError as exc:
            raise BackendError(
                f"generate backend unreachable: {exc}", code="backend_unreachable"
            ) from exc
        if response.status_code >= 400:
            raise _error_from_response(response)
        try:
            text = response.json()["text"]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(
                f"malformed generate response: {exc}", code="backend_protocol"
            ) from exc
        if not isinstance(text, str):
            raise BackendError(
                "generate response text is not a string", code="backend_protocol"
            )
        return text

    def health(self) -> bool:
        try:
            response = self._client.get(self.base_url + "/v1/health")
        except httpx.HTTPError:
            return False
        return response.status_code < 500


class MockEmbedBackend:
    """Deterministic in-process embeddings.

    Known texts can be pinned to fixed vectors via ``table``; anything else
    gets a hash-seeded draw, so the same text always maps to the same vector
    without any model on disk. Vectors are returned unnormalized on purpose,
    the pipeline owns normalization.
    """

    def __init__(self, dim: int = 16, table: Optional[Mapping[str, np.ndarray]] = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.table = {k: np.asarray(v, dtype=float) for k, v in (table or {}).items()}
        for text, vec in self.table.items():
            if vec.shape != (dim,):
                raise ValueError(f"table entry {text!r} has shape {vec.shape}, want ({dim},)")

    def _draw(self, text: str) -> np.ndarray:
        digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
        seed = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4)]
        rng = np.random.default_rng(seed)
        return rng.normal(size=self.dim)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            raise BackendError("embed called with no texts", code="backend_protocol")
        rows = [
            self.table[text] if text in self.table else self._draw(text)
            for text in texts
        ]
        return np.stack(rows)

    def health(self) -> bool:
        return True


_UTTERANCE_RE = re.compile(r"^User message:\n(.*?)\n\nCandidate intents:\n", re.S | re.M)
_CANDIDATE_RE = re.compile(r"^\s*\d+\.\s+(.+?): ", re.M)
_OOS_RE = re.compile(r"or answer (\S+) if none of them does")
_GUIDELINE_RE = re.compile(r'express the intent "(.+?)"')


class MockGenerateBackend:
    """Deterministic in-process stand-in for the generation backend.

    Tightly coupled to the shipped templates: it recovers the utterance and
    candidate names from the rendered prompt text. Given an ``oracle`` map of
    utterance -> gold label it answers the gold when offered (falling back to
    the out-of-scope token otherwise); without one it echoes the first
    candidate. Prompts it cannot parse raise, they are a bug in the caller or
    an unknown template, not something to answer blindly.
    """

    def __init__(self, oracle: Optional[Mapping[str, str]] = None):
        self.oracle = dict(oracle or {})
        self.calls = 0

    def generate(self, prompt: str, max_tokens: int, temperature: float) -> str:
        self.calls += 1
        guideline = _GUIDELINE_RE.search(prompt)
        if guideline and "Candidate intents:" not in prompt:
            return f"Messages where the user wants {guideline.group(1)}."
        utterance_m = _UTTERANCE_RE.search(prompt)
        oos_m = _OOS_RE.search(prompt)
        candidates = _CANDIDATE_RE.findall(prompt)
        if not (utterance_m and oos_m and candidates):
            raise BackendError(
                "mock generate backend cannot parse this prompt layout",
                code="backend_protocol",
            )
        utterance = utterance_m.group(1)
        oos_token = oos_m.group(1)
        if utterance in self.oracle:
            gold = self.oracle[utterance]
            return gold if gold in candidates else oos_token
        return candidates[0]

    def health(self) -> bool:
        return True
