"""Wire-protocol backend: sentence embeddings and text generation over HTTP."""

from .app import create_app
from .config import AdapterConfig, AdapterConfigError
from .models import ModelFailure, StubEncoder, StubGenerator, build_encoder, build_generator

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterConfigError",
    "ModelFailure",
    "StubEncoder",
    "StubGenerator",
    "build_encoder",
    "build_generator",
    "create_app",
    "__version__",
]
