"""Threshold gate between the classifier path and the LLM path.

A score strictly above the threshold escalates; equality keeps the
classifier. The named strategies bind the standard thresholds, and two
sentinels cover the extremes: route everything, or never route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from .errors import ConfigError, DataError

NAMED_THRESHOLDS = {"low": 0.15, "moderate": 0.10, "high": 0.05}

FULL = "full"
CLASSIFIER_ONLY = "classifier_only"
STRATEGY_NAMES = tuple(NAMED_THRESHOLDS) + (FULL, CLASSIFIER_ONLY)


@dataclass(frozen=True)
class RoutingStrategy:
    """A named routing policy; ``tau`` is None for the two sentinels."""

    name: str
    tau: Optional[float]


def resolve_strategy(spec: Union[str, float, RoutingStrategy]) -> RoutingStrategy:
    """Bind a strategy from a name, a ``tau=<f>`` string, or a bare threshold."""
    if isinstance(spec, RoutingStrategy):
        return spec
    if isinstance(spec, (int, float)):
        tau = float(spec)
        if not math.isfinite(tau):
            raise ConfigError("custom threshold must be finite")
        return RoutingStrategy("custom", tau)
    name = spec.strip().lower().replace("-", "_")
    if name in NAMED_THRESHOLDS:
        return RoutingStrategy(name, NAMED_THRESHOLDS[name])
    if name in (FULL, CLASSIFIER_ONLY):
        return RoutingStrategy(name, None)
    if name.startswith("tau="):
        try:
            tau = float(name[len("tau="):])
        except ValueError as exc:
            raise ConfigError(f"bad custom threshold in {spec!r}") from exc
        if not math.isfinite(tau):
            raise ConfigError("custom threshold must be finite")
        return RoutingStrategy("custom", tau)
    raise ConfigError(f"unknown routing strategy: {spec!r}")


def route(score: float, strategy: RoutingStrategy) -> bool:
    """True when the utterance should escalate to the LLM."""
    if math.isnan(score):
        raise DataError("routing score is NaN")
    if strategy.name == FULL:
        return True
    if strategy.name == CLASSIFIER_ONLY:
        return False
    if strategy.tau is None:
        raise ConfigError(f"strategy {strategy.name!r} has no threshold")
    return score > strategy.tau
