"""Actions, metrics, reward weights, contexts and reward arithmetic.

An arm is a vector of size variants, one per contest bucket. Arms are
identified by their base-3 index (Low=0, Medium=1, High=2, leftmost bucket
most significant), so ``enumerate_actions(B)[i].index == i``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_BUCKET_COUNT = 4
MAX_BUCKET_COUNT = 39  # 3**39 < 2**63


class BucketLevel(enum.IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def symbol(self) -> str:
        return "LMH"[self.value]

    @classmethod
    def from_symbol(cls, symbol: str) -> "BucketLevel":
        try:
            return cls("LMH".index(symbol.strip().upper()))
        except ValueError:
            raise InvalidArgumentError(f"unknown bucket level {symbol!r}") from None


def _check_bucket_count(bucket_count: int) -> int:
    if isinstance(bucket_count, bool) or not isinstance(bucket_count, (int, np.integer)):
        raise InvalidArgumentError(f"bucket_count must be an integer, got {bucket_count!r}")
    if not 1 <= bucket_count <= MAX_BUCKET_COUNT:
        raise InvalidArgumentError(
            f"bucket_count must be in 1..{MAX_BUCKET_COUNT}, got {bucket_count}"
        )
    return int(bucket_count)


def action_count(bucket_count: int) -> int:
    return 3 ** _check_bucket_count(bucket_count)


@dataclass(frozen=True)
class ActionVector:
    """One arm: a size variant per bucket."""

    levels: tuple[BucketLevel, ...]

    def __post_init__(self) -> None:
        levels = tuple(BucketLevel(lv) for lv in self.levels)
        _check_bucket_count(len(levels))
        object.__setattr__(self, "levels", levels)

    @property
    def bucket_count(self) -> int:
        return len(self.levels)

    @property
    def index(self) -> int:
        return action_index(self)

    @classmethod
    def from_index(cls, index: int, bucket_count: int) -> "ActionVector":
        n = action_count(bucket_count)
        if not 0 <= index < n:
            raise InvalidArgumentError(
                f"action index {index} out of range 0..{n - 1} for {bucket_count} buckets"
            )
        digits = []
        for _ in range(bucket_count):
            index, d = divmod(index, 3)
            digits.append(BucketLevel(d))
        return cls(tuple(reversed(digits)))

    @classmethod
    def parse(cls, text: str) -> "ActionVector":
        """Parse ``"[H, M, M, L]"`` or ``"HMML"``."""
        symbols = [s for s in text.strip().strip("[]").replace(",", " ").split()]
        if len(symbols) == 1 and len(symbols[0]) > 1:
            symbols = list(symbols[0])
        return cls(tuple(BucketLevel.from_symbol(s) for s in symbols))

    def __str__(self) -> str:
        return "[" + ", ".join(lv.symbol for lv in self.levels) + "]"


def enumerate_actions(bucket_count: int) -> list[ActionVector]:
    """All ``3**bucket_count`` arms in ascending index order."""
    bucket_count = _check_bucket_count(bucket_count)
    return [ActionVector(levels) for levels in itertools.product(BucketLevel, repeat=bucket_count)]


def baseline_action(bucket_count: int) -> ActionVector:
    """The all-Medium arm, i.e. the unmodified catalog."""
    bucket_count = _check_bucket_count(bucket_count)
    return ActionVector((BucketLevel.MEDIUM,) * bucket_count)


def baseline_index(bucket_count: int) -> int:
    return (action_count(bucket_count) - 1) // 2


def action_index(action: ActionVector) -> int:
    index = 0
    for level in action.levels:
        index = index * 3 + int(level)
    return index


@dataclass(frozen=True)
class MetricVector:
    """Per-user outcome: engagement, retention proxy, revenue. Signed."""

    engagement: float
    retention_proxy: float
    revenue: float

    def __post_init__(self) -> None:
        for name in ("engagement", "retention_proxy", "revenue"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidArgumentError(f"metric {name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.engagement, self.retention_proxy, self.revenue)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "MetricVector":
        if len(values) != 3:
            raise InvalidArgumentError(f"expected 3 metric values, got {len(values)}")
        return cls(*values)


@dataclass(frozen=True)
class RewardWeights:
    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda3: float = 1.0

    def __post_init__(self) -> None:
        values = []
        for name in ("lambda1", "lambda2", "lambda3"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)
            values.append(value)
        if not any(v > 0 for v in values):
            raise InvalidArgumentError("at least one reward weight must be positive")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)


def weighted_combine(values: Iterable[float] | MetricVector, weights: RewardWeights) -> float:
    """Return ``lambda1*v1 + lambda2*v2 + lambda3*v3``.

    Used to scalarize a single observation's metrics and equally to combine
    per-metric uplifts; the operation is linear so both readings agree.
    """
    if isinstance(values, MetricVector):
        values = values.as_tuple()
    v = tuple(float(x) for x in values)
    if len(v) != 3:
        raise InvalidArgumentError(f"expected 3 values, got {len(v)}")
    if not all(math.isfinite(x) for x in v):
        raise InvalidArgumentError(f"non-finite value in {v}")
    w1, w2, w3 = weights.as_tuple()
    return w1 * v[0] + w2 * v[1] + w3 * v[2]


@dataclass(frozen=True)
class Context:
    """Feature values ordered from the system level down to the user cohort."""

    feature_values: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        items = tuple((str(k), str(v)) for k, v in self.feature_values)
        if not items:
            raise InvalidArgumentError("context must have at least one feature value")
        object.__setattr__(self, "feature_values", items)

    @classmethod
    def from_pairs(cls, *pairs: tuple[str, str]) -> "Context":
        return cls(tuple(pairs))

    @property
    def level_names(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.feature_values)

    @property
    def values(self) -> tuple[str, ...]:
        return tuple(v for _, v in self.feature_values)

    def as_dict(self) -> dict[str, str]:
        return dict(self.feature_values)

    def __str__(self) -> str:
        return "/".join(self.values)
