"""TOML run configuration with strict validation.

Layout::

    [schema]       bucket_count, levels = [{name, role, values}, ...]
    [weights]      lambda1, lambda2, lambda3
    [estimator]    resample_count, min_samples_per_group, percentile_low,
                   percentile_high, rng_seed
    [policy]       exploration_coefficient, optimistic_init, refresh_interval,
                   inheritance_enabled
    [environment]  synthetic environment (omit when replaying a log)
    [run]          horizon, seeds, output_dir, replay_log, strict_log

Unknown keys are errors: a typo must not silently fall back to a default
that changes the arm count or the reward weights.
"""

from __future__ import annotations

import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import DEFAULT_BUCKET_COUNT, RewardWeights, action_count
from .errors import ConfigError, HCUBError
from .policy import PolicyConfig
from .simulator import EnvironmentSpec
from .tree import TreeSchema
from .uplift import EstimatorConfig

OUTPUT_DIR_ENV = "HCUB_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "hcub-out"


@dataclass(frozen=True)
class RunConfig:
    schema: TreeSchema
    bucket_count: int
    weights: RewardWeights
    estimator: EstimatorConfig
    policy: PolicyConfig
    environment: EnvironmentSpec | None
    replay_log: Path | None
    vocabularies: tuple[tuple[str, ...], ...] | None = None
    horizon: int = 1000
    seeds: tuple[int, ...] = (0,)
    output_dir: str = DEFAULT_OUTPUT_DIR
    strict_log: bool = True
    source: Path | None = field(default=None, compare=False)

    @property
    def n_actions(self) -> int:
        return action_count(self.bucket_count)

    def resolve_output_dir(self, override: str | os.PathLike | None = None) -> Path:
        """``override`` (CLI) beats the environment variable, which beats the file."""
        return Path(override or os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)

    def effective(self) -> dict:
        """The fully expanded config, defaults included, for report provenance."""
        env = None
        if self.environment is not None:
            e = self.environment
            env = {
                "base_mean": list(e.base_mean),
                "cohort_sd": e.cohort_sd,
                "signal_sd": list(e._level_signal_sd()),
                "perturbation_sd": e.perturbation_sd,
                "noise_sd": list(e.noise_sd),
                "context_weights": None if e.context_weights is None else list(e.context_weights),
                "context_skew": e.context_skew,
                "shift_round": e.shift_round,
                "seed": e.seed,
            }
        levels = []
        for i, (name, role) in enumerate(self.schema.levels):
            level = {"name": name, "role": role.value}
            if self.vocabularies is not None:
                level["values"] = list(self.vocabularies[i])
            levels.append(level)
        return {
            "schema": {"bucket_count": self.bucket_count, "n_actions": self.n_actions, "levels": levels},
            "weights": asdict(self.weights),
            "estimator": asdict(self.estimator),
            "policy": asdict(self.policy),
            "environment": env,
            "run": {
                "horizon": self.horizon,
                "seeds": list(self.seeds),
                "output_dir": self.output_dir,
                "replay_log": None if self.replay_log is None else str(self.replay_log),
                "strict_log": self.strict_log,
            },
        }


def _line_of(text: str, section: str, key: str | None) -> int | None:
    """Best-effort line number of ``key`` inside ``[section]``."""
    in_section = False
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("["):
            in_section = line.strip("[]").strip() == section
            if in_section and key is None:
                return no
            continue
        if in_section and key is not None and re.match(rf"{re.escape(key)}\s*=", line):
            return no
    return None


def _real(x: Any) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(f"expected a number, got {x!r}")
    if not math.isfinite(x):
        raise TypeError(f"expected a finite number, got {x!r}")
    return float(x)


def _int(x: Any) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise TypeError(f"expected an integer, got {x!r}")
    return x


def _bool(x: Any) -> bool:
    if not isinstance(x, bool):
        raise TypeError(f"expected true/false, got {x!r}")
    return x


def _str(x: Any) -> str:
    if not isinstance(x, str):
        raise TypeError(f"expected a string, got {x!r}")
    return x


def _reals(n: int | None = None) -> Callable[[Any], tuple[float, ...]]:
    def conv(x: Any) -> tuple[float, ...]:
        if not isinstance(x, list):
            raise TypeError(f"expected a list of numbers, got {x!r}")
        if n is not None and len(x) != n:
            raise TypeError(f"expected {n} numbers, got {len(x)}")
        return tuple(_real(v) for v in x)

    return conv


def _real_or_reals(x: Any) -> float | tuple[float, ...]:
    return _reals()(x) if isinstance(x, list) else _real(x)


def _ints(x: Any) -> tuple[int, ...]:
    if not isinstance(x, list) or not x:
        raise TypeError(f"expected a non-empty list of integers, got {x!r}")
    return tuple(_int(v) for v in x)


_SECTIONS: dict[str, dict[str, Callable[[Any], Any]]] = {
    "schema": {"bucket_count": _int, "levels": lambda x: x},
    "weights": {"lambda1": _real, "lambda2": _real, "lambda3": _real},
    "estimator": {
        "resample_count": _int,
        "min_samples_per_group": _int,
        "percentile_low": _real,
        "percentile_high": _real,
        "rng_seed": _int,
    },
    "policy": {
        "exploration_coefficient": _real,
        "optimistic_init": _real,
        "refresh_interval": _int,
        "inheritance_enabled": _bool,
    },
    "environment": {
        "base_mean": _reals(3),
        "cohort_sd": _real,
        "signal_sd": _real_or_reals,
        "perturbation_sd": _real,
        "noise_sd": _reals(3),
        "context_weights": _reals(),
        "context_skew": _real,
        "shift_round": _int,
        "seed": _int,
    },
    "run": {
        "horizon": _int,
        "seeds": _ints,
        "output_dir": _str,
        "replay_log": _str,
        "strict_log": _bool,
    },
}


class _Validator:
    def __init__(self, text: str):
        self.text = text

    def fail(self, message: str, section: str, key: str | None = None) -> ConfigError:
        path = section if key is None else f"{section}.{key}"
        return ConfigError(message, field=path, line=_line_of(self.text, section, key))

    def section(self, doc: dict, name: str) -> dict[str, Any]:
        raw = doc.get(name, {})
        if not isinstance(raw, dict):
            raise self.fail("expected a table", name)
        allowed = _SECTIONS[name]
        out = {}
        for key, value in raw.items():
            if key not in allowed:
                raise self.fail(f"unknown key (allowed: {', '.join(allowed)})", name, key)
            try:
                out[key] = allowed[key](value)
            except TypeError as exc:
                raise self.fail(str(exc), name, key) from None
        return out

    def build(self, section: str, factory: Callable[..., Any], kwargs: dict) -> Any:
        try:
            return factory(**kwargs)
        except HCUBError as exc:
            key = next((k for k in kwargs if k in str(exc)), None)
            raise self.fail(str(exc), section, key) from None


def _parse_levels(v: _Validator, raw: Any) -> tuple[TreeSchema, tuple[tuple[str, ...], ...] | None]:
    if not isinstance(raw, list) or not raw:
        raise v.fail("expected a non-empty array of level tables", "schema", "levels")
    levels, vocab = [], []
    for i, level in enumerate(raw):
        where = f"levels[{i}]"
        if not isinstance(level, dict):
            raise v.fail("expected a table {name, role, values}", "schema", where)
        unknown = set(level) - {"name", "role", "values"}
        if unknown:
            raise v.fail(f"unknown key(s) {sorted(unknown)}", "schema", where)
        if not isinstance(level.get("name"), str):
            raise v.fail("level needs a string 'name'", "schema", where)
        if level.get("role", "user") not in ("system", "user"):
            raise v.fail("role must be 'system' or 'user'", "schema", where)
        levels.append((level["name"], level.get("role", "user")))
        values = level.get("values")
        if values is not None and (
            not isinstance(values, list) or not values or not all(isinstance(x, str) for x in values)
        ):
            raise v.fail("values must be a non-empty list of strings", "schema", where)
        vocab.append(None if values is None else tuple(values))
    schema = v.build("schema", TreeSchema, {"levels": tuple(levels)})
    if all(x is None for x in vocab):
        return schema, None
    if any(x is None for x in vocab):
        raise v.fail("either every level lists its values or none does", "schema", "levels")
    return schema, tuple(vocab)


def parse_config_text(text: str, base_dir: Path | None = None, source: Path | None = None) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML parse error: {exc}", line=int(m.group(1)) if m else None) from None
    v = _Validator(text)
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(
            f"unknown section (allowed: {', '.join(_SECTIONS)})", field=name, line=_line_of(text, name, None)
        )
    schema_raw = v.section(doc, "schema")
    if "levels" not in schema_raw:
        raise v.fail("missing required key", "schema", "levels")
    bucket_count = schema_raw.get("bucket_count", DEFAULT_BUCKET_COUNT)
    try:
        action_count(bucket_count)
    except HCUBError as exc:
        raise v.fail(str(exc), "schema", "bucket_count") from None
    schema, vocab = _parse_levels(v, schema_raw["levels"])

    weights = v.build("weights", RewardWeights, v.section(doc, "weights"))
    estimator = v.build("estimator", EstimatorConfig, v.section(doc, "estimator"))
    policy = v.build("policy", PolicyConfig, v.section(doc, "policy"))
    run = v.section(doc, "run")

    replay_log = run.get("replay_log")
    has_env = "environment" in doc
    if has_env and replay_log is not None:
        raise v.fail("give either [environment] or run.replay_log, not both", "run", "replay_log")
    if not has_env and replay_log is None:
        raise v.fail("one of [environment] or run.replay_log is required", "run")
    environment = None
    if has_env:
        if vocab is None:
            raise v.fail("a synthetic environment needs 'values' on every level", "schema", "levels")
        env_kw = v.section(doc, "environment")
        environment = v.build(
            "environment",
            EnvironmentSpec,
            {"schema": schema, "vocabularies": vocab, "bucket_count": bucket_count, **env_kw},
        )
    log_path = None
    if replay_log is not None:
        log_path = Path(replay_log)
        if not log_path.is_absolute() and base_dir is not None:
            log_path = base_dir / log_path

    horizon = run.get("horizon", 1000)
    if horizon < 1:
        raise v.fail("must be >= 1", "run", "horizon")
    return RunConfig(
        schema=schema,
        bucket_count=bucket_count,
        weights=weights,
        estimator=estimator,
        policy=policy,
        environment=environment,
        replay_log=log_path,
        vocabularies=vocab,
        horizon=horizon,
        seeds=run.get("seeds", (0,)),
        output_dir=run.get("output_dir", DEFAULT_OUTPUT_DIR),
        strict_log=run.get("strict_log", True),
        source=source,
    )


def parse_config(path: str | os.PathLike) -> RunConfig:
    """Read and validate a TOML run config."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config_text(text, base_dir=path.parent, source=path)
