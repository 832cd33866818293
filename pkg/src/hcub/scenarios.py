"""Canned environments used by the acceptance suite and the demos."""

from __future__ import annotations

from .tree import TreeSchema
from .simulator import EnvironmentSpec
from .uplift import EstimatorConfig
from .policy import PolicyConfig

TOUR_ROUND_COHORT = TreeSchema.of(("tour", "system"), ("round", "system"), ("cohort", "user"))

REFERENCE_HORIZON = 5000
REFERENCE_SEEDS = tuple(range(20))


def reference_spec(seed: int = 0) -> EnvironmentSpec:
    """2 tours x 3 rounds x 4 cohorts, 9 arms, shared uplift signal, Zipf-skewed traffic.

    Most of the 24 cohorts see too little traffic to reach the minimum group
    size for every arm within the reference horizon.
    """
    return EnvironmentSpec(
        schema=TOUR_ROUND_COHORT,
        vocabularies=(("T1", "T2"), ("R1", "R2", "R3"), ("C1", "C2", "C3", "C4")),
        bucket_count=2,
        base_mean=(1.0, 1.0, 1.0),
        cohort_sd=0.5,
        signal_sd=(0.5, 0.3, 0.2),
        perturbation_sd=0.05,
        noise_sd=(1.0, 1.0, 1.0),
        context_skew=1.5,
        seed=seed,
    )


def single_leaf_spec(seed: int = 0) -> EnvironmentSpec:
    """One cohort under the root: inheritance has nothing to borrow from."""
    return EnvironmentSpec(
        schema=TreeSchema.of(("cohort", "user")),
        vocabularies=(("C1",),),
        bucket_count=2,
        base_mean=(1.0, 1.0, 1.0),
        cohort_sd=0.5,
        signal_sd=0.5,
        perturbation_sd=0.05,
        noise_sd=(1.0, 1.0, 1.0),
        seed=seed,
    )


def reference_configs() -> tuple[EstimatorConfig, PolicyConfig]:
    return EstimatorConfig(), PolicyConfig(refresh_interval=50)
