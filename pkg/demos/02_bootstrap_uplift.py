"""
Bootstrap uplift against the baseline
=====================================

The uplift of an arm is mean(treated) - mean(baseline). Resampling both
groups gives a median and a 5th-95th percentile interval.
"""

import itertools

import numpy as np

from hcub import EstimatorConfig, bootstrap_uplift, is_significant

rng = np.random.default_rng(0)
baseline = rng.normal(1.0, 1.0, 120)
treated = rng.normal(1.4, 1.0, 80)

e = bootstrap_uplift(treated, baseline, EstimatorConfig())
print(f"median {e.median:+.3f}, interval [{e.ci_lower:+.3f}, {e.ci_upper:+.3f}], significant: {is_significant(e)}")

# Fewer than min_samples_per_group observations: no estimate at all.
print(bootstrap_uplift(treated[:10], baseline, EstimatorConfig()).source)

# Tiny groups can be enumerated exactly. With treated [1, 2, 3] and a single
# baseline value 0 there are 27 equally likely resamples.
diffs = sorted(sum(s) / 3 for s in itertools.product([1, 2, 3], repeat=3))
print("exact median", np.median(diffs))
mc = bootstrap_uplift([1, 2, 3], [0], EstimatorConfig(resample_count=100_000, min_samples_per_group=1))
print("bootstrap median", mc.median, "interval", (round(mc.ci_lower, 4), round(mc.ci_upper, 4)))
