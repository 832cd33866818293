"""
Inheritance on versus off
=========================

Same environment, contexts and noise on both sides; only the inheritance
switch differs. The full gate uses 20 seeds at 5000 rounds; this sketch
runs fewer so it finishes quickly.
"""

from hcub import RewardWeights, ablation_compare
from hcub.scenarios import reference_configs, reference_spec, single_leaf_spec

est, pol = reference_configs()
report = ablation_compare(reference_spec(), est, pol, RewardWeights(), horizon=3000, seeds=range(6))
for s, on, off, rel in zip(report.seeds, report.regret_on, report.regret_off, report.relative_improvement):
    print(f"seed {s}: regret with {on:7.1f}, without {off:7.1f}, improvement {rel:+.1%}")
print(f"mean improvement {report.mean_relative_improvement:+.1%}, sign test p={report.sign_test_pvalue:.3f}")

# With a single cohort there is nothing to inherit from.
control = ablation_compare(single_leaf_spec(), est, pol, RewardWeights(), horizon=1000, seeds=range(3))
print("single-cohort control:", control.relative_improvement)
