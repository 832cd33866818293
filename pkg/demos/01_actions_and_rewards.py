"""
Arms, the baseline and scalar rewards
=====================================

Each arm sets every catalog bucket to Low, Medium or High. With four
buckets that gives 3**4 = 81 arms, indexed in base 3.
"""

from hcub import ActionVector, MetricVector, RewardWeights, baseline_action, enumerate_actions, weighted_combine

arms = enumerate_actions(4)
print(len(arms), "arms; first", arms[0], "last", arms[-1])

# The all-Medium arm is the reference every uplift is measured against.
base = baseline_action(4)
print("baseline", base, "has index", base.index)

# Indices and vectors convert both ways.
print(ActionVector.parse("[H, M, M, L]").index, ActionVector.from_index(67, 4))

# One observation carries three metrics, which become one scalar reward.
weights = RewardWeights()  # revenue weighted highest
m = MetricVector(engagement=2.0, retention_proxy=4.0, revenue=6.0)
print("weights", weights.as_tuple(), "-> reward", weighted_combine(m, weights))
