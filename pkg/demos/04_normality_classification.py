#!/usr/bin/env python3
"""When do frequency constraints break the usual normality of LQ transfers?

For the fixed-endpoint LQ transfer, an abnormal lift (cost multiplier zero)
exists exactly when the stacked matrix [R_stack | -G] has a nontrivial null
space, where R_stack stacks B'(A')^k and G stacks the transposed frequency
blocks.  Counting rows already settles one direction: with q + n > m*N every
feasible trajectory is abnormal.
"""

import numpy as np

from bandctrl import (
    SupportSpec,
    build_frequency_constraint,
    classify_normality_classic,
    classify_normality_freq,
)

print("Classic transfers (no frequency constraints):")
cases = [
    ("double integrator, N = 6", [[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]], 6),
    ("uncontrollable pair, N = 5", np.eye(2), [[1.0], [0.0]], 5),
    ("horizon shorter than n", np.eye(3), np.eye(3), 2),
]
for name, A, B, N in cases:
    verdict = classify_normality_classic(A, B, N)
    print(f"  {name:30s} -> {verdict.classification.value} "
          f"(reachability rank {verdict.rank_reachability})")

print("\nScalar integrator with growing banned sets, N = 4 (m*N = 4):")
for banned in ([], [2], [1], [1, 2], [0, 1, 2]):
    fc = build_frequency_constraint(SupportSpec.from_banned([banned], 4), 4, 1)
    verdict = classify_normality_freq([[1.0]], [[1.0]], 4, fc)
    n, _, _, q = verdict.dims
    print(f"  ban {str(banned):12s} -> q = {q}, q + n = {q + n} vs m*N = 4: "
          f"{verdict.classification.value} (augmented rank {verdict.rank_augmented})")

print("\nBanning everything leaves only u = 0; with q + n > m*N the classifier")
print("reports ALL_ABNORMAL and the frequency-constrained solver refuses to run.")
