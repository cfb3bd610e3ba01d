"""
Splitting the C-index into event-event and event-censored parts
================================================================

Four subjects, two events and two censored, and a predictor that gets one
event-censored pair wrong.
"""

from fractions import Fraction

import numpy as np

from survdecomp import SurvivalDataset, count_pairs_fast, decompose
from survdecomp.concordance import decompose_fractions, verify_identity

data = SurvivalDataset([1.0, 2.0, 3.0, 1.5], [True, True, False, False])
pred = np.array([1.0, 3.0, 2.0, 5.0])

counts = count_pairs_fast(data, pred)
print(counts)

# exact rationals first, floats last
for name, value in decompose_fractions(counts).items():
    print(f"{name:>16} = {str(value):>5}  ({float(value):.4f})")

d = decompose(counts)
print("harmonic identity residual:", verify_identity(d))

###############################################################################
# A predictor that is right on every event-event pair but ranks censored
# subjects poorly has alpha above alpha_star.

rng = np.random.default_rng(0)
n = 300
latent = rng.exponential(size=n)
event = rng.random(n) < 0.6
time = np.where(event, latent, rng.uniform(0, latent))
data = SurvivalDataset(time, event)

skewed = np.where(event, latent, rng.exponential(size=n))
for label, p in [("oracle", latent), ("skewed", skewed), ("noise", rng.normal(size=n))]:
    d = decompose(count_pairs_fast(data, p))
    print(f"{label:>7}: CI={d.ci:.3f} CI_ee={d.ci_ee:.3f} CI_ec={d.ci_ec:.3f} "
          f"alpha-deviation={d.alpha_deviation:+.3f}")

print("alpha_star is", Fraction(decompose(count_pairs_fast(data, latent)).alpha_star).limit_denominator(10**6))
