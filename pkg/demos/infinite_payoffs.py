"""
When waiting pays without bound
===============================

Each player uses ``tau_a``: wait until the path reaches 0, then stop on the
square-root boundary ``a sqrt(s + 1)``. For large ``a`` the boundary is
rarely met, the opponent's survival decays slowly, and truncated payoffs
keep growing with the horizon.
"""
import numpy as np

from dynkinlab import RewardSpec, StoppingRule, breiman_exponent
from dynkinlab.montecarlo import truncated_payoff_trace

#%%
# Tail exponents of the boundary hitting time from the origin. Larger ``a``
# means a thinner tail exponent.
grid = np.geomspace(1.0, 1000.0, 30)
for a in (1.0, 2.0, 4.0):
    te = breiman_exponent(a, 50_000, grid, dt=0.5)
    print(f"a={a:g}: beta_hat={te.exponent:.4f}, survivors={te.survivors}")

#%%
# Truncated payoffs for the symmetric pair across doubling horizons.
rule = StoppingRule.composite(4.0)
trace = truncated_payoff_trace(rule, 0.0, rule, 0.0, RewardSpec.affine(),
                               [2.0**k for k in range(6, 11)], 50_000, dt=0.5)
for h, mean, se, ratio in trace.to_rows():
    print(f"H={h:6.0f}  J={mean:.5f} +- {se:.5f}  ratio {ratio:.3f}")
