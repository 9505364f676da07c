"""
Stopping at once
================

Both players stop at time zero. With the affine reward they split the pot,
``x1/2`` and ``x2/2``. When a player starts below zero the split is a loss,
and waiting forever is strictly better.
"""

#%%
# The race between two immediate rules is deterministic, so the Monte Carlo
# estimates carry zero standard error.
from dynkinlab import GameConfig, StoppingRule, verify_equilibrium

now = StoppingRule.immediate()
for x1, x2 in [(1.0, 2.0), (-1.0, 2.0)]:
    cfg = GameConfig(x1, x2, t_max=4.0, dt=1e-3, n_paths=20_000)
    rep = verify_equilibrium(now, now, cfg)
    print(f"start ({x1:+.0f}, {x2:+.0f})  payoffs {rep.payoffs}  -> {rep.verdict}")

#%%
# The report names the best candidate deviation and prices it against the
# opponent's survival curve.
p1 = rep.players[0]
print(p1.best_deviation.rule.describe(), p1.best_deviation.estimate.mean)
print("lattice best response for player 1:", p1.V.mean)
