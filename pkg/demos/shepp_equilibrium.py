"""
A hazard opponent and Shepp's root
==================================

Player 2 stops at a random time with survival ``b/(b+t)``. Against that
discount, player 1's best response is the square-root stopping problem,
whose free boundary starts at ``alpha * sqrt(b)``.
"""
import math

import numpy as np

from dynkinlab import LatticeParams, RewardSpec, SurvivalCurve, best_response, shepp_alpha

#%%
# The root, from adaptive quadrature plus a bracketing solver.
alpha = shepp_alpha(1e-12)
print(f"alpha = {alpha:.12f}")

#%%
# The lattice best response. Truncating the horizon can only lower the
# boundary, so a finite lattice stops at least wherever the infinite problem does.
b = 1.0
T, dt = 10.0, 0.01
c = SurvivalCurve.from_function(lambda t: b / (b + t), dt * np.arange(int(T / dt) + 1))
lat = best_response(c, RewardSpec.affine(), LatticeParams(t_max=T, dt=dt, dx=0.01, x_center=1.0))
print(f"boundary at t=0: {lat.boundary[0]:.3f}  (alpha sqrt(b) = {alpha * math.sqrt(b):.3f})")
for t in (0.0, 2.0, 5.0, 9.0):
    k = int(round(t / dt))
    print(f"  b({t:4.1f}) = {lat.boundary[k]:.3f}")

#%%
# Starting at ``x1 = 1 >= alpha sqrt(b)`` it is optimal to stop immediately,
# and the value equals the reward.
print("V(0, 1) =", lat.value_at(0.0, 1.0), " stops:", lat.stops_at(0.0, 1.0))
