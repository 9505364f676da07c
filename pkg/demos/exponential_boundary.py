"""
Free boundary under exponential discounting
===========================================

With ``c(t) = exp(-r t)`` and ``f(x) = x`` the perpetual problem has the
boundary ``1/sqrt(2 r)``. On a finite horizon the lattice boundary matches
it far from the terminal time and falls to zero as ``t -> T``.
"""
import numpy as np

from dynkinlab import LatticeParams, RewardSpec, SurvivalCurve, best_response

r, T = 0.5, 8.0
c = SurvivalCurve.from_function(lambda t: np.exp(-r * t), np.linspace(0, T, 8001))

#%%
# Two space steps at a fine time step. The worst error on the first half of
# the horizon shrinks with ``dx``.
dt = 1e-4
for dx in (0.01, 0.005):
    lat = best_response(c, RewardSpec.affine(), LatticeParams(t_max=T, dt=dt, dx=dx))
    head = lat.boundary[lat.boundary_t <= T / 2]
    print(f"dx={dx}: max |b(t) - 1| = {np.max(np.abs(head - 1)):.4f} on [0, T/2], "
          f"up-closed violations {lat.upclosed_violations}")

#%%
# Near the horizon the option to wait is worth little.
for t in (0.0, 4.0, 7.0, 7.9, 8.0):
    print(f"b({t}) = {lat.boundary[int(round(t / dt))]:.3f}")
