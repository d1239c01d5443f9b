"""
Damped flow and its conserved quantity
======================================

With a structure function the energy H is no longer conserved.  The flow
pumps it at the rate w = {H, 1}, so the product I = H exp(s), with s the
running integral of w, stays constant.  We integrate the chi-q scenario
and watch H move while I does not.
"""

import numpy as np

from gchs.dynamics import TrajectoryConfig, integrate
from gchs.scenario import bundled, load_scenario

sc = load_scenario(bundled("chi-q"))
cfg = sc.trajectory_config()
traj = integrate(cfg)

for k in np.linspace(0, len(traj.t) - 1, 6).astype(int):
    print(f"t = {traj.t[k]:5.2f}   H = {traj.H[k]:.6f}   I = {traj.I[k]:.12f}")
print("drift of I:", traj.drift())

# Halving the step should cut the drift by about 2^4 for RK4.
half = TrajectoryConfig(cfg.manifold, cfg.H, cfg.x0, cfg.t0, cfg.t1, cfg.h / 2)
print("drift ratio h -> h/2:", traj.drift() / integrate(half).drift())
