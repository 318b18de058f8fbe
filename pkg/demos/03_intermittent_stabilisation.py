"""
Stabilising an unstable plant with actuators that take turns
============================================================

Two inputs, two blocks, one drift eigenvalue at +1.  Each input is only
active while its bump is on, and the two bumps never overlap, so at every
instant the plant is missing at least one actuator.
"""

import numpy as np

from pfctrl import PersistenceController, PlantModel, bump_schedule, fit_decay_rate
from pfctrl.simulator import lyapunov_trace

A = np.array([[1.0, 1.0, 0.5, 0.0], [0.0, 0.0, 1.0, 0.0],
              [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.0]])
B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
print("open-loop eigenvalues:", np.linalg.eigvals(A).real)

ctrl = PersistenceController(PlantModel(A, B), list(bump_schedule()))
cfg = ctrl.config
print("block sizes", ctrl.cd.r, "filter exponent k =", ctrl.k)
print("decay rates chosen:", np.round(cfg.lambdas, 3), f" certified rate sigma = {cfg.sigma:.3g}")

traj = ctrl.simulate([1.0, -1.0, 1.0, 0.5], 40.0, 5e-3, record_every=20)
nx = traj.outputs["norm_x"]
for t in range(0, 41, 5):
    i = int(np.searchsorted(traj.times, t))
    u = traj.outputs["u"][i]
    print(f"t={t:3d}  |x|={nx[i]:.3e}  u=({u[0]: .2e}, {u[1]: .2e})")

rate, r2 = fit_decay_rate(traj.times, nx)
print(f"\nfitted decay rate {rate:.2f} (fit r^2 {r2:.3f}) against sigma = {cfg.sigma:.3g}")

# The amalgamated Lyapunov function decays at least as fast as sigma.
t, V, _ = lyapunov_trace(traj, ctrl)
worst = np.max(V[1:] / (V[:-1] * np.exp(-cfg.sigma * np.diff(t))))
print(f"worst step ratio V(t+h) / (V(t) exp(-sigma h)) = {worst:.4f}")
