"""
The persistence filter through actuator outages
===============================================

``R' = -lam R + g^k`` is the only memory the controller has of how much
actuation was recently available.  With a gain that is switched off for a
large part of every period, R still settles into a band bounded away from
zero, which is what keeps the control law finite.
"""

import numpy as np

from pfctrl import bump_schedule, check_pe, PESpec
from pfctrl.pfilter import filter_bounds_estimate, filter_samples

g1, g2 = bump_schedule()  # two smooth bumps sharing a 4 s period, never on together
print("g1 on-fraction of the period:", g1.width / g1.period)

# Excitation over any 4 s window is bounded below even though g1 = 0 for 2.2 s.
ok, eps = check_pe(g1, PESpec(window_T=4.0, level_eps=0.1, horizon=40.0))
print(f"persistently exciting: {ok}, worst window energy {eps:.3f}")

times, R = filter_samples(g1, lam=2.0, k=2, horizon=20.0, dt=0.05)
for t in np.arange(0.0, 20.0, 1.3):
    i = int(round(t / 0.05))
    print(f"t={t:5.1f}  g1={float(g1.eval(t)):5.3f}  R={R[i]:.5f}")

lo, hi = filter_bounds_estimate(g1, 2.0, 2, 100.0)
print(f"\nband after the first period: {lo:.5f} <= R <= {hi:.5f}")

# A faster filter forgets more quickly and dips lower during the outage.
for lam in (0.5, 2.0, 8.0):
    lo, hi = filter_bounds_estimate(g1, lam, 2, 100.0)
    print(f"lam={lam:4.1f}  R in [{lo:.2e}, {hi:.2e}]")
