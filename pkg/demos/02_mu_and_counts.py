"""
The function mu and geodesic counts
===================================

mu(t) = (t - sin t cos t) / sin^2 t governs how many geodesics join the
origin to a point.  Each branch (m pi, (m + 1) pi), m >= 1, has a minimum
c_m with mu(c_m) = c_m, and a level above it is crossed twice there.
"""

import numpy as np

from qcarnot import mu
from qcarnot.connectivity import mu_critical, tilted_mu_roots

for m in (1, 2, 3):
    c, value = mu_critical(m)
    print(f"branch {m}: minimum at c = {c:.15f}, tan c - c = {np.tan(c) - c:.1e}")

###############################################################################
# Counting roots of mu(t) = level branch by branch.
for level in (2.0, 6.0, 9.0):
    roots = tilted_mu_roots(level, 0.0, max_branch=3)
    print(f"level {level}: counts per branch {[r.size for r in roots]}")

###############################################################################
# mu is odd and increasing on (-pi, pi).
t = np.linspace(-3.1, 3.1, 1001)
print("odd:", np.allclose(mu(-t), -mu(t)), " increasing:", bool(np.all(np.diff(mu(t)) > 0)))
