"""
Geodesics on a quaternion Carnot group
======================================

Integrate a geodesic from the origin, check it against the equations of
motion, then solve the boundary problem for a few kinds of targets.
"""

import numpy as np

from qcarnot import AnisotropyParams, GeodesicIVP, GroupPoint, enumerate_geodesics, exp_map
from qcarnot.connectivity import check_solution
from qcarnot.geodesics import residual_battery

# two quaternion blocks with different stretch factors per direction
p = AnisotropyParams(np.array([[1.0, 0.8], [1.2, 1.0], [0.9, 1.1]]))

###############################################################################
# The initial value problem has a closed form.  theta = 0 is a straight line.
iv = GeodesicIVP([1.0, 0.2, 0.0, -0.4, 0.3, 0.0, 0.5, 0.1], [0.8, -0.3, 1.1])
s = np.linspace(0, 1, 5)
x, z, _ = exp_map(iv, s, p)
print("z(s) along the curve:\n", np.round(z, 6))

rep = residual_battery(iv, p)
print(f"finite-difference residuals ok: {rep.ok} ({rep.samples} samples)")

###############################################################################
# Points of the form (0, z) are reached by infinitely many geodesics; the
# enumeration stops at the index cap and says so.
res = enumerate_geodesics(GroupPoint(np.zeros(4), [1.0, 0.0, 0.0]),
                          AnisotropyParams.isotropic(1), max_index=4)
print("(0, z): lengths", np.round(res.lengths, 6), "truncated:", res.truncated)
print("squared lengths / 4 pi:", np.round(res.lengths**2 / (4 * np.pi), 12))

###############################################################################
# A generic target: a finite list of geodesics, shortest first.
target = GroupPoint([0.5, 0.1, -0.3, 0.2, 0.4, 0.0, 0.1, -0.2], [0.1, -0.05, 0.2])
res = enumerate_geodesics(target, p, max_branch=1)
for sol in res:
    chk = check_solution(sol)
    print(f"length {sol.length:.9f}  |theta|_l {np.round(sol.theta_norms, 6)}  ok {chk['ok']}")
