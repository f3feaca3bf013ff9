"""
Heat kernel and Green's function
================================

Both kernels are integrals over tau in R^3 of the volume element V(tau)
against powers or exponentials of the complex action f(x, z, tau).
Here we evaluate them, check homogeneity and the heat equation, and look
at the size of the neglected tail.
"""

import numpy as np

from qcarnot import AnisotropyParams
from qcarnot import kernels as K

p = AnisotropyParams(np.array([[1.0], [1.2], [0.9]]))
x = np.array([0.6, 0.2, -0.3, 0.1])
z = np.array([0.3, -0.5, 0.4])

###############################################################################
# G is homogeneous of degree 2 - Q = -8 under (x, z) -> (lam x, lam^2 z).
g = K.green_function(x, z, p)
print(f"G = {g.value:.12g}  (imag {g.imag:.1e}, tail bound {g.tail:.1e})")
for lam in (0.5, 1.3, 2.0):
    gl = K.green_function(lam * x, lam**2 * z, p).value
    print(f"  lam = {lam}: lam^8 G(lam) / G - 1 = {gl * lam**8 / g.value - 1:.1e}")

###############################################################################
# The contour shift eps only moves the integration surface.
e0 = K.epsilon0(p)
for eps in (0.0, e0 / 4, e0 / 2):
    print(f"eps = {eps:.4f}: G = {K.green_function(x, z, p, eps=eps).value:.12g}")

###############################################################################
# The heat kernel is positive and solves Delta_0 P = dP/dt.
for t in (0.25, 0.5, 1.0):
    res, val = K.heat_residual(x, z, t, p, 1e-2, order=4)
    print(f"t = {t}: P = {val:.10g}, residual {res:.1e}")
