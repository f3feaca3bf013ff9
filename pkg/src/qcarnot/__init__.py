"""Geometry, geodesics and kernels of anisotropic quaternion Carnot groups Q^n."""
import os as _os

# QN_THREADS caps the BLAS/OpenMP pools; it has to be set before numpy loads
if _os.environ.get("QN_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["QN_THREADS"])

from .algebra import AnisotropyParams, GroupPoint  # noqa: E402
from .connectivity import GeodesicSolution, enumerate_geodesics, mu  # noqa: E402
from .geodesics import GeodesicIVP, exp_map  # noqa: E402

__version__ = "0.1.0"
__all__ = ["AnisotropyParams", "GroupPoint", "GeodesicIVP", "GeodesicSolution",
           "enumerate_geodesics", "exp_map", "mu"]
