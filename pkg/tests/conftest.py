import numpy as np
import pytest

from msemu import Kernel, RescaledKernel, Rescaling


def rk(family, d, theta):
    """Re-scaled kernel with a scalar or diagonal re-scaling."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    resc = Rescaling.scalar(float(theta[0])) if theta.size == 1 else Rescaling.diagonal(theta)
    return RescaledKernel(Kernel(family, d), resc)


def spread_points(rng, n, d, min_dist=1e-3):
    """Uniform points with all pairwise distances above ``min_dist``."""
    pts = []
    while len(pts) < n:
        x = rng.random(d)
        if all(np.linalg.norm(x - p) > min_dist for p in pts):
            pts.append(x)
    return np.array(pts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
