import numpy as np
import pytest

from vehopt.model import ControlGains, HarvesterParams


@pytest.fixture
def params():
    """Reference parameter set used throughout the suite."""
    return HarvesterParams(zeta_s=0.01, lam=5.0, zeta_h=0.01, kappa=0.6,
                           alpha=10.0, W=1.0)


@pytest.fixture
def gains():
    return ControlGains(K_m=0.1, K_e=900.0)


def independent_transfer(w, p, g):
    """Noise-to-voltage frequency response by direct variable elimination.

    Derived by hand from the five state equations, so it shares no code with
    the matrix-inversion route and serves as its oracle.
    """
    w = np.asarray(w, dtype=float)
    s = 1.0 + g.K_e
    den_a = p.lam**2 - w**2 + 2j * p.zeta_s * p.lam * w
    den_b = 1.0 + g.K_m - w**2 + 2j * p.zeta_h * w
    vfac = 1j * w / (p.alpha + 1j * w * s)
    return vfac * w**2 / (den_a * (den_b + p.kappa**2 * vfac))
