"""Shared fixtures: the default VP schedule and the standard analytic targets.

Targets come in pairs (base mixture, diffused path) plus an oracle score
source, so tests can compare estimator output against closed forms.
"""

import numpy as np
import pytest

from scoresched import (
    DiffusedGmm,
    GmmTarget,
    OracleScore,
    VPLinearSchedule,
    bimodal_target,
)


@pytest.fixture(scope="session")
def vp():
    return VPLinearSchedule()


@pytest.fixture(scope="session")
def std_normal(vp):
    tgt = GmmTarget([1.0], [0.0], [1.0])
    return DiffusedGmm(tgt, vp)


@pytest.fixture(scope="session")
def std_normal_src(std_normal):
    return OracleScore(std_normal)


@pytest.fixture(scope="session")
def gauss01(vp):
    # the narrow N(0, 0.1^2) target used for geodesic comparisons
    tgt = GmmTarget([1.0], [0.0], [0.01])
    return DiffusedGmm(tgt, vp)


@pytest.fixture(scope="session")
def gauss01_src(gauss01):
    return OracleScore(gauss01)


@pytest.fixture(scope="session")
def bimodal(vp):
    return DiffusedGmm(bimodal_target(), vp)


@pytest.fixture(scope="session")
def bimodal_src(bimodal):
    return OracleScore(bimodal)


def gaussian_interval_cost(nsched, tau2: float, t: float, t_next: float) -> float:
    """Closed-form corrector cost for a centred 1-D Gaussian N(0, tau2).

    With V(u) = abar(u) tau2 + 1 - abar(u), the score at time u is -x/V(u),
    so the expected squared score difference under p_t is
    (1/V(t') - 1/V(t))^2 E[x^2] and the velocity weight sits at the sample
    endpoint t:  L = sigma(t)^2 (1/V(t') - 1/V(t))^2 V(t).
    """
    ab_t = float(nsched.alpha_bar(t))
    ab_n = float(nsched.alpha_bar(t_next))
    v_t = ab_t * tau2 + 1.0 - ab_t
    v_n = ab_n * tau2 + 1.0 - ab_n
    sig2 = 1.0 - ab_t
    return sig2 * (1.0 / v_n - 1.0 / v_t) ** 2 * v_t


def gaussian_local_cost(nsched, tau2: float, t: float) -> float:
    """Analytic local cost delta_c(t) = sigma(t)^2 V'(t)^2 / V(t)^3 for
    the same Gaussian target, with V'(t) = beta(t) abar(t) (1 - tau2)."""
    ab = float(nsched.alpha_bar(t))
    beta = float(nsched.beta(t))
    v = ab * tau2 + 1.0 - ab
    vdot = beta * ab * (1.0 - tau2)
    sig2 = 1.0 - ab
    return sig2 * vdot**2 / v**3
