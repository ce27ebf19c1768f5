"""Gaussian-mixture targets with closed-form diffusion paths.

For a mixture p_0 = sum_k w_k N(mu_k, diag(tau_k^2)) the marginal at time t
under kernel N(s(t) x_0, sigma(t)^2 I) is again a mixture:

    p_t = sum_k w_k N(s(t) mu_k, s(t)^2 tau_k^2 + sigma(t)^2).

Everything downstream validates against these targets: log-density, score,
and (in one dimension) exact second and third derivatives of log p_t.
All mixture sums go through log-sum-exp so small variances (1e-3 std and
below) stay finite.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .schedules import NoiseSchedule

_LOG_2PI = np.log(2.0 * np.pi)


class GmmTarget:
    """Finite Gaussian mixture: weights (K,), means (K, d), variances (K, d)."""

    def __init__(self, weights, means, variances):
        w = np.asarray(weights, dtype=float)
        m = np.atleast_2d(np.asarray(means, dtype=float))
        if m.shape[0] != w.size:
            m = m.T
        v = np.asarray(variances, dtype=float)
        if v.ndim == 0:
            v = np.full_like(m, float(v))
        elif v.ndim == 1:
            if v.size == w.size:
                v = np.repeat(v[:, None], m.shape[1], axis=1)
            else:
                v = np.tile(v[None, :], (w.size, 1))
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {w.sum()!r}")
        if np.any(v <= 0):
            raise ValueError("mixture variances must be strictly positive")
        if m.shape != v.shape:
            raise ValueError(f"means {m.shape} and variances {v.shape} mismatch")
        self.weights = w
        self.means = m
        self.variances = v

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_density(self, x):
        x = _as_points(x, self.dim)
        comp = _component_log_densities(x, self.means, self.variances)
        return logsumexp(comp + np.log(self.weights)[None, :], axis=1)

    def score(self, x):
        x = _as_points(x, self.dim)
        return _mixture_score(x, self.weights, self.means, self.variances)

    def sample(self, n: int, rng) -> np.ndarray:
        if n < 1:
            raise ValueError("need n >= 1")
        rng = _as_rng(rng)
        ks = rng.choice(self.n_components, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        return self.means[ks] + np.sqrt(self.variances[ks]) * eps

    def __repr__(self):
        return f"GmmTarget(K={self.n_components}, dim={self.dim})"


class DiffusedGmm:
    """The diffusion path {p_t} of a GmmTarget under a noise schedule."""

    def __init__(self, base: GmmTarget, sched: NoiseSchedule):
        self.base = base
        self.sched = sched

    @property
    def dim(self) -> int:
        return self.base.dim

    def _check_t(self, t: float) -> float:
        t = float(t)
        if not (self.sched.t_min <= t <= 1.0):
            raise ValueError(
                f"t={t} outside [{self.sched.t_min}, 1]; scores are undefined "
                f"below the floor"
            )
        return t

    def params_at(self, t: float):
        """Diffused (means, variances) at time t."""
        t = self._check_t(t)
        s, sig = self.sched.kernel_params(t)
        return s * self.base.means, s ** 2 * self.base.variances + sig ** 2

    def log_density(self, x, t: float):
        means, variances = self.params_at(t)
        x = _as_points(x, self.dim)
        comp = _component_log_densities(x, means, variances)
        return logsumexp(comp + np.log(self.base.weights)[None, :], axis=1)

    def score(self, x, t: float):
        means, variances = self.params_at(t)
        x = _as_points(x, self.dim)
        return _mixture_score(x, self.base.weights, means, variances)

    def score_derivative(self, x, t: float, order: int):
        """Exact d^order/dx^order of log p_t in one dimension, order in {2, 3}."""
        if self.dim != 1:
            raise ValueError("score derivatives are implemented for dim=1 only")
        if order not in (2, 3):
            raise ValueError(f"order must be 2 or 3, got {order}")
        means, variances = self.params_at(t)
        x = _as_points(x, 1)[:, 0]
        m, v = means[:, 0], variances[:, 0]
        if m.size == 1:
            # single component: log p is a quadratic, so the cancellations
            # in the mixture formulas below are exact
            const = -1.0 / v[0] if order == 2 else 0.0
            return np.full(x.shape[0], const)
        # responsibilities r_k(x) in log space
        logphi = (-0.5 * (x[:, None] - m[None, :]) ** 2 / v[None, :]
                  - 0.5 * np.log(v[None, :]) - 0.5 * _LOG_2PI
                  + np.log(self.base.weights)[None, :])
        logp = logsumexp(logphi, axis=1)
        r = np.exp(logphi - logp[:, None])
        a = (m[None, :] - x[:, None]) / v[None, :]       # dlog phi_k / dx
        d1 = np.sum(r * a, axis=1)                       # p'/p
        p2 = np.sum(r * (a ** 2 - 1.0 / v[None, :]), axis=1)   # p''/p
        if order == 2:
            return p2 - d1 ** 2
        p3 = np.sum(r * (a ** 3 - 3.0 * a / v[None, :]), axis=1)  # p'''/p
        return p3 - 3.0 * p2 * d1 + 2.0 * d1 ** 3

    def sample(self, n: int, t: float, rng) -> np.ndarray:
        if n < 1:
            raise ValueError("need n >= 1")
        means, variances = self.params_at(t)
        rng = _as_rng(rng)
        ks = rng.choice(self.base.n_components, size=n, p=self.base.weights)
        eps = rng.standard_normal((n, self.dim))
        return means[ks] + np.sqrt(variances[ks]) * eps

    def coupled_path_samples(self, n: int, rng):
        """Base draws (x0, eps) defining x_t = s(t) x0 + sigma(t) eps.

        For any t the marginal of x_t is exactly p_t, and one pair of draws
        yields coupled samples along the whole path; cost estimation uses
        this to share score evaluations between adjacent intervals.
        """
        rng = _as_rng(rng)
        x0 = self.base.sample(n, rng)
        eps = rng.standard_normal((n, self.dim))
        return x0, eps

    def __repr__(self):
        return f"DiffusedGmm({self.base!r}, {self.sched!r})"


def bimodal_target(offset: float = 6.0, std: float = 0.1) -> GmmTarget:
    """Equal-weight pair of Gaussians at +-offset with component std."""
    return GmmTarget([0.5, 0.5], [[-offset], [offset]], std ** 2)


def cantor_points(level: int) -> np.ndarray:
    """Centers of the 2^level intervals of the level-`level` Cantor construction."""
    if level < 1:
        raise ValueError("level must be >= 1")
    centers = np.array([0.5])
    for _ in range(level):
        centers = np.concatenate([centers / 3.0, centers / 3.0 + 2.0 / 3.0])
    return np.sort(centers)


def cantor_target(level: int, mollify_t: float,
                  sched: NoiseSchedule) -> GmmTarget:
    """Mollified Cantor measure on [0, 1] at finite construction depth.

    Running the forward diffusion for time mollify_t turns the level-n
    construction points c_j into an equal-weight mixture with means
    s(mollify_t) c_j and variance sigma(mollify_t)^2.
    """
    if not (0.0 < mollify_t <= 0.01):
        raise ValueError(
            f"mollify_t must lie in (0, 0.01], got {mollify_t}; "
            f"0 leaves a measure without a density"
        )
    if mollify_t < sched.t_min:
        raise ValueError(f"mollify_t={mollify_t} below schedule floor {sched.t_min}")
    centers = cantor_points(level)
    s, sig = sched.kernel_params(mollify_t)
    k = centers.size
    return GmmTarget(np.full(k, 1.0 / k), (s * centers)[:, None], float(sig) ** 2)


def _as_points(x, dim: int) -> np.ndarray:
    """Coerce x to shape (n, dim)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None] if dim == 1 else arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"points must have shape (n, {dim}), got {arr.shape}")
    return arr


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _component_log_densities(x, means, variances):
    """(n, K) Gaussian log-densities with diagonal covariance."""
    diff = x[:, None, :] - means[None, :, :]
    return np.sum(
        -0.5 * diff ** 2 / variances[None, :, :]
        - 0.5 * np.log(variances[None, :, :]) - 0.5 * _LOG_2PI,
        axis=2,
    )


def _mixture_score(x, weights, means, variances):
    comp = _component_log_densities(x, means, variances)
    logw = comp + np.log(weights)[None, :]
    r = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    pull = (means[None, :, :] - x[:, None, :]) / variances[None, :, :]
    return np.sum(r[:, :, None] * pull, axis=1)
