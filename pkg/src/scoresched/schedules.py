"""Continuous noising laws and discretisation grids.

The forward process is the linear SDE

    dX_t = f(t) X_t dt + g(t) dW_t,        t in [0, 1],

whose marginal kernel is Gaussian, p(x_t | x_0) = N(x_t; s(t) x_0, sigma(t)^2 I).
A schedule family fixes (f, g) and therefore (s, sigma):

  * variance preserving (VP): s(t) = sqrt(alpha_bar(t)), sigma^2 = 1 - alpha_bar,
    with f = -beta/2, g = sqrt(beta) and alpha_bar(t) = exp(-int_0^t beta);
  * variance exploding (VE): s = 1, sigma grows geometrically, f = 0,
    g = sqrt(d sigma^2 / dt).

The corrector velocity is v(t) = sigma(t) throughout.

Schedules are immutable and vectorised over t.  Scores are never evaluated
below the floor t_min because sigma(t) -> 0 makes them unbounded there.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

T_MIN_DEFAULT = 1e-5


def _as_time(t):
    """Validate t in [0, 1] and return it as a float array."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"time must lie in [0, 1], got {t!r}")
    return arr


class NoiseSchedule:
    """Base class for noising laws; subclasses define one family each."""

    t_min: float
    variance_exploding: bool = False

    def alpha_bar(self, t):
        raise ValueError(
            f"alpha_bar is only defined for variance-preserving families, "
            f"not {type(self).__name__}"
        )

    def kernel_params(self, t):
        """Return (s(t), sigma(t)) of the marginal kernel."""
        raise NotImplementedError

    def sde_coeffs(self, t):
        """Return (f(t), g(t)) of the forward SDE."""
        raise NotImplementedError

    def sigma(self, t):
        return self.kernel_params(t)[1]

    def scale(self, t):
        return self.kernel_params(t)[0]

    def velocity(self, t):
        """Corrector velocity v(t) = sigma(t)."""
        return self.sigma(t)

    def family_tag(self) -> str:
        """Canonical string identifying family and parameters."""
        raise NotImplementedError

    def invert_sigma(self, sigma_target: float) -> float:
        """Return t in [t_min, 1] with sigma(t) = sigma_target (bisection)."""
        lo, hi = self.t_min, 1.0
        slo, shi = float(self.sigma(lo)), float(self.sigma(hi))
        if not (slo <= sigma_target <= shi):
            raise ValueError(
                f"sigma={sigma_target} outside invertible range "
                f"[{slo:.6g}, {shi:.6g}] of {type(self).__name__}"
            )
        if sigma_target == slo:
            return lo
        if sigma_target == shi:
            return hi
        return brentq(lambda u: float(self.sigma(u)) - sigma_target, lo, hi,
                      xtol=1e-15, rtol=1e-14)


class VPLinearSchedule(NoiseSchedule):
    """VP family with beta(t) = beta_min + t (beta_max - beta_min)."""

    def __init__(self, beta_min: float = 0.1, beta_max: float = 20.0,
                 t_min: float = T_MIN_DEFAULT):
        if beta_min <= 0 or beta_max < beta_min:
            raise ValueError("need 0 < beta_min <= beta_max")
        if not 0.0 < t_min < 1.0:
            raise ValueError("t_min must lie in (0, 1)")
        self.beta_min = float(beta_min)
        self.beta_max = float(beta_max)
        self.t_min = float(t_min)

    def beta(self, t):
        t = _as_time(t)
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def alpha_bar(self, t):
        t = _as_time(t)
        integral = self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t ** 2
        return np.exp(-integral)

    def kernel_params(self, t):
        ab = self.alpha_bar(t)
        return np.sqrt(ab), np.sqrt(1.0 - ab)

    def sde_coeffs(self, t):
        b = self.beta(t)
        return -0.5 * b, np.sqrt(b)

    def family_tag(self) -> str:
        return f"vp_linear(beta_min={self.beta_min:g},beta_max={self.beta_max:g})"

    def __repr__(self):
        return (f"VPLinearSchedule(beta_min={self.beta_min}, "
                f"beta_max={self.beta_max}, t_min={self.t_min})")


class VPCosineSchedule(NoiseSchedule):
    """VP family with alpha_bar(t) = cos((t+eps)/(1+eps) * pi/2)^2 / cos(...)^2 at 0.

    alpha_bar is clipped below at 1e-9 to keep beta finite near t = 1; the
    value at t = 0 is exactly 1 by normalisation.
    """

    ALPHA_FLOOR = 1e-9

    def __init__(self, epsilon: float = 0.008, t_min: float = T_MIN_DEFAULT):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < t_min < 1.0:
            raise ValueError("t_min must lie in (0, 1)")
        self.epsilon = float(epsilon)
        self.t_min = float(t_min)
        self._norm = np.cos(0.5 * np.pi * epsilon / (1.0 + epsilon)) ** 2

    def _angle(self, t):
        return 0.5 * np.pi * (t + self.epsilon) / (1.0 + self.epsilon)

    def alpha_bar(self, t):
        t = _as_time(t)
        raw = np.cos(self._angle(t)) ** 2 / self._norm
        return np.clip(raw, self.ALPHA_FLOOR, 1.0)

    def beta(self, t):
        # beta = -d/dt log alpha_bar; saturates where alpha_bar is clipped.
        t = _as_time(t)
        raw = np.cos(self._angle(t)) ** 2 / self._norm
        b = np.pi * np.tan(self._angle(t)) / (1.0 + self.epsilon)
        return np.where(raw <= self.ALPHA_FLOOR, 0.0, b)

    def kernel_params(self, t):
        ab = self.alpha_bar(t)
        return np.sqrt(ab), np.sqrt(1.0 - ab)

    def sde_coeffs(self, t):
        b = self.beta(t)
        return -0.5 * b, np.sqrt(b)

    def family_tag(self) -> str:
        return f"vp_cosine(epsilon={self.epsilon:g})"

    def __repr__(self):
        return f"VPCosineSchedule(epsilon={self.epsilon}, t_min={self.t_min})"


class VESigmaSchedule(NoiseSchedule):
    """Variance-exploding family: s = 1, sigma geometric from sigma_min to sigma_max."""

    variance_exploding = True

    def __init__(self, sigma_min: float = 0.002, sigma_max: float = 80.0,
                 t_min: float = T_MIN_DEFAULT):
        if sigma_min <= 0 or sigma_max < sigma_min:
            raise ValueError("need 0 < sigma_min <= sigma_max")
        if not 0.0 < t_min < 1.0:
            raise ValueError("t_min must lie in (0, 1)")
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        self.t_min = float(t_min)
        self._log_ratio = np.log(self.sigma_max / self.sigma_min)

    def kernel_params(self, t):
        t = _as_time(t)
        sig = self.sigma_min * np.exp(t * self._log_ratio)
        return np.ones_like(sig), sig

    def sde_coeffs(self, t):
        # d sigma^2 / dt = 2 log(sigma_max/sigma_min) sigma(t)^2
        t = _as_time(t)
        sig = self.sigma_min * np.exp(t * self._log_ratio)
        g = sig * np.sqrt(2.0 * self._log_ratio)
        return np.zeros_like(sig), g

    def invert_sigma(self, sigma_target: float) -> float:
        if not (self.sigma_min <= sigma_target <= self.sigma_max):
            raise ValueError(
                f"sigma={sigma_target} outside [{self.sigma_min}, {self.sigma_max}]"
            )
        t = np.log(sigma_target / self.sigma_min) / self._log_ratio
        return float(min(max(t, self.t_min), 1.0))

    def family_tag(self) -> str:
        return f"ve(sigma_min={self.sigma_min:g},sigma_max={self.sigma_max:g})"

    def __repr__(self):
        return (f"VESigmaSchedule(sigma_min={self.sigma_min}, "
                f"sigma_max={self.sigma_max}, t_min={self.t_min})")


class DiscretisationSchedule:
    """Strictly increasing grid t_0 < ... < t_T with t_T = 1.

    t_0 is 0, or t_min when an evaluation floor is active.  This is the
    object the optimiser moves.
    """

    def __init__(self, times):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("schedule needs at least two time points")
        if not np.all(np.diff(times) > 0):
            raise ValueError("schedule times must be strictly increasing")
        if times[0] < 0.0 or abs(times[-1] - 1.0) > 1e-12:
            raise ValueError("schedule must start at >= 0 and end at 1")
        self.times = times
        self.times.setflags(write=False)

    @property
    def T(self) -> int:
        return self.times.size - 1

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        return (isinstance(other, DiscretisationSchedule)
                and np.array_equal(self.times, other.times))

    def __repr__(self):
        return f"DiscretisationSchedule(T={self.T}, t0={self.times[0]:.3g})"

    def to_csv(self, path) -> None:
        """One time per line, full precision round-trip."""
        with open(path, "w") as fh:
            for t in self.times:
                fh.write(f"{float(t):.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "DiscretisationSchedule":
        times = np.loadtxt(path, dtype=float, ndmin=1)
        return cls(times)


def uniform_grid(T: int, t_lo: float = 0.0) -> DiscretisationSchedule:
    """Uniform grid of T intervals from t_lo to 1."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return DiscretisationSchedule(np.linspace(t_lo, 1.0, T + 1))


def karras_sigmas(T: int, sigma_min: float, sigma_max: float, rho: float):
    """Noise levels sigma_0 = sigma_max >= ... >= sigma_{T-1} = sigma_min, sigma_T = 0.

    sigma_i = (sigma_max^(1/rho) + i/(T-1) (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho.
    rho = 1 degenerates to arithmetic spacing.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if T < 2:
        raise ValueError("Karras spacing needs T >= 2")
    i = np.arange(T)
    hi = sigma_max ** (1.0 / rho)
    lo = sigma_min ** (1.0 / rho)
    sigmas = (hi + i / (T - 1) * (lo - hi)) ** rho
    return np.concatenate([sigmas, [0.0]])


def baseline_schedule(kind: str, T: int, sched: NoiseSchedule,
                      rho: float = 7.0,
                      sigma_lo: float | None = None) -> DiscretisationSchedule:
    """Reference discretisation grids.

    kind:
      * "uniform"          t_i = i/T on [0, 1];
      * "cosine"           t_i = (1 - cos(pi i / T)) / 2, clustered at both ends;
      * "log_linear_sigma" uniform in log sigma between sigma(t_min) and sigma(1);
      * "karras"           rho-polynomial sigma spacing, mapped back through
                           sigma(t); the terminal sigma = 0 lands on the t_min floor.

    sigma-based grids start at t_min (the floor is active for them).
    sigma_lo optionally overrides the smallest positive noise level.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if kind == "uniform":
        return uniform_grid(T, 0.0)
    if kind == "cosine":
        i = np.arange(T + 1)
        return DiscretisationSchedule(0.5 * (1.0 - np.cos(np.pi * i / T)))
    if kind == "log_linear_sigma":
        lo = float(sched.sigma(sched.t_min)) if sigma_lo is None else float(sigma_lo)
        hi = float(sched.sigma(1.0))
        sigmas = np.exp(np.linspace(np.log(lo), np.log(hi), T + 1))
        times = np.array([sched.invert_sigma(s) for s in sigmas])
        times[-1] = 1.0
        return DiscretisationSchedule(times)
    if kind == "karras":
        if T < 2:
            raise ValueError("karras needs T >= 2")
        # T+1 grid points: sigma levels for i=0..T-1 plus the terminal 0.
        lo = float(sched.sigma(max(sched.t_min, 1e-3))) if sigma_lo is None \
            else float(sigma_lo)
        hi = float(sched.sigma(1.0))
        sigmas = karras_sigmas(T, lo, hi, rho)
        times = np.empty(T + 1)
        times[0] = sched.t_min              # sigma_T = 0 sits below the floor
        for j in range(T):
            times[T - j] = sched.invert_sigma(float(sigmas[j]))
        times[-1] = 1.0
        if not np.all(np.diff(times) > 0):
            raise ValueError("karras grid collapsed; raise sigma_lo or lower T")
        return DiscretisationSchedule(times)
    raise ValueError(f"unknown baseline schedule kind {kind!r}")
