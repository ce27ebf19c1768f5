"""Geodesic reparametrisation of discretisation schedules.

Given per-interval costs L_i over a grid {t_i}, the cumulative length
lambda_hat(t_i) = sum_{j<i} sqrt(L_j) plays the role of arc length along the
diffusion path.  The updated grid places points uniformly in arc length:
t_i* = lambda_hat^{-1}(lambda_hat_total * i / T), realised by a monotone
cubic interpolant through the knots (lambda_hat(t_i), t_i).  A schedule is a
fixed point exactly when all sqrt(L_i) agree, i.e. when costs are equalised.

ScheduleOptimizer iterates cost estimation and reparametrisation against a
fixed score source with common random numbers, so the iteration is a
deterministic map with a well-defined fixed point.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import PchipInterpolator
from sklearn.base import BaseEstimator

from . import costs as _costs
from .schedules import DiscretisationSchedule, uniform_grid


# below this, interval costs are indistinguishable from float rounding of a
# stationary path (a standard-normal target leaves squared residues ~1e-30)
FLAT_COST_EPS = 1e-10


class FlatPathError(ValueError):
    """All interval costs are zero: the path has no length to redistribute."""


class MonotoneInterpolant:
    """Monotone cubic through (u_j, y_j) knots, clamped outside the range.

    Uses the Fritsch-Carlson construction (limited Hermite slopes), which
    interpolates the knots exactly and preserves monotonicity between them.
    """

    def __init__(self, u, y):
        u = np.asarray(u, dtype=float)
        y = np.asarray(y, dtype=float)
        if u.ndim != 1 or u.shape != y.shape or u.size < 2:
            raise ValueError("need matching 1-D knot arrays with >= 2 knots")
        if not np.all(np.diff(u) > 0):
            raise ValueError("knot abscissae must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("knot ordinates must be nondecreasing")
        self.u = u
        self.y = y
        self._interp = PchipInterpolator(u, y, extrapolate=False)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        scalar = q.ndim == 0
        q = np.atleast_1d(q)
        clipped = np.clip(q, self.u[0], self.u[-1])
        out = np.asarray(self._interp(clipped), dtype=float)
        # pin the endpoint ordinates: polynomial evaluation at the last
        # knot carries rounding the clamping contract does not allow
        out[q <= self.u[0]] = self.y[0]
        out[q >= self.u[-1]] = self.y[-1]
        return out[0] if scalar else out

    def knot_slopes(self) -> np.ndarray:
        """Limited derivative values at the knots."""
        return self._interp.derivative()(self.u)


def update_schedule(disc: DiscretisationSchedule, costs) -> DiscretisationSchedule:
    """One reparametrisation step: equidistribute cumulative sqrt-cost.

    Zero-cost intervals produce duplicate lambda_hat knots; duplicates are
    collapsed to their leftmost grid time before interpolation.  Endpoints
    are preserved exactly and the output is strictly increasing.
    """
    costs = np.asarray(costs, dtype=float)
    T = disc.T
    if costs.shape != (T,):
        raise ValueError(f"need {T} costs for a {T}-interval schedule")
    if np.any(costs < 0):
        raise ValueError("costs must be nonnegative")
    if not np.any(costs > FLAT_COST_EPS):
        raise FlatPathError(
            "flat path: all interval costs are numerically zero, "
            "nothing to redistribute"
        )
    lam = np.concatenate([[0.0], np.cumsum(np.sqrt(costs))])
    total = lam[-1]
    keep = np.concatenate([[True], np.diff(lam) > 0])
    inv = MonotoneInterpolant(lam[keep], disc.times[keep])
    targets = total * np.arange(T + 1) / T
    new_times = np.asarray(inv(targets), dtype=float)
    new_times[0] = disc.times[0]
    new_times[-1] = disc.times[-1]
    return DiscretisationSchedule(new_times)


def length_energy(costs, T: int):
    """Discrete length sum(sqrt(L_i)) and energy estimate T * sum(L_i)."""
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (T,):
        raise ValueError(f"need {T} costs, got shape {costs.shape}")
    return float(np.sqrt(costs).sum()), float(T * costs.sum())


def mix_schedules(current: DiscretisationSchedule,
                  target: DiscretisationSchedule,
                  gamma: float) -> DiscretisationSchedule:
    """Convex combination gamma * target + (1 - gamma) * current."""
    if current.T != target.T:
        raise ValueError(f"schedule lengths differ: {current.T} vs {target.T}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if (current.times[0] != target.times[0]
            or current.times[-1] != target.times[-1]):
        raise ValueError("schedules must share endpoints")
    return DiscretisationSchedule(
        gamma * target.times + (1.0 - gamma) * current.times)


class ScheduleOptimizer(BaseEstimator):
    """Iterate cost estimation + reparametrisation against a fixed score.

    Parameters
    ----------
    T : interval count of the optimised grid (ignored when init_schedule is
        passed to fit).
    estimator : "corrector" or "predictor" incremental cost.
    n_samples : Monte-Carlo samples per interval.
    tol : convergence threshold on max_i |t_i change| per iteration.
    max_iter : iteration cap.
    n_probes : Hutchinson probes (predictor cost only).
    random_state : seed for the common random numbers.

    Fitted attributes: schedule_, profile_, history_ (per-iteration records
    of length/energy/max movement), n_iter_, converged_, flat_path_.
    """

    def __init__(self, T: int = 50, estimator: str = "corrector",
                 n_samples: int = 4096, tol: float = 1e-4, max_iter: int = 100,
                 n_probes: int = 5, random_state: int = 0):
        self.T = T
        self.estimator = estimator
        self.n_samples = n_samples
        self.tol = tol
        self.max_iter = max_iter
        self.n_probes = n_probes
        self.random_state = random_state

    def fit(self, source, init_schedule: DiscretisationSchedule | None = None,
            data=None):
        nsched = _source_schedule(source)
        if init_schedule is None:
            # start at the t_min floor: scores are evaluated there anyway and
            # v(0) = 0 would pin a zero-cost first interval at t_0 = 0
            disc = uniform_grid(self.T, nsched.t_min)
        else:
            disc = init_schedule
        self.history_ = []
        self.flat_path_ = False
        self.converged_ = False
        prof = None
        for it in range(self.max_iter):
            prof = _costs.profile(source, nsched, disc, self.estimator,
                                  self.n_samples, seed=self.random_state,
                                  data=data, n_probes=self.n_probes)
            try:
                new_disc = update_schedule(disc, prof.costs)
            except FlatPathError:
                self.flat_path_ = True
                self.converged_ = True
                self.history_.append(
                    {"iteration": it, "length": 0.0, "energy": 0.0,
                     "max_move": 0.0})
                break
            move = float(np.max(np.abs(new_disc.times - disc.times)))
            self.history_.append(
                {"iteration": it, "length": prof.length,
                 "energy": prof.energy, "max_move": move})
            disc = new_disc
            if move < self.tol:
                self.converged_ = True
                break
        self.schedule_ = disc
        if not self.flat_path_:
            # re-estimate so profile_ describes the returned schedule
            prof = _costs.profile(source, nsched, disc, self.estimator,
                                  self.n_samples, seed=self.random_state,
                                  data=data, n_probes=self.n_probes)
        self.profile_ = prof
        self.n_iter_ = len(self.history_)
        return self


def _source_schedule(source):
    if hasattr(source, "nsched"):
        return source.nsched
    if hasattr(source, "target"):
        return source.target.sched
    raise ValueError(f"cannot infer a noise schedule from {source!r}")
