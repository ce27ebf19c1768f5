"""Monte-Carlo estimators of incremental traversal costs.

The corrector-optimised cost of moving the backward dynamics from time t to
time t' weighs the relative Fisher divergence between the two marginals by
the squared corrector velocity,

    L_c(t, t') = v(t)^2 E_{x ~ p_t} || score(x, t') - score(x, t) ||^2,

and the predictor-optimised cost replaces the raw score mismatch with the
residual after an Euler probability-flow transport F (drift f x - g^2/2 score):

    L_p(t, t') = v(t)^2 E_{x ~ p_t} || grad log G(x) ||^2,
    grad log G = [grad F]^T score(F(x), t') - score(x, t) + grad log |det grad F|,

where the log-det gradient is the Hutchinson probe estimate scaled by
-dt g^2 / 2.  In both cases the expectation runs under the marginal at the
first argument t (the sampling side), matching a backward move t -> t' with
t' < t when costs are profiled over a schedule.  The velocity is evaluated
at the same endpoint as the samples: both conventions agree to leading
order in dt, but only this one keeps the equalised-cost fixed point of a
T = 50 grid on the continuum geodesic when sigma(t) changes by an order of
magnitude within a single interval.

For small dt both behave like delta(t) dt^2, the local cost; local_cost
measures the ratio L / dt^2 and extrapolates dt -> 0.
"""

from __future__ import annotations

import warnings

import numpy as np

from .schedules import DiscretisationSchedule, NoiseSchedule
from .scorenet import _as_batch
from .sources import hutchinson_trace_grad

_JENSEN_SLACK = 1e-12


class CostProfile:
    """Per-interval costs L(t_{i+1}, t_i) over a discretisation schedule.

    Derived quantities: cumulative length lambda_hat(t_i) = sum_{j<i} sqrt(L_j),
    total length, and the energy estimate T * sum(L).  The discrete Jensen
    bound sum(L) >= length^2 / T holds for any cost vector and is asserted
    (up to float rounding) on construction.
    """

    def __init__(self, schedule: DiscretisationSchedule, costs, n_samples: int,
                 estimator: str):
        costs = np.asarray(costs, dtype=float)
        if costs.shape != (schedule.T,):
            raise ValueError(f"need {schedule.T} costs, got shape {costs.shape}")
        if np.any(costs < 0):
            raise ValueError("incremental costs are means of squared norms, >= 0")
        self.schedule = schedule
        self.costs = costs
        self.n_samples = int(n_samples)
        self.estimator = estimator
        self.sqrt_costs = np.sqrt(costs)
        self.lambda_cum = np.concatenate([[0.0], np.cumsum(self.sqrt_costs)])
        scale = max(self.energy, 1.0)
        if self.schedule.T * costs.sum() < self.length ** 2 - _JENSEN_SLACK * scale:
            raise AssertionError("discrete Jensen bound violated; estimator bug")

    @property
    def length(self) -> float:
        return float(self.sqrt_costs.sum())

    @property
    def energy(self) -> float:
        return float(self.schedule.T * self.costs.sum())

    @property
    def rel_std_sqrt(self) -> float:
        """Relative spread of sqrt(L_i); zero iff costs are equalised."""
        s = self.sqrt_costs
        m = s.mean()
        if m == 0.0:
            return 0.0
        return float(s.std() / m)

    def to_csv(self, path) -> None:
        """Columns i, t_i, t_{i+1}, L, sqrtL, Lambda_cum; the last is the
        cumulative length through interval i."""
        times = self.schedule.times
        with open(path, "w") as fh:
            fh.write("i,t_i,t_ip1,L,sqrtL,Lambda_cum\n")
            for i in range(self.schedule.T):
                fh.write(f"{i},{times[i]:.17g},{times[i + 1]:.17g},"
                         f"{self.costs[i]:.17g},{self.sqrt_costs[i]:.17g},"
                         f"{self.lambda_cum[i + 1]:.17g}\n")

    def __repr__(self):
        return (f"CostProfile(T={self.schedule.T}, estimator={self.estimator!r}, "
                f"length={self.length:.4g}, energy={self.energy:.4g})")


def corrector_cost(src, nsched: NoiseSchedule, t: float, t_next: float, xs,
                   return_terms: bool = False):
    """Corrector-optimised cost of the move t -> t_next with xs ~ p_t.

    Evaluates both scores at the sampled points and weighs the squared
    difference by v(t)^2, the velocity at the sample endpoint.  Weighing at
    the destination instead biases the equalised schedule away from the
    geodesic wherever sigma changes quickly across one interval (the first
    interval of a variance-preserving path is the worst case).  With
    return_terms the per-sample values are returned alongside the mean.
    """
    xs = _as_batch(xs, src.dim)
    if xs.shape[0] == 0:
        raise ValueError("xs must be non-empty")
    if t == t_next:
        terms = np.zeros(xs.shape[0])
        return (0.0, terms) if return_terms else 0.0
    v = float(nsched.velocity(max(t, nsched.t_min)))
    diff = src.score(xs, t_next) - src.score(xs, t)
    terms = v ** 2 * np.sum(diff ** 2, axis=1)
    cost = float(terms.mean())
    return (cost, terms) if return_terms else cost


def predictor_cost(src, nsched: NoiseSchedule, t: float, t_prev: float, xs,
                   n_probes: int = 5, seed=0, fd_h: float = 1e-3,
                   return_terms: bool = False):
    """Predictor-optimised cost of the move t -> t_prev with xs ~ p_t.

    Transports each sample by one Euler probability-flow step toward t_prev
    and measures the residual score mismatch including the log-det-Jacobian
    gradient, weighted by v(t)^2 (sample endpoint, as in corrector_cost).
    The expansion requires dt * tr(f I - g^2/2 grad score) < 1 per sample;
    violating samples are reported as a fraction (and warned about) rather
    than silently included.

    With return_terms returns (cost, per-sample terms, violation fraction).
    """
    xs = _as_batch(xs, src.dim)
    n, d = xs.shape
    if n == 0:
        raise ValueError("xs must be non-empty")
    dt = t_prev - t
    if dt == 0.0:
        out = (0.0, np.zeros(n), 0.0) if return_terms else 0.0
        return out
    f, g = (float(c) for c in nsched.sde_coeffs(max(t, nsched.t_min)))
    v = float(nsched.velocity(max(t, nsched.t_min)))

    score_t = src.score(xs, t)
    jac = _score_jacobian(src, xs, t, fd_h)          # (n, d, d)

    trace = np.trace(jac, axis1=1, axis2=2)
    trace_cond = dt * (f * d - 0.5 * g ** 2 * trace)
    violations = float(np.mean(trace_cond >= 1.0))
    if violations > 0.0:
        warnings.warn(
            f"trace condition violated for {violations:.1%} of samples at "
            f"(t={t:.4g}, t'={t_prev:.4g}); expansion unreliable there",
            RuntimeWarning,
        )

    flow = xs + dt * (f * xs - 0.5 * g ** 2 * score_t)
    grad_f = np.eye(d)[None, :, :] + dt * (
        f * np.eye(d)[None, :, :] - 0.5 * g ** 2 * jac)
    score_next = src.score(flow, t_prev)
    transported = np.einsum("nij,ni->nj", grad_f, score_next)
    logdet_grad = (-0.5 * dt * g ** 2) * hutchinson_trace_grad(
        src, xs, t, n_probes, seed)
    resid = transported - score_t + logdet_grad
    terms = v ** 2 * np.sum(resid ** 2, axis=1)
    cost = float(terms.mean())
    if return_terms:
        return cost, terms, violations
    return cost


def _score_jacobian(src, xs, t: float, fd_h: float) -> np.ndarray:
    """(n, d, d) Jacobian of the score; exact for 1-D oracles, else central FD."""
    n, d = xs.shape
    if getattr(src, "is_oracle", False) and d == 1:
        return src.score_derivative(xs, t, 2).reshape(n, 1, 1)
    jac = np.empty((n, d, d))
    for j in range(d):
        shift = np.zeros_like(xs)
        shift[:, j] = fd_h
        jac[:, :, j] = (src.score(xs + shift, t) - src.score(xs - shift, t)) \
            / (2.0 * fd_h)
    return jac


def _path_points(src, n_samples: int, rng, data):
    """Base draws (x0, eps) so that x_t = s(t) x0 + sigma(t) eps ~ p_t.

    Oracle sources draw x0 from the base mixture; learned sources forward-
    noise the provided data batch.  One pair of draws couples all times.
    """
    if data is not None:
        x0 = _as_batch(data, src.dim)
        eps = rng.standard_normal(x0.shape)
        return x0, eps
    if not getattr(src, "is_oracle", False):
        raise ValueError("a learned source needs a data batch to estimate costs")
    return src.target.coupled_path_samples(n_samples, rng)


def profile(src, noise_sched: NoiseSchedule, disc: DiscretisationSchedule,
            estimator: str = "corrector", n_samples: int = 1024, seed=0,
            data=None, n_probes: int = 5) -> CostProfile:
    """Estimate L(t_{i+1}, t_i) for every interval of the schedule.

    Samples at each interval's upper endpoint come from one coupled set of
    base draws (x_t = s(t) x0 + sigma(t) eps), so the score evaluations at
    time t_{i+1} are shared between interval i and the diagonal cache, and a
    learned source evaluates everything in two batched forward passes.
    """
    if estimator not in ("corrector", "predictor"):
        raise ValueError(f"unknown estimator {estimator!r}")
    rng = np.random.default_rng(seed)
    x0, eps = _path_points(src, n_samples, rng, data)
    n = x0.shape[0]
    times = disc.times
    T = disc.T
    t_eval = np.maximum(times, noise_sched.t_min)
    s_all, sig_all = noise_sched.kernel_params(t_eval)
    # x_at[j] ~ p_{t_j}; interval i uses points at j = i + 1
    x_at = s_all[:, None, None] * x0[None, :, :] \
        + sig_all[:, None, None] * eps[None, :, :]

    if estimator == "predictor":
        costs = np.empty(T)
        seeds = np.random.SeedSequence(seed).spawn(T)
        for i in range(T):
            costs[i] = predictor_cost(src, noise_sched, times[i + 1], times[i],
                                      x_at[i + 1], n_probes=n_probes,
                                      seed=seeds[i])
        return CostProfile(disc, costs, n, estimator)

    v = noise_sched.velocity(t_eval[1:])  # sample-endpoint weighting
    if hasattr(src, "score_batched_times"):
        # single forward pass over (2T, n) stacked rows
        diag_x = x_at[1:].reshape(T * n, -1)
        diag_t = np.repeat(t_eval[1:], n)
        cross_t = np.repeat(t_eval[:-1], n)
        big = src.score_batched_times(
            np.concatenate([diag_x, diag_x]),
            np.concatenate([diag_t, cross_t]))
        diag = big[:T * n].reshape(T, n, -1)
        cross = big[T * n:].reshape(T, n, -1)
        diff = cross - diag
        costs = v ** 2 * np.mean(np.sum(diff ** 2, axis=2), axis=1)
    else:
        costs = np.empty(T)
        for i in range(T):
            xi = x_at[i + 1]
            diff = src.score(xi, times[i]) - src.score(xi, times[i + 1])
            costs[i] = v[i] ** 2 * np.mean(np.sum(diff ** 2, axis=1))
    return CostProfile(disc, costs, n, estimator)


def local_cost(src, noise_sched: NoiseSchedule, t: float, dts, n_samples: int,
               seed=0, estimator: str = "corrector", n_probes: int = 5,
               data=None):
    """Ratios L(t, t + dt) / dt^2 and their Richardson extrapolation to 0.

    The extrapolated value estimates the local cost delta(t), the quadratic
    coefficient of the incremental cost.  All ratios share one sample set so
    they vary smoothly in dt.
    """
    dts = np.asarray(dts, dtype=float)
    if np.any(dts <= 0) or np.any(np.diff(dts) >= 0):
        raise ValueError("dts must be positive and strictly decreasing")
    if t + dts[0] > 1.0:
        raise ValueError(f"t + max(dt) = {t + dts[0]} exceeds 1")
    rng = np.random.default_rng(seed)
    if getattr(src, "is_oracle", False) and data is None:
        xs = src.target.sample(n_samples, max(t, noise_sched.t_min), rng)
    else:
        x0, eps = _path_points(src, n_samples, rng, data)
        s, sig = noise_sched.kernel_params(max(t, noise_sched.t_min))
        xs = s * x0 + sig * eps
    ratios = np.empty(dts.size)
    for k, dt in enumerate(dts):
        if estimator == "corrector":
            c = corrector_cost(src, noise_sched, t, t + dt, xs)
        else:
            c = predictor_cost(src, noise_sched, t, t + dt, xs,
                               n_probes=n_probes, seed=seed)
        ratios[k] = c / dt ** 2
    if dts.size >= 2:
        da, db = dts[-2], dts[-1]
        ra, rb = ratios[-2], ratios[-1]
        extrapolated = float((da * rb - db * ra) / (da - db))
    else:
        extrapolated = float(ratios[-1])
    return ratios, extrapolated
