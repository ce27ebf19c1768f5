"""Backward-time samplers over a discretisation schedule.

All samplers start from the reference distribution (N(0, I) for variance-
preserving families, N(0, sigma(1)^2 I) for variance-exploding ones) and
step backward through the grid t_T = 1 -> t_0.  Score evaluations are
floored at t_min; if the final grid point lies below the floor the last
interval is taken as a single deterministic (denoising) Euler step.

Kinds:
  * reverse_sde           Euler-Maruyama on the reverse SDE
                          dX = [f X - g^2 score] dt + g dW;
  * ode_euler             Euler on the probability-flow ODE
                          dX = [f X - g^2/2 score] dt;
  * ode_heun              trapezoidal (Heun) correction of ode_euler, one
                          extra score evaluation per step;
  * annealed_langevin     identity predictor + n_inner Langevin steps
                          targeting each grid time;
  * predictor_corrector   ode_euler predictor + Langevin correction at the
                          destination time.

The Langevin inner step size is eta = step_scale * v(t)^2, so the corrector
degenerates to the identity where the velocity vanishes.
"""

from __future__ import annotations

import numpy as np

from .schedules import DiscretisationSchedule, NoiseSchedule

SAMPLER_KINDS = ("reverse_sde", "ode_euler", "ode_heun", "annealed_langevin",
                 "predictor_corrector")


class SamplerConfig:
    """Sampler kind, grid, and randomness for sample_path."""

    def __init__(self, kind: str, disc: DiscretisationSchedule, seed: int = 0,
                 n_inner: int = 10, step_scale: float = 0.1):
        if kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {kind!r}; "
                             f"choose from {SAMPLER_KINDS}")
        if n_inner < 0:
            raise ValueError("n_inner must be >= 0")
        if step_scale <= 0:
            raise ValueError("step_scale must be positive")
        self.kind = kind
        self.disc = disc
        self.seed = seed
        self.n_inner = int(n_inner)
        self.step_scale = float(step_scale)

    def __repr__(self):
        return (f"SamplerConfig(kind={self.kind!r}, T={self.disc.T}, "
                f"seed={self.seed})")


def _reference_draw(nsched: NoiseSchedule, n: int, dim: int, rng):
    scale = float(nsched.sigma(1.0)) if nsched.variance_exploding else 1.0
    return scale * rng.standard_normal((n, dim))


def langevin_corrector(src, nsched: NoiseSchedule, x, t: float, n_inner: int,
                       step_scale: float, seed=0) -> np.ndarray:
    """n_inner Langevin steps targeting p_t: x += eta score + sqrt(2 eta) xi.

    eta = step_scale * v(t)^2; zero velocity (t = 0) makes this the identity.
    seed may be an int or an existing Generator (shared across calls).
    """
    eta = step_scale * float(nsched.velocity(t)) ** 2
    if n_inner == 0 or eta == 0.0:
        return x
    rng = np.random.default_rng(seed)
    for _ in range(n_inner):
        xi = rng.standard_normal(x.shape)
        x = x + eta * src.score(x, t) + np.sqrt(2.0 * eta) * xi
    return x


def sample_path(cfg: SamplerConfig, src, nsched: NoiseSchedule,
                n: int) -> np.ndarray:
    """Generate n points by simulating the backward dynamics over cfg.disc."""
    if n < 1:
        raise ValueError("need n >= 1")
    times = cfg.disc.times
    t_min = nsched.t_min
    # only the terminal point may dip below the floor (denoising step)
    if np.any(times[1:] < t_min):
        raise ValueError(f"schedule has interior times below t_min={t_min}")
    rng = np.random.default_rng(cfg.seed)
    x = _reference_draw(nsched, n, src.dim, rng)

    if cfg.kind == "annealed_langevin":
        for i in range(cfg.disc.T - 1, -1, -1):
            x = langevin_corrector(src, nsched, x, max(times[i], t_min),
                                   cfg.n_inner, cfg.step_scale, rng)
        return x

    for i in range(cfg.disc.T, 0, -1):
        t, t_prev = times[i], times[i - 1]
        dt = t_prev - t
        t_eval = max(t, t_min)
        f, g = (float(c) for c in nsched.sde_coeffs(t_eval))
        final = t_prev < t_min

        if cfg.kind == "reverse_sde":
            drift = f * x - g ** 2 * src.score(x, t_eval)
            x = x + drift * dt
            if not final:
                x = x + g * np.sqrt(-dt) * rng.standard_normal(x.shape)
        else:  # probability-flow variants
            d1 = f * x - 0.5 * g ** 2 * src.score(x, t_eval)
            if cfg.kind == "ode_heun" and not final:
                xe = x + d1 * dt
                f2, g2 = (float(c) for c in nsched.sde_coeffs(max(t_prev, t_min)))
                d2 = f2 * xe - 0.5 * g2 ** 2 * src.score(xe, max(t_prev, t_min))
                x = x + 0.5 * dt * (d1 + d2)
            else:
                x = x + d1 * dt

        if cfg.kind == "predictor_corrector" and not final:
            x = langevin_corrector(src, nsched, x, max(t_prev, t_min),
                                   cfg.n_inner, cfg.step_scale, rng)
    return x
