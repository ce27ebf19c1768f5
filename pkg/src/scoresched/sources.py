"""Uniform score evaluation over analytic oracles and learned networks.

A score source exposes score(x, t) for t in [t_min, 1]; callers may pass any
t and evaluation is floored at t_min, where sigma > 0 keeps scores bounded.
The oracle variant additionally exposes exact 1-D derivatives, which the
estimators use as reference paths.
"""

from __future__ import annotations

import numpy as np

from .scorenet import ScoreNetwork, _as_batch
from .schedules import NoiseSchedule
from .targets import DiffusedGmm

HUTCHINSON_INNER_H = 1e-3   # directional step for v^T (grad score) v
HUTCHINSON_OUTER_H = 1e-3   # outer spatial step, scaled by (1 + ||x||)


class OracleScore:
    """Exact scores (and 1-D derivatives) of a closed-form diffusion path."""

    is_oracle = True

    def __init__(self, target: DiffusedGmm):
        self.target = target
        self.t_min = target.sched.t_min
        self.dim = target.dim

    def score(self, x, t: float) -> np.ndarray:
        return self.target.score(x, max(float(t), self.t_min))

    def score_derivative(self, x, t: float, order: int) -> np.ndarray:
        return self.target.score_derivative(x, max(float(t), self.t_min), order)


class LearnedScore:
    """Score of a noise-prediction network: -eps_hat(x, t) / sigma(t)."""

    is_oracle = False

    def __init__(self, net: ScoreNetwork, nsched: NoiseSchedule):
        self.net = net
        self.nsched = nsched
        self.t_min = nsched.t_min
        self.dim = net.dim

    def score(self, x, t: float) -> np.ndarray:
        t_eff = max(float(t), self.t_min)
        sig = float(self.nsched.sigma(t_eff))
        return -self.net.forward(x, t_eff) / sig

    def score_batched_times(self, x, t) -> np.ndarray:
        """Score at per-row times t (n,), floored at t_min; one forward pass."""
        t_eff = np.maximum(np.asarray(t, dtype=float), self.t_min)
        _, sig = self.nsched.kernel_params(t_eff)
        return -self.net.forward(x, t_eff) / sig[:, None]


def hutchinson_trace_grad(src, x, t: float, n_probes: int, seed,
                          inner_h: float = HUTCHINSON_INNER_H,
                          outer_h: float = HUTCHINSON_OUTER_H,
                          return_stderr: bool = False):
    """Probe estimate of grad_x Tr(grad score(x, t)).

    Averages grad(v^T J v) over Gaussian probes v, J the score Jacobian.
    On 1-D oracles the per-probe value is v^2 times the exact third
    derivative of log p_t; on learned sources v^T J v is a central
    directional difference of the score and its spatial gradient a nested
    central difference (steps inner_h and outer_h * (1 + ||x||)).

    Returns (n, d) estimates; with return_stderr also the (n, d) standard
    error over probes.
    """
    if n_probes < 1:
        raise ValueError("need n_probes >= 1")
    x = _as_batch(x, src.dim)
    n, d = x.shape
    rng = np.random.default_rng(seed)
    vs = rng.standard_normal((n_probes, n, d))

    if getattr(src, "is_oracle", False) and d == 1:
        d3 = src.score_derivative(x, t, 3)[:, None]
        per_probe = vs ** 2 * d3[None, :, :]
    else:
        h_out = outer_h * (1.0 + np.linalg.norm(x, axis=1))[:, None]
        per_probe = np.empty((n_probes, n, d))
        for p in range(n_probes):
            v = vs[p]
            for j in range(d):
                shift = np.zeros_like(x)
                shift[:, j] = h_out[:, 0]
                qp = _vjv(src, x + shift, t, v, inner_h)
                qm = _vjv(src, x - shift, t, v, inner_h)
                per_probe[p, :, j] = (qp - qm) / (2.0 * h_out[:, 0])

    est = per_probe.mean(axis=0)
    if not return_stderr:
        return est
    if n_probes == 1:
        return est, np.full_like(est, np.inf)
    stderr = per_probe.std(axis=0, ddof=1) / np.sqrt(n_probes)
    return est, stderr


def _vjv(src, y, t, v, h):
    """v^T (grad score)(y) v by a central directional difference."""
    sp = src.score(y + h * v, t)
    sm = src.score(y - h * v, t)
    return np.sum((sp - sm) * v, axis=1) / (2.0 * h)
