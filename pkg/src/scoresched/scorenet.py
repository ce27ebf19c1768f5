"""Small noise-prediction network with hand-written reverse-mode gradients.

Architecture (fixed up to sizes): Gaussian Fourier features embed the time
value, an input projection plus a residual time-conditioning step produce the
hidden state, then `depth` residual blocks of LayerNorm -> affine -> GELU,
and a linear head emits the noise prediction eps_hat.  The score is
-eps_hat / sigma(t); predicting noise keeps magnitudes O(1) near t_min.

Gradients are implemented per layer (affine, GELU, LayerNorm, residual add,
Fourier embedding) for exactly this architecture - no general autodiff.
Everything is float64 numpy, deterministic given seeds.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np
from scipy.special import erf

from .schedules import NoiseSchedule

_LN_EPS = 1e-5
_MAGIC = b"SSN1"


def _as_batch(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if dim == 1 else x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected points of shape (n, {dim}), got {x.shape}")
    return x


def gelu(a):
    return a * 0.5 * (1.0 + erf(a / np.sqrt(2.0)))


def gelu_grad(a):
    phi = np.exp(-0.5 * a ** 2) / np.sqrt(2.0 * np.pi)
    return 0.5 * (1.0 + erf(a / np.sqrt(2.0))) + a * phi


class ScoreNetwork:
    """Noise-prediction MLP over (x, t) with a flat parameter vector."""

    def __init__(self, dim: int = 1, width: int = 128, depth: int = 5,
                 embed: int = 12, fourier_scale: float = 16.0, seed: int = 0):
        if embed % 2 != 0:
            raise ValueError("embedding dimension must be even")
        self.dim = dim
        self.width = width
        self.depth = depth
        self.embed = embed
        self.fourier_scale = float(fourier_scale)
        self.seed = int(seed)

        layout = [("w_in", (dim, width)), ("b_in", (width,)),
                  ("w_t", (embed, width)), ("b_t", (width,))]
        for k in range(depth):
            layout += [(f"ln_g{k}", (width,)), (f"ln_b{k}", (width,)),
                       (f"w{k}", (width, width)), (f"b{k}", (width,))]
        layout += [("w_out", (width, dim)), ("b_out", (dim,))]
        self._layout = layout

        total = sum(int(np.prod(shape)) for _, shape in layout)
        self.params = np.zeros(total)
        self.p = {}
        offset = 0
        for name, shape in layout:
            size = int(np.prod(shape))
            self.p[name] = self.params[offset:offset + size].reshape(shape)
            offset += size

        rng = np.random.default_rng(seed)
        # fixed (untrained) embedding frequencies
        self.fourier_freqs = rng.standard_normal(embed // 2) * self.fourier_scale
        self.p["w_in"][:] = rng.standard_normal((dim, width)) / np.sqrt(dim)
        self.p["w_t"][:] = rng.standard_normal((embed, width)) / np.sqrt(embed)
        for k in range(depth):
            self.p[f"ln_g{k}"][:] = 1.0
            self.p[f"w{k}"][:] = rng.standard_normal((width, width)) * np.sqrt(2.0 / width)
        # zero head: a fresh network predicts zero noise, so the initial DSM
        # loss sits exactly at the zero-network value.

    @property
    def n_params(self) -> int:
        return self.params.size

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != self.params.shape:
            raise ValueError(f"expected {self.params.shape} params, got {flat.shape}")
        self.params[:] = flat

    def _embed_time(self, t, n):
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        proj = 2.0 * np.pi * t[:, None] * self.fourier_freqs[None, :]
        return np.concatenate([np.sin(proj), np.cos(proj)], axis=1)

    def forward(self, x, t, cache: dict | None = None):
        """Noise prediction eps_hat for points x (n, dim) at times t (scalar or (n,))."""
        x = _as_batch(x, self.dim)
        n = x.shape[0]
        emb = self._embed_time(t, n)
        h = (x @ self.p["w_in"] + self.p["b_in"]
             + emb @ self.p["w_t"] + self.p["b_t"])
        if cache is not None:
            cache["x"], cache["emb"] = x, emb
            cache["blocks"] = []
        for k in range(self.depth):
            mu = h.mean(axis=1, keepdims=True)
            var = h.var(axis=1, keepdims=True)
            inv_std = 1.0 / np.sqrt(var + _LN_EPS)
            hhat = (h - mu) * inv_std
            u = hhat * self.p[f"ln_g{k}"] + self.p[f"ln_b{k}"]
            a = u @ self.p[f"w{k}"] + self.p[f"b{k}"]
            if cache is not None:
                cache["blocks"].append((hhat, inv_std, u, a))
            h = h + gelu(a)
        if cache is not None:
            cache["h_last"] = h
        return h @ self.p["w_out"] + self.p["b_out"]

    def loss_and_grads(self, x, t, eps):
        """Mean squared noise-prediction error and its parameter gradient.

        loss = mean_i || eps_hat(x_i, t_i) - eps_i ||^2, which equals the
        sigma^2-weighted denoising score-matching objective.
        """
        eps = _as_batch(eps, self.dim)
        cache: dict = {}
        out = self.forward(x, t, cache)
        n = out.shape[0]
        resid = out - eps
        loss = float(np.sum(resid ** 2) / n)

        grads = np.zeros_like(self.params)
        g = {}
        offset = 0
        for name, shape in self._layout:
            size = int(np.prod(shape))
            g[name] = grads[offset:offset + size].reshape(shape)
            offset += size

        d_out = 2.0 * resid / n
        g["w_out"][:] = cache["h_last"].T @ d_out
        g["b_out"][:] = d_out.sum(axis=0)
        dh = d_out @ self.p["w_out"].T

        for k in reversed(range(self.depth)):
            hhat, inv_std, u, a = cache["blocks"][k]
            da = dh * gelu_grad(a)
            g[f"w{k}"][:] = u.T @ da
            g[f"b{k}"][:] = da.sum(axis=0)
            du = da @ self.p[f"w{k}"].T
            g[f"ln_g{k}"][:] = (du * hhat).sum(axis=0)
            g[f"ln_b{k}"][:] = du.sum(axis=0)
            dhhat = du * self.p[f"ln_g{k}"]
            m1 = dhhat.mean(axis=1, keepdims=True)
            m2 = (dhhat * hhat).mean(axis=1, keepdims=True)
            dh_ln = inv_std * (dhhat - m1 - hhat * m2)
            dh = dh + dh_ln

        g["w_in"][:] = cache["x"].T @ dh
        g["b_in"][:] = dh.sum(axis=0)
        g["w_t"][:] = cache["emb"].T @ dh
        g["b_t"][:] = dh.sum(axis=0)
        return loss, grads

    # -- serialisation ----------------------------------------------------

    def save(self, path, family_tag: str = "") -> None:
        """Flat binary: magic, sizes, fourier scale/seed, schedule-family hash,
        then the frequency vector and the parameter vector."""
        header = struct.pack(
            "<4siiiidq8s", _MAGIC, self.dim, self.width, self.depth,
            self.embed, self.fourier_scale, self.seed, _family_hash(family_tag),
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.fourier_freqs.astype("<f8").tobytes())
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path, family_tag: str | None = None) -> "ScoreNetwork":
        with open(path, "rb") as fh:
            header = fh.read(struct.calcsize("<4siiiidq8s"))
            magic, dim, width, depth, embed, fscale, seed, fhash = struct.unpack(
                "<4siiiidq8s", header)
            if magic != _MAGIC:
                raise ValueError(f"not a score-network file: {path}")
            if family_tag is not None and fhash != _family_hash(family_tag):
                raise ValueError(
                    f"checkpoint was trained under a different noise schedule "
                    f"(hash mismatch for {family_tag!r})"
                )
            net = cls(dim=dim, width=width, depth=depth, embed=embed,
                      fourier_scale=fscale, seed=seed)
            freqs = np.frombuffer(fh.read(8 * (embed // 2)), dtype="<f8")
            params = np.frombuffer(fh.read(8 * net.n_params), dtype="<f8")
        net.fourier_freqs = freqs.copy()
        net.set_params(params)
        return net


def _family_hash(tag: str) -> bytes:
    return hashlib.sha256(tag.encode()).digest()[:8]


class AdamState:
    """First/second moment accumulators for adam_step."""

    def __init__(self, n_params: int, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.step = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(net: ScoreNetwork, grads, state: AdamState, lr: float):
    """One adaptive-moment update, in place on net.params."""
    grads = np.asarray(grads, dtype=float)
    if grads.shape != net.params.shape:
        raise ValueError(f"grads shape {grads.shape} != params {net.params.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads ** 2
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    net.params[:] = net.params - lr * mhat / (np.sqrt(vhat) + state.eps)
    return net, state


# -- denoising score matching ---------------------------------------------

def dsm_draw(batch, nsched: NoiseSchedule, times, rng):
    """Shared draw for the DSM objective: (x_t, t_eff, eps).

    t is uniform over the entries of `times` (floored at t_min), eps is
    standard normal, and x_t = s(t) x0 + sigma(t) eps.
    """
    x0 = np.atleast_2d(np.asarray(batch, dtype=float))
    n = x0.shape[0]
    times = np.asarray(times, dtype=float)
    idx = rng.integers(0, times.size, size=n)
    t_eff = np.maximum(times[idx], nsched.t_min)
    eps = rng.standard_normal(x0.shape)
    s, sig = nsched.kernel_params(t_eff)
    x_t = s[:, None] * x0 + sig[:, None] * eps
    return x_t, t_eff, eps


def dsm_loss(net: ScoreNetwork, batch, sched: NoiseSchedule, times, seed):
    """Weighted DSM loss and exact parameter gradients.

    With weighting lambda(t) = sigma(t)^2 the per-sample objective
    sigma^2 ||s_theta(x_t, t) + eps/sigma||^2 collapses to ||eps_hat - eps||^2.
    """
    if np.ndim(batch) == 0 or len(batch) == 0:
        raise ValueError("batch must be non-empty")
    rng = np.random.default_rng(seed)
    x_t, t_eff, eps = dsm_draw(batch, sched, times, rng)
    return net.loss_and_grads(x_t, t_eff, eps)


def dsm_loss_value(score_fn, batch, sched: NoiseSchedule, times, seed) -> float:
    """DSM loss of an arbitrary score function under the same draw as dsm_loss.

    score_fn(x, t_vector) -> (n, d).  Used to compare a learned network
    against the exact posterior score (the Bayes-optimal value).
    """
    rng = np.random.default_rng(seed)
    x_t, t_eff, eps = dsm_draw(batch, sched, times, rng)
    _, sig = sched.kernel_params(t_eff)
    resid = sig[:, None] * score_fn(x_t, t_eff) + eps
    return float(np.mean(np.sum(resid ** 2, axis=1)))
