"""Adaptive schedule training.

Each iteration takes one or more DSM gradient steps at the current
discretisation, estimates the cost profile on the same batch with the
updated network, and relaxes the grid toward the equalising schedule:
t_i <- gamma * t_i_target + (1 - gamma) * t_i.  gamma = 0 freezes the grid
and skips profiling (the controlled baseline).  The Adam step size follows
a cosine decay to zero by default so late checkpoints settle instead of
bouncing with the batch noise.

Per-iteration randomness derives from (random_state, iteration) only, so a
resumed run continues bit-exactly where an unbroken one would be.
"""

from __future__ import annotations

import csv
import os
import struct

import numpy as np
from sklearn.base import BaseEstimator

from .costs import profile
from .metrics import evaluate
from .samplers import SamplerConfig, sample_path
from .schedule_opt import FlatPathError, mix_schedules, update_schedule
from .schedules import DiscretisationSchedule, VPLinearSchedule, uniform_grid
from .scorenet import AdamState, ScoreNetwork, adam_step, dsm_loss
from .sources import LearnedScore
from .targets import DiffusedGmm

OPTSTATE_MAGIC = b"ADM1"
HISTORY_COLUMNS = ("iteration", "dsm_loss", "length", "energy",
                   "rel_std_sqrt", "mean_log_likelihood", "score_mse",
                   "modes_detected", "w1")


def save_optimizer_state(path, state: AdamState) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sq3dq", OPTSTATE_MAGIC, state.step,
                             state.beta1, state.beta2, state.eps,
                             state.m.size))
        fh.write(state.m.astype("<f8").tobytes())
        fh.write(state.v.astype("<f8").tobytes())


def load_optimizer_state(path, n_params: int) -> AdamState:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<4sq3dq"))
        magic, step, b1, b2, eps, n = struct.unpack("<4sq3dq", head)
        if magic != OPTSTATE_MAGIC:
            raise ValueError(f"not an optimizer-state file: {path}")
        if n != n_params:
            raise ValueError(f"optimizer state holds {n} parameters, "
                             f"network has {n_params}")
        state = AdamState(n, beta1=b1, beta2=b2, eps=eps)
        state.step = step
        state.m = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        state.v = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
    return state


class TrainRun:
    """Mutable state of one training run plus its checkpoint history."""

    def __init__(self, net: ScoreNetwork, disc: DiscretisationSchedule,
                 gamma: float, batch: int, nsched):
        self.net = net
        self.disc = disc
        self.gamma = gamma
        self.batch = batch
        self.nsched = nsched
        self.iteration = 0
        self.history = []

    def log_diagnostics(self, iteration: int, loss: float, prof=None,
                        extra: dict | None = None) -> dict:
        """Append a checkpoint record (length, energy, loss, schedule)."""
        if self.history and iteration <= self.history[-1]["iteration"]:
            raise ValueError("history iterations must strictly increase")
        record = {"iteration": int(iteration), "dsm_loss": float(loss),
                  "schedule": self.disc.times.copy()}
        if prof is not None:
            record["length"] = prof.length
            record["energy"] = prof.energy
            record["rel_std_sqrt"] = prof.rel_std_sqrt
        if extra:
            record.update(extra)
        self.history.append(record)
        return record

    def history_to_csv(self, path) -> None:
        """Scalar history columns; schedule snapshots live in their own files."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for rec in self.history:
                row = []
                for key in HISTORY_COLUMNS:
                    if key not in rec:
                        row.append("")
                    elif key in ("iteration", "modes_detected"):
                        row.append(str(int(rec[key])))
                    else:
                        row.append(f"{rec[key]:.17g}")
                writer.writerow(row)


def load_history(path) -> list:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for key, val in row.items():
                if val == "" or key not in HISTORY_COLUMNS:
                    continue
                rec[key] = int(val) if key in ("iteration", "modes_detected") \
                    else float(val)
            records.append(rec)
    return records


def write_checkpoint(dirpath, run: TrainRun, adam: AdamState) -> None:
    os.makedirs(dirpath, exist_ok=True)
    run.net.save(os.path.join(dirpath, "params.bin"),
                 family_tag=run.nsched.family_tag())
    save_optimizer_state(os.path.join(dirpath, "optstate.bin"), adam)
    run.disc.to_csv(os.path.join(dirpath, "schedule.csv"))
    run.history_to_csv(os.path.join(dirpath, "history.csv"))
    with open(os.path.join(dirpath, "state.txt"), "w") as fh:
        fh.write(f"iteration = {run.iteration}\n")
        fh.write(f"gamma = {run.gamma:.17g}\n")
        fh.write(f"batch = {run.batch}\n")


def _read_state(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


class AdaptiveTrainer(BaseEstimator):
    """Train a score network while adapting its discretisation schedule.

    fit(X) draws batches from X when given, otherwise from `target`.
    Fitted attributes: net_, schedule_, run_, history_, n_iter_, nsched_.
    """

    def __init__(self, target=None, nsched=None, T: int = 32,
                 gamma: float = 0.1, iters: int = 5000, batch: int = 64,
                 lr: float = 1e-3, lr_decay: str = "cosine",
                 dsm_steps: int = 1,
                 estimator: str = "corrector", n_probes: int = 5,
                 width: int = 128, depth: int = 5, embed: int = 12,
                 fourier_scale: float = 16.0, checkpoint_every: int = 500,
                 eval_n: int = 0, sampler_kind: str = "ode_euler",
                 random_state: int = 0):
        self.target = target
        self.nsched = nsched
        self.T = T
        self.gamma = gamma
        self.iters = iters
        self.batch = batch
        self.lr = lr
        self.lr_decay = lr_decay
        self.dsm_steps = dsm_steps
        self.estimator = estimator
        self.n_probes = n_probes
        self.width = width
        self.depth = depth
        self.embed = embed
        self.fourier_scale = fourier_scale
        self.checkpoint_every = checkpoint_every
        self.eval_n = eval_n
        self.sampler_kind = sampler_kind
        self.random_state = random_state

    def _lr_at(self, it: int) -> float:
        """Step size for iteration `it` (1-based); a pure function of the
        constructor arguments so resumed runs retrace the same trajectory."""
        if self.lr_decay == "none":
            return self.lr
        if self.lr_decay == "cosine":
            return self.lr * 0.5 * (1.0 + np.cos(np.pi * (it - 1) / self.iters))
        raise ValueError(f"unknown lr_decay {self.lr_decay!r}; "
                         "expected 'cosine' or 'none'")

    def fit(self, X=None, y=None, init_schedule: DiscretisationSchedule | None = None,
            out_dir=None, resume=None):
        if self.gamma < 0 or self.gamma > 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.dsm_steps < 1:
            raise ValueError("need at least one DSM step per iteration")
        self._lr_at(1)  # validate lr_decay before any work
        nsched = self.nsched if self.nsched is not None else VPLinearSchedule()
        if X is not None:
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            dim = X.shape[1]
        elif self.target is not None:
            dim = self.target.dim
        else:
            raise ValueError("need training data X or a target distribution")

        if resume is not None:
            net = ScoreNetwork.load(os.path.join(resume, "params.bin"),
                                    family_tag=nsched.family_tag())
            adam = load_optimizer_state(os.path.join(resume, "optstate.bin"),
                                        net.n_params)
            disc = DiscretisationSchedule.from_csv(
                os.path.join(resume, "schedule.csv"))
            start = int(_read_state(os.path.join(resume, "state.txt"))["iteration"])
            history = load_history(os.path.join(resume, "history.csv"))
        else:
            net = ScoreNetwork(dim=dim, width=self.width, depth=self.depth,
                               embed=self.embed, fourier_scale=self.fourier_scale,
                               seed=self.random_state)
            adam = AdamState(net.n_params)
            disc = init_schedule if init_schedule is not None \
                else uniform_grid(self.T, nsched.t_min)
            start = 0
            history = []

        run = TrainRun(net, disc, self.gamma, self.batch, nsched)
        run.history = history
        run.iteration = start
        learned = LearnedScore(net, nsched)
        eval_target = DiffusedGmm(self.target, nsched) \
            if (self.eval_n > 0 and self.target is not None) else None

        for it in range(start + 1, self.iters + 1):
            keys = np.random.SeedSequence([self.random_state, it]) \
                .generate_state(3 + self.dsm_steps, dtype=np.uint64)
            rng = np.random.default_rng(int(keys[0]))
            if X is not None:
                batch = X[rng.integers(0, X.shape[0], self.batch)]
            else:
                batch = self.target.sample(self.batch, rng)

            loss = np.inf
            for k in range(self.dsm_steps):
                loss, grads = dsm_loss(net, batch, nsched, run.disc.times,
                                       int(keys[3 + k]))
                if not np.isfinite(loss):
                    run.iteration = it
                    if out_dir is not None:
                        write_checkpoint(
                            os.path.join(out_dir, "checkpoints",
                                         f"diag-nan-{it:07d}"), run, adam)
                    raise FloatingPointError(
                        f"non-finite DSM loss at iteration {it}")
                adam_step(net, grads, adam, self._lr_at(it))

            prof = None
            if self.gamma > 0:
                prof = profile(learned, nsched, run.disc,
                               estimator=self.estimator, seed=int(keys[1]),
                               data=batch, n_probes=self.n_probes)
                try:
                    run.disc = mix_schedules(run.disc,
                                             update_schedule(run.disc, prof.costs),
                                             self.gamma)
                except FlatPathError:
                    pass  # all-zero profile: leave the grid where it is
            run.iteration = it

            if it == 1 or it % self.checkpoint_every == 0 or it == self.iters:
                if prof is None:
                    prof = profile(learned, nsched, run.disc,
                                   estimator=self.estimator, seed=int(keys[1]),
                                   data=batch, n_probes=self.n_probes)
                extra = None
                if eval_target is not None:
                    extra = self._eval_metrics(learned, run, eval_target,
                                               int(keys[2]))
                run.log_diagnostics(it, loss, prof, extra)
                if out_dir is not None:
                    write_checkpoint(os.path.join(out_dir, "checkpoints",
                                                  f"it{it:07d}"), run, adam)

        self.run_ = run
        self.net_ = net
        self.schedule_ = run.disc
        self.history_ = run.history
        self.n_iter_ = run.iteration
        self.nsched_ = nsched
        return self

    def _eval_metrics(self, learned, run, eval_target, seed: int) -> dict:
        cfg = SamplerConfig(self.sampler_kind, run.disc, seed=seed)
        samples = sample_path(cfg, learned, run.nsched, self.eval_n)
        rep = evaluate(samples, eval_target, src=learned,
                       seed=self.random_state)
        return {"mean_log_likelihood": rep.mean_log_likelihood,
                "score_mse": rep.score_mse,
                "modes_detected": rep.modes_detected,
                "w1": rep.w1}
