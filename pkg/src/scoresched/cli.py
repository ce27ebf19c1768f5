"""Command-line experiment runner.

Subcommands: optimize, train, sample, eval, sweep.  Every command writes a
resolved-config copy (with the toolkit version) into --out, and identical
resolved configs reproduce byte-identical CSVs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import (ConfigError, build_grid, build_noise_schedule,
                     build_target, resolve_config, write_config)
from .costs import profile as estimate_profile
from .metrics import evaluate, wasserstein1
from .samplers import SAMPLER_KINDS, SamplerConfig, sample_path
from .schedule_opt import ScheduleOptimizer
from .schedules import uniform_grid
from .scorenet import ScoreNetwork
from .sources import LearnedScore, OracleScore
from .svgplot import line_plot
from .targets import DiffusedGmm
from .training import AdaptiveTrainer

FMT = "%.17g"


def _write_samples_csv(path, samples) -> None:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    with open(path, "w") as fh:
        fh.write(",".join(f"x{j}" for j in range(samples.shape[1])) + "\n")
        for row in samples:
            fh.write(",".join(FMT % v for v in row) + "\n")


def _read_samples_csv(path) -> np.ndarray:
    if not os.path.exists(path):
        raise ConfigError(f"sample file not found: {path}")
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _score_source(cfg, section: str, target, nsched):
    """oracle | checkpoint score source for a command section."""
    kind = cfg[section]["source"]
    oracle = OracleScore(DiffusedGmm(target, nsched))
    if kind == "oracle":
        return oracle, oracle
    if kind == "checkpoint":
        path = cfg[section]["checkpoint"]
        if not path:
            raise ConfigError(f"{section}.source = checkpoint needs "
                              f"{section}.checkpoint")
        if not os.path.exists(path):
            raise ConfigError(f"checkpoint not found: {path}")
        net = ScoreNetwork.load(path, family_tag=nsched.family_tag())
        return LearnedScore(net, nsched), oracle
    raise ConfigError(f"unknown {section}.source {kind!r}")


def cmd_optimize(cfg, out) -> int:
    nsched = build_noise_schedule(cfg)
    target = build_target(cfg, nsched)
    grid = build_grid(cfg, nsched)
    src, _ = _score_source(cfg, "optimize", target, nsched)
    opt_cfg = cfg["optimize"]
    seed = cfg["run"]["seed"]

    data = None
    if not src.is_oracle:
        rng = np.random.default_rng([seed, 2])
        data = target.sample(opt_cfg["n_samples"], rng)

    opt = ScheduleOptimizer(T=grid.T, estimator=opt_cfg["estimator"],
                            n_samples=opt_cfg["n_samples"],
                            tol=opt_cfg["tol"], max_iter=opt_cfg["max_iter"],
                            n_probes=opt_cfg["n_probes"], random_state=seed)
    opt.fit(src, init_schedule=grid, data=data)

    opt.schedule_.to_csv(os.path.join(out, "schedule.csv"))
    opt.profile_.to_csv(os.path.join(out, "profile.csv"))
    with open(os.path.join(out, "convergence.csv"), "w") as fh:
        fh.write("iteration,length,energy,max_move\n")
        for rec in opt.history_:
            fh.write(f"{rec['iteration']},{FMT % rec['length']},"
                     f"{FMT % rec['energy']},{FMT % rec['max_move']}\n")

    if not opt.flat_path_:
        init_prof = estimate_profile(src, nsched, grid,
                                     estimator=opt_cfg["estimator"],
                                     n_samples=opt_cfg["n_samples"],
                                     seed=seed, data=data,
                                     n_probes=opt_cfg["n_probes"])
        line_plot(os.path.join(out, "sqrt_costs.svg"),
                  [(grid.times[:-1], init_prof.sqrt_costs, "initial"),
                   (opt.schedule_.times[:-1], opt.profile_.sqrt_costs,
                    "optimized")],
                  title="per-interval sqrt cost", xlabel="t_i",
                  ylabel="sqrt(L_i)")

    if opt.flat_path_:
        print("flat path: all incremental costs are zero; "
              "schedule left unchanged")
        return 0
    if not opt.converged_:
        print(f"did not converge within {opt_cfg['max_iter']} iterations "
              f"(last max_move = {opt.history_[-1]['max_move']:.3g})",
              file=sys.stderr)
        return 3
    print(f"converged in {opt.n_iter_} iterations: "
          f"length = {opt.profile_.length:.6g}, "
          f"energy/length^2 = {opt.profile_.energy / opt.profile_.length ** 2:.6g}")
    return 0


def cmd_train(cfg, out) -> int:
    nsched = build_noise_schedule(cfg)
    target = build_target(cfg, nsched)
    grid = build_grid(cfg, nsched)
    tr = cfg["train"]
    trainer = AdaptiveTrainer(
        target=target, nsched=nsched, T=grid.T, gamma=tr["gamma"],
        iters=tr["iters"], batch=tr["batch"], lr=tr["lr"],
        lr_decay=tr["lr_decay"],
        dsm_steps=tr["dsm_steps"], estimator=tr["estimator"],
        n_probes=tr["n_probes"], width=tr["width"], depth=tr["depth"],
        embed=tr["embed"], fourier_scale=tr["fourier_scale"],
        checkpoint_every=tr["checkpoint_every"], eval_n=tr["eval_n"],
        sampler_kind=tr["sampler"], random_state=cfg["run"]["seed"])
    trainer.fit(init_schedule=grid, out_dir=out,
                resume=tr["resume"] or None)

    run = trainer.run_
    run.disc.to_csv(os.path.join(out, "schedule.csv"))
    run.history_to_csv(os.path.join(out, "history.csv"))

    its = [rec["iteration"] for rec in run.history]
    line_plot(os.path.join(out, "history.svg"),
              [(its, [rec.get("length", np.nan) for rec in run.history],
                "length"),
               (its, [np.sqrt(rec.get("energy", np.nan))
                      for rec in run.history], "sqrt(energy)")],
              title="traversal cost over training", xlabel="iteration")
    snaps = [rec for rec in run.history if "schedule" in rec]
    if snaps:
        xs = [rec["iteration"] for rec in snaps]
        curves = [(xs, [rec["schedule"][i] for rec in snaps], "")
                  for i in range(run.disc.T + 1)]
        line_plot(os.path.join(out, "schedule_progression.svg"), curves,
                  title="schedule progression", xlabel="iteration",
                  ylabel="t_i")
    print(f"trained {run.iteration} iterations; final DSM loss = "
          f"{run.history[-1]['dsm_loss']:.6g}")
    return 0


def cmd_sample(cfg, out) -> int:
    nsched = build_noise_schedule(cfg)
    target = build_target(cfg, nsched)
    grid = build_grid(cfg, nsched)
    src, _ = _score_source(cfg, "sample", target, nsched)
    smp = cfg["sample"]
    sampler = SamplerConfig(smp["kind"], grid, seed=cfg["run"]["seed"],
                            n_inner=smp["n_inner"],
                            step_scale=smp["step_scale"])
    samples = sample_path(sampler, src, nsched, smp["n"])
    _write_samples_csv(os.path.join(out, "samples.csv"), samples)
    print(f"wrote {smp['n']} samples ({smp['kind']}, T = {grid.T})")
    return 0


def _eval_one(out, label, samples, target, src, seed) -> dict:
    rep = evaluate(samples, target, src=src, seed=seed)
    rep.to_csv(os.path.join(out, f"report-{label}.csv"))
    with open(os.path.join(out, f"report-{label}.txt"), "w") as fh:
        fh.write(rep.to_keyvalues())
    rep.density_to_csv(os.path.join(out, f"density-{label}.csv"))
    print(f"{label}: {rep!r}")
    return {"label": label, "report": rep}


def cmd_eval(cfg, out) -> int:
    nsched = build_noise_schedule(cfg)
    target = build_target(cfg, nsched)
    diffused = DiffusedGmm(target, nsched)
    oracle = OracleScore(diffused)
    seed = cfg["run"]["seed"]
    ev = cfg["eval"]
    results = []

    if ev["samples"]:
        paths = [p.strip() for p in ev["samples"].split(",") if p.strip()]
        labels = [s.strip() for s in ev["labels"].split(",") if s.strip()] \
            if ev["labels"] else []
        if labels and len(labels) != len(paths):
            raise ConfigError("eval.labels must match eval.samples in length")
        if not labels:
            labels = [f"set{k}" for k in range(len(paths))]
        for label, path in zip(labels, paths):
            results.append(_eval_one(out, label, _read_samples_csv(path),
                                     diffused, oracle, seed))
    elif ev["generate"]:
        # linear baseline at linear_T versus optimised grid at optimized_T
        opt_cfg = cfg["optimize"]
        opt = ScheduleOptimizer(T=ev["optimized_T"],
                                estimator=opt_cfg["estimator"],
                                n_samples=opt_cfg["n_samples"],
                                tol=opt_cfg["tol"],
                                max_iter=opt_cfg["max_iter"],
                                random_state=seed).fit(oracle)
        opt.schedule_.to_csv(os.path.join(out, "schedule-optimized.csv"))
        grids = [("linear", uniform_grid(ev["linear_T"], nsched.t_min)),
                 ("optimized", opt.schedule_)]
        for label, grid in grids:
            sampler = SamplerConfig(ev["sampler"], grid, seed=seed)
            samples = sample_path(sampler, oracle, nsched, ev["n"])
            _write_samples_csv(os.path.join(out, f"samples-{label}.csv"),
                               samples)
            results.append(_eval_one(out, label, samples, diffused, oracle,
                                     seed))
    else:
        raise ConfigError("eval needs eval.samples files or "
                          "eval.generate = true")

    line_plot(os.path.join(out, "densities.svg"),
              [(r["report"].density[0], r["report"].density[1], r["label"])
               for r in results],
              title="sample densities", xlabel="x", ylabel="density")
    return 0


def cmd_sweep(cfg, out) -> int:
    nsched = build_noise_schedule(cfg)
    target = build_target(cfg, nsched)
    diffused = DiffusedGmm(target, nsched)
    oracle = OracleScore(diffused)
    sw = cfg["sweep"]
    seed = cfg["run"]["seed"]
    Ts = [int(v) for v in sw["Ts"].split(",")]

    reference = diffused.sample(sw["n"], nsched.t_min,
                                np.random.default_rng([seed, 1]))
    rows = []
    for T in Ts:
        uniform = uniform_grid(T, nsched.t_min)
        opt = ScheduleOptimizer(T=T, estimator=sw["estimator"],
                                n_samples=sw["n_samples"],
                                random_state=seed).fit(oracle)
        w1s = {}
        for label, grid in (("uniform", uniform), ("optimized", opt.schedule_)):
            sampler = SamplerConfig(sw["sampler"], grid, seed=seed)
            samples = sample_path(sampler, oracle, nsched, sw["n"])
            w1s[label] = wasserstein1(samples, reference)
        rows.append((T, w1s["optimized"], w1s["uniform"]))
        print(f"T = {T}: w1 optimized = {w1s['optimized']:.5g}, "
              f"uniform = {w1s['uniform']:.5g}")

    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write("T,w1_optimized,w1_uniform\n")
        for T, wo, wu in rows:
            fh.write(f"{T},{FMT % wo},{FMT % wu}\n")
    line_plot(os.path.join(out, "sweep.svg"),
              [([r[0] for r in rows], [r[1] for r in rows], "optimized"),
               ([r[0] for r in rows], [r[2] for r in rows], "uniform")],
              title="terminal W1 vs grid size", xlabel="T", ylabel="W1",
              logy=True)
    return 0


COMMANDS = {
    "optimize": (cmd_optimize, "iterate cost profiling and schedule updates"),
    "train": (cmd_train, "adaptive schedule training of a score network"),
    "sample": (cmd_sample, "generate samples over a schedule"),
    "eval": (cmd_eval, "evaluate sample sets against the analytic target"),
    "sweep": (cmd_sweep, "compare schedules across grid sizes"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scoresched",
        description="score-based discretisation schedule toolkit")
    parser.add_argument("--version", action="version",
                        version=f"scoresched {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--preset", default=None,
                       help="bimodal | cantor | gaussian-geodesic | t-sweep")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    try:
        cfg = resolve_config(preset=args.preset, path=args.config,
                             seed=args.seed)
        if cfg["sample"]["kind"] not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {cfg['sample']['kind']!r}")
        os.makedirs(args.out, exist_ok=True)
        write_config(os.path.join(args.out, "resolved-config.ini"), cfg)
        return COMMANDS[args.command][0](cfg, args.out)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
