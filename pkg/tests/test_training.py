"""Adaptive trainer: determinism, resume, checkpoint plumbing, learning."""

import os

import numpy as np
import pytest
from sklearn.base import clone

from scoresched import AdaptiveTrainer, LearnedScore, ScoreNetwork
from scoresched.schedules import uniform_grid
from scoresched.scorenet import AdamState
from scoresched.training import (TrainRun, load_history, load_optimizer_state,
                                 save_optimizer_state)

SMALL = dict(T=8, gamma=0.1, batch=16, width=16, depth=2, embed=4,
             n_probes=3, random_state=5)


def small_trainer(base, vp, **kw):
    args = dict(SMALL, target=base, nsched=vp)
    args.update(kw)
    return AdaptiveTrainer(**args)


def test_gamma_zero_freezes_schedule(vp, bimodal):
    tr = small_trainer(bimodal.base, vp, gamma=0.0, iters=6,
                       checkpoint_every=3)
    tr.fit()
    assert np.array_equal(tr.schedule_.times, uniform_grid(8, vp.t_min).times)


def test_same_seed_runs_identical(vp, bimodal):
    a = small_trainer(bimodal.base, vp, iters=8, checkpoint_every=4).fit()
    b = small_trainer(bimodal.base, vp, iters=8, checkpoint_every=4).fit()
    assert np.array_equal(a.net_.params, b.net_.params)
    assert np.array_equal(a.schedule_.times, b.schedule_.times)
    assert [r["dsm_loss"] for r in a.history_] == \
        [r["dsm_loss"] for r in b.history_]


def test_resume_matches_unbroken_run(tmp_path, vp, bimodal):
    # resume must use the same iteration horizon so the decayed step sizes
    # line up; restarting from a mid-run checkpoint retraces the trajectory
    full_dir = tmp_path / "full"
    full = small_trainer(bimodal.base, vp, iters=24, checkpoint_every=8) \
        .fit(out_dir=full_dir)
    resumed = small_trainer(bimodal.base, vp, iters=24, checkpoint_every=8) \
        .fit(resume=full_dir / "checkpoints" / "it0000016")

    assert np.array_equal(full.net_.params, resumed.net_.params)
    assert np.array_equal(full.schedule_.times, resumed.schedule_.times)
    # numbering continues across the restart instead of starting over
    assert [r["iteration"] for r in resumed.history_] == [1, 8, 16, 24]
    by_it = {r["iteration"]: r for r in resumed.history_}
    for rec in full.history_:
        if rec["iteration"] in (16, 24):
            twin = by_it[rec["iteration"]]
            assert twin["dsm_loss"] == rec["dsm_loss"]
            assert twin["length"] == rec["length"]
            assert twin["energy"] == rec["energy"]


def test_history_energy_dominates_squared_length(vp, bimodal):
    tr = small_trainer(bimodal.base, vp, iters=8, checkpoint_every=2).fit()
    assert len(tr.history_) == 5
    for rec in tr.history_:
        assert rec["energy"] >= rec["length"] ** 2 * (1.0 - 1e-12)
        assert rec["rel_std_sqrt"] >= 0.0


def test_trained_schedule_is_valid_grid(vp, bimodal):
    tr = small_trainer(bimodal.base, vp, iters=10, checkpoint_every=10).fit()
    times = tr.schedule_.times
    assert times.size == 9
    assert np.all(np.diff(times) > 0)
    assert times[0] == pytest.approx(vp.t_min, rel=1e-9)
    assert times[-1] == pytest.approx(1.0, rel=1e-12)


def test_checkpoint_records_and_eval_metrics(tmp_path, vp, bimodal):
    tr = small_trainer(bimodal.base, vp, iters=4, checkpoint_every=100,
                       eval_n=64).fit(out_dir=tmp_path)
    assert [r["iteration"] for r in tr.history_] == [1, 4]
    for rec in tr.history_:
        for key in ("mean_log_likelihood", "score_mse", "modes_detected",
                    "w1"):
            assert key in rec
    ckpt = tmp_path / "checkpoints" / "it0000004"
    for name in ("params.bin", "optstate.bin", "schedule.csv", "history.csv",
                 "state.txt"):
        assert (ckpt / name).exists()
    loaded = load_history(ckpt / "history.csv")
    assert [r["iteration"] for r in loaded] == [1, 4]
    assert loaded[-1]["dsm_loss"] == tr.history_[-1]["dsm_loss"]
    assert loaded[-1]["w1"] == tr.history_[-1]["w1"]


def test_nan_params_abort_with_diagnostic_checkpoint(tmp_path, vp, bimodal):
    seed_dir = tmp_path / "seed"
    small_trainer(bimodal.base, vp, iters=2, checkpoint_every=2) \
        .fit(out_dir=seed_dir)
    ckpt = seed_dir / "checkpoints" / "it0000002"
    net = ScoreNetwork.load(ckpt / "params.bin", family_tag=vp.family_tag())
    net.set_params(np.full(net.n_params, np.nan))
    net.save(ckpt / "params.bin", family_tag=vp.family_tag())

    out = tmp_path / "resumed"
    tr = small_trainer(bimodal.base, vp, iters=4, checkpoint_every=2)
    with pytest.raises(FloatingPointError, match="non-finite"):
        tr.fit(resume=ckpt, out_dir=out)
    assert (out / "checkpoints" / "diag-nan-0000003").is_dir()


def test_parameter_validation(vp, bimodal):
    with pytest.raises(ValueError, match="gamma"):
        small_trainer(bimodal.base, vp, gamma=-0.1, iters=1).fit()
    with pytest.raises(ValueError, match="gamma"):
        small_trainer(bimodal.base, vp, gamma=1.5, iters=1).fit()
    with pytest.raises(ValueError, match="DSM step"):
        small_trainer(bimodal.base, vp, dsm_steps=0, iters=1).fit()
    with pytest.raises(ValueError, match="training data"):
        AdaptiveTrainer(nsched=vp, iters=1).fit()
    with pytest.raises(ValueError, match="lr_decay"):
        small_trainer(bimodal.base, vp, lr_decay="step", iters=1).fit()


def test_lr_decay_schedule_shape(vp, bimodal):
    tr = small_trainer(bimodal.base, vp, iters=100, lr=2e-3)
    assert tr._lr_at(1) == 2e-3                      # full rate at the start
    assert tr._lr_at(51) == pytest.approx(1e-3)      # half way -> half rate
    assert tr._lr_at(101) == pytest.approx(0.0, abs=1e-18)
    flat = small_trainer(bimodal.base, vp, iters=100, lr=2e-3,
                         lr_decay="none")
    assert {flat._lr_at(i) for i in (1, 50, 100)} == {2e-3}


def test_fit_on_raw_sample_array(vp, bimodal):
    X = bimodal.base.sample(512, np.random.default_rng(0))
    tr = small_trainer(None, vp, iters=3, checkpoint_every=10)
    tr.fit(X)
    assert tr.n_iter_ == 3
    assert np.all(np.isfinite(tr.net_.params))


def test_history_iterations_must_increase(vp):
    run = TrainRun(None, uniform_grid(4, vp.t_min), 0.0, 8, vp)
    run.log_diagnostics(1, 0.5)
    with pytest.raises(ValueError, match="strictly increase"):
        run.log_diagnostics(1, 0.4)


def test_optimizer_state_file_validation(tmp_path):
    state = AdamState(6)
    state.step = 3
    state.m[:] = np.arange(6.0)
    state.v[:] = np.arange(6.0) ** 2
    path = tmp_path / "optstate.bin"
    save_optimizer_state(path, state)
    back = load_optimizer_state(path, 6)
    assert back.step == 3
    assert np.array_equal(back.m, state.m)
    assert np.array_equal(back.v, state.v)
    with pytest.raises(ValueError, match="parameters"):
        load_optimizer_state(path, 7)
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"XXXX" + bytes(64))
    with pytest.raises(ValueError, match="optimizer-state"):
        load_optimizer_state(junk, 6)


def test_sklearn_param_protocol(vp, bimodal):
    tr = small_trainer(bimodal.base, vp, iters=7)
    params = tr.get_params()
    assert params["T"] == 8 and params["gamma"] == 0.1 and params["iters"] == 7
    twin = clone(tr)
    assert twin.get_params()["iters"] == 7
    assert not hasattr(twin, "net_")


def _sign_agreement(learned, dgm, t, seed, n=512):
    """Fraction of probes where the learned score points the right way.

    Probes come from p_t itself, excluding a half-std band around each
    component mean where the true score changes sign.
    """
    rng = np.random.default_rng(seed)
    x = dgm.sample(n, t, rng)
    means, variances = dgm.params_at(t)
    dist = np.abs(x - means.ravel()[None, :])
    keep = dist.min(axis=1) > 0.5 * np.sqrt(variances.min())
    xk = x[keep]
    return float(np.mean(np.sign(learned.score(xk, t))
                         == np.sign(dgm.score(xk, t))))


def test_training_learns_score_direction(vp, bimodal):
    tr = AdaptiveTrainer(target=bimodal.base, nsched=vp, T=24, gamma=0.0,
                         iters=2000, batch=48, checkpoint_every=2000,
                         random_state=0)
    tr.fit()
    learned = LearnedScore(tr.net_, vp)
    for t in (0.1, 0.3):
        assert _sign_agreement(learned, bimodal, t, seed=13) >= 0.95
