"""Schedule reparametrisation: monotone interpolation, the equidistribution
update, length/energy bookkeeping, and the fitted optimizer.

The interpolation oracle below is an independent monotone-cubic evaluator
(harmonic-mean interior slopes, shape-limited three-point edge slopes) so
the implementation and its check never share code.
"""

import numpy as np
import pytest

from scoresched import (
    DiscretisationSchedule,
    FlatPathError,
    MonotoneInterpolant,
    ScheduleOptimizer,
    length_energy,
    mix_schedules,
    update_schedule,
    uniform_grid,
)


def reference_monotone_cubic(u, y, q):
    """Fritsch-Carlson evaluation written out longhand."""
    u = np.asarray(u, float)
    y = np.asarray(y, float)
    h = np.diff(u)
    delta = np.diff(y) / h
    m = np.zeros(u.size)
    for k in range(1, u.size - 1):
        if delta[k - 1] * delta[k] > 0:
            w1 = 2 * h[k] + h[k - 1]
            w2 = h[k] + 2 * h[k - 1]
            m[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k])

    def edge(h0, h1, d0, d1):
        d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
        if np.sign(d) != np.sign(d0):
            return 0.0
        if np.sign(d0) != np.sign(d1) and abs(d) > 3 * abs(d0):
            return 3 * d0
        return d

    m[0] = edge(h[0], h[1], delta[0], delta[1]) if u.size > 2 else delta[0]
    m[-1] = edge(h[-1], h[-2], delta[-1], delta[-2]) if u.size > 2 else delta[0]

    q = np.atleast_1d(np.asarray(q, float))
    out = np.empty(q.size)
    for j, qq in enumerate(q):
        if qq <= u[0]:
            out[j] = y[0]
            continue
        if qq >= u[-1]:
            out[j] = y[-1]
            continue
        k = int(np.searchsorted(u, qq, side="right") - 1)
        s = (qq - u[k]) / h[k]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out[j] = (h00 * y[k] + h10 * h[k] * m[k]
                  + h01 * y[k + 1] + h11 * h[k] * m[k + 1])
    return out


def test_interpolant_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        u = np.sort(rng.uniform(0, 10, n))
        y = np.cumsum(rng.uniform(0, 2, n))
        interp = MonotoneInterpolant(u, y)
        q = rng.uniform(-1, 11, 200)
        assert np.allclose(interp(q), reference_monotone_cubic(u, y, q),
                           atol=1e-12)


def test_interpolant_hits_knots_and_clamps():
    u = np.array([0.0, 1.0, 4.0])
    y = np.array([0.0, 0.3, 1.0])
    interp = MonotoneInterpolant(u, y)
    assert np.allclose(interp(u), y, atol=0)
    assert interp(np.array([-5.0]))[0] == 0.0
    assert interp(np.array([9.0]))[0] == 1.0


def test_interpolant_output_monotone():
    rng = np.random.default_rng(1)
    u = np.sort(rng.uniform(0, 5, 9))
    y = np.cumsum(rng.uniform(0, 1, 9))
    interp = MonotoneInterpolant(u, y)
    dense = interp(np.linspace(u[0], u[-1], 5000))
    assert np.all(np.diff(dense) >= -1e-12)


def test_update_schedule_fixed_point_on_uniform_costs():
    disc = uniform_grid(10, 0.0)
    out = update_schedule(disc, np.full(10, 3.7))
    assert np.allclose(out.times, disc.times, atol=1e-12)


def test_update_schedule_two_interval_example():
    # lambda-hat knots {0, 3, 4}; the halfway target 2 lands in the first
    # interval, pulled toward the expensive side (linear limit would be 1/3)
    disc = DiscretisationSchedule([0.0, 0.5, 1.0])
    out = update_schedule(disc, [9.0, 1.0])
    t1 = out.times[1]
    assert 0.0 < t1 < 0.5
    ref = reference_monotone_cubic([0.0, 3.0, 4.0], [0.0, 0.5, 1.0], 2.0)[0]
    assert t1 == pytest.approx(ref, abs=1e-12)
    assert t1 == pytest.approx(0.2491582491582491, abs=1e-12)


def test_update_schedule_preserves_endpoints_and_order():
    rng = np.random.default_rng(2)
    for _ in range(20):
        T = int(rng.integers(2, 40))
        disc = uniform_grid(T, 1e-5)
        costs = rng.uniform(0.0, 4.0, T)
        costs[int(rng.integers(T))] = 0.0   # exercise collapsed knots
        if not np.any(costs > 1e-10):
            continue
        out = update_schedule(disc, costs)
        assert out.times[0] == disc.times[0]
        assert out.times[-1] == disc.times[-1]
        assert np.all(np.diff(out.times) > 0)


def test_update_schedule_reversal_symmetry():
    disc = uniform_grid(12, 0.0)
    costs = np.random.default_rng(3).uniform(0.1, 5.0, 12)
    fwd = update_schedule(disc, costs).times
    rev = update_schedule(disc, costs[::-1]).times
    assert np.allclose(fwd, 1.0 - rev[::-1], atol=1e-12)


def test_update_schedule_moves_on_unequal_costs():
    disc = uniform_grid(6, 0.0)
    out = update_schedule(disc, [5.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    assert np.max(np.abs(out.times - disc.times)) > 1e-3


def test_update_schedule_flat_path():
    disc = uniform_grid(5, 0.0)
    with pytest.raises(FlatPathError):
        update_schedule(disc, np.zeros(5))
    with pytest.raises(FlatPathError):
        update_schedule(disc, np.full(5, 1e-12))


def test_update_schedule_validates_costs():
    disc = uniform_grid(4, 0.0)
    with pytest.raises(ValueError):
        update_schedule(disc, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        update_schedule(disc, [1.0, -0.1, 1.0, 1.0])


def test_length_energy_uniform_costs():
    length, energy = length_energy(np.full(9, 4.0), 9)
    assert length == pytest.approx(18.0, rel=1e-14)
    assert energy == pytest.approx(324.0, rel=1e-14)
    assert energy == pytest.approx(length**2, rel=1e-14)


def test_length_energy_jensen_gap():
    length, energy = length_energy([9.0, 1.0], 2)
    assert length == pytest.approx(4.0, rel=1e-14)
    assert energy == pytest.approx(20.0, rel=1e-14)
    assert energy >= length**2


def test_mix_schedules():
    a = DiscretisationSchedule([0.0, 0.2, 1.0])
    b = DiscretisationSchedule([0.0, 0.6, 1.0])
    assert np.allclose(mix_schedules(a, b, 0.5).times, [0.0, 0.4, 1.0], atol=0)
    assert np.array_equal(mix_schedules(a, b, 1.0).times, b.times)
    assert np.array_equal(mix_schedules(a, b, 0.0).times, a.times)
    with pytest.raises(ValueError):
        mix_schedules(a, DiscretisationSchedule([0.0, 0.5, 0.7, 1.0]), 0.5)


def test_optimizer_converges_on_gaussian(gauss01_src):
    opt = ScheduleOptimizer(T=20, n_samples=1024, random_state=0)
    opt.fit(gauss01_src)
    assert opt.converged_
    assert not opt.flat_path_
    moves = [rec["max_move"] for rec in opt.history_]
    # movement settles after burn-in
    assert moves[-1] < moves[0]
    assert np.all(np.diff(opt.schedule_.times) > 0)


def test_optimizer_flags_flat_path(std_normal_src):
    opt = ScheduleOptimizer(T=10, n_samples=256, random_state=1)
    opt.fit(std_normal_src)
    assert opt.flat_path_
    assert opt.converged_


def test_optimizer_scaling_in_t(vp):
    # T times the converged total cost approaches a T-independent limit
    # (the squared continuum length) from above, with the excess shrinking
    # like 1/T.  Exact interval costs keep Monte-Carlo noise out.
    from conftest import gaussian_interval_cost, gaussian_local_cost

    def exact_profile(times):
        return np.array([gaussian_interval_cost(vp, 0.01, times[i + 1],
                                                times[i])
                         for i in range(times.size - 1)])

    grid = np.linspace(vp.t_min, 1.0, 100001)
    lam2 = float(np.trapezoid(
        np.sqrt([gaussian_local_cost(vp, 0.01, t) for t in grid]), grid))**2

    excess = {}
    for T in (25, 50, 100):
        disc = uniform_grid(T, vp.t_min)
        for _ in range(200):
            new = update_schedule(disc, exact_profile(disc.times))
            done = np.max(np.abs(new.times - disc.times)) < 1e-10
            disc = new
            if done:
                break
        excess[T] = T * float(exact_profile(disc.times).sum()) - lam2
    assert excess[25] > excess[50] > excess[100] > 0
    assert excess[25] / excess[50] == pytest.approx(2.0, abs=0.3)
    assert excess[50] / excess[100] == pytest.approx(2.0, abs=0.3)


def test_optimizer_is_sklearn_estimator(gauss01_src):
    from sklearn.base import clone

    opt = ScheduleOptimizer(T=8, n_samples=128, max_iter=3, random_state=3)
    params = opt.get_params()
    assert params["T"] == 8 and params["n_samples"] == 128
    twin = clone(opt)
    assert twin.get_params() == params
    assert opt.fit(gauss01_src) is opt
