import numpy as np
import pytest

from zomd import FeasibleSet, Geometry, NoiseModel, ObjectiveSpec
from zomd._validation import ConfigurationError
from zomd.solver import (Experiment, Problem, StepSchedule, alpha_at, record_indices,
                         run_ensemble, run_experiment, run_zomd, update_average)


@pytest.fixture
def exp2():
    geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=2))
    obj = ObjectiveSpec.abs_sum([0.2, -0.1], geom)
    nm = NoiseModel("additive_gaussian", sd=0.1)
    return Experiment(Problem(obj, nm, geom), 0.1, StepSchedule(0.3, 0.75), 3000)


def test_schedule_values_and_validation():
    sched = StepSchedule(0.5, 0.75)
    np.testing.assert_allclose(sched.alphas([1, 16]), [0.5, 0.5 / 8])
    assert alpha_at(sched, 81) == pytest.approx(0.5 / 27)
    with pytest.raises(ConfigurationError, match="step-size assumption"):
        StepSchedule(1.0, 0.5)
    with pytest.raises(ConfigurationError):
        StepSchedule(1.0, 1.1)
    with pytest.raises(ValueError):
        StepSchedule(0.0, 0.75)
    with pytest.raises(ValueError):
        sched.alpha_at(0)
    with pytest.raises(ValueError):
        StepSchedule(1.0, 0.75, T_max=10).alphas([11])


def test_update_average_matches_weighted_mean(rng):
    X = rng.standard_normal((50, 3))
    a = rng.uniform(0.1, 1.0, 50)
    z, cum = None, 0.0
    for x, w in zip(X, a):
        z, cum = update_average(z, x, w, cum)
    np.testing.assert_allclose(z, a @ X / a.sum(), rtol=1e-12)
    assert cum == pytest.approx(a.sum())


def test_record_indices():
    assert list(record_indices(5, limit=10)) == [1, 2, 3, 4, 5]
    ts = record_indices(100_000, limit=100, ratio=1.5)
    assert list(ts[:100]) == list(range(1, 101))
    assert ts[-1] == 100_000
    assert np.all(np.diff(ts) > 0)
    np.testing.assert_array_less(ts[101:-1] / ts[100:-2], 1.5 + 0.02)


def test_run_zomd_is_trial_zero_of_ensemble(exp2):
    p = exp2.problem
    solo = run_zomd(p.objective, p.noise, p.geometry, exp2.mu, exp2.schedule, exp2.T, rng=7)
    ens = run_ensemble(exp2, 3, 7, return_trajectories=True)
    np.testing.assert_array_equal(solo.x_final, ens[0].x_final)
    assert solo.final_gap == ens[0].final_gap
    assert not np.array_equal(ens[0].x_final, ens[1].x_final)


def test_shorter_run_is_prefix_of_longer(exp2):
    long = run_experiment(exp2, seed=3)
    short = run_experiment(exp2.with_horizon(1500), seed=3)
    np.testing.assert_array_equal(short.z, long.z[:1500])
    np.testing.assert_array_equal(short.x, long.x[:1500])


def test_trial_path_independent_of_batching(exp2):
    a = run_ensemble(exp2, 5, 11, return_trajectories=True, batch=2)
    b = run_ensemble(exp2, 5, 11, return_trajectories=True, batch=5)
    for ta, tb in zip(a, b):
        np.testing.assert_array_equal(ta.x_final, tb.x_final)
    solo = run_experiment(exp2, seed=11, trial=3, record_ts=[exp2.T])
    np.testing.assert_array_equal(solo.x_final, b[3].x_final)


def test_recorded_average_and_running_sums(exp2):
    tr = run_experiment(exp2.with_horizon(400), seed=1)
    np.testing.assert_array_equal(tr.t, np.arange(1, 401))
    np.testing.assert_allclose(tr.z[-1], tr.alpha @ tr.x / tr.alpha.sum(), rtol=1e-10)
    np.testing.assert_allclose(tr.cum_alpha, np.cumsum(tr.alpha), rtol=1e-12)
    np.testing.assert_allclose(tr.cum_alpha_sq, np.cumsum(tr.alpha ** 2), rtol=1e-12)
    assert np.all(np.diff(tr.diag_sum) >= 0)
    assert np.all(exp2.problem.geometry.contains(tr.x))
    np.testing.assert_allclose(tr.gap_z, tr.f_z - exp2.problem.objective.f_star)


def test_noiseless_run_converges():
    geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=2))
    obj = ObjectiveSpec.quadratic(np.eye(2), [0.3, -0.2], geom)
    tr = run_zomd(obj, NoiseModel(), geom, 0.01, StepSchedule(0.3, 0.6), 20_000, rng=0)
    assert tr.final_gap < 1e-2
    np.testing.assert_allclose(tr.x_final, [0.3, -0.2], atol=0.05)


def test_entropy_run_stays_on_simplex():
    geom = Geometry("negative_entropy", FeasibleSet.simplex(3), norm="l1")
    obj = ObjectiveSpec.quadratic(np.eye(3), [0.6, 0.3, 0.1], geom)
    tr = run_zomd(obj, NoiseModel("additive_gaussian", sd=0.01), geom, 0.05,
                  StepSchedule(0.2, 0.75), 2000, rng=2)
    np.testing.assert_allclose(tr.x.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(tr.x > 0)


def test_experiment_validation(exp2):
    p = exp2.problem
    with pytest.raises(ConfigurationError):
        Experiment(p, 0.1, exp2.schedule, 10, x1=[2.0, 0.0])
    with pytest.raises(ValueError):
        Experiment(p, 0.0, exp2.schedule, 10)
    with pytest.raises(ValueError):
        Experiment(p, 0.1, exp2.schedule, 0)
    geom = Geometry("negative_entropy", FeasibleSet.simplex(2), norm="l1")
    obj = ObjectiveSpec.abs_sum([0.5, 0.5], geom)
    with pytest.raises(ConfigurationError):
        Experiment(Problem(obj, NoiseModel(), geom), 0.1, exp2.schedule, 10, x1=[1.0, 0.0])
    np.testing.assert_allclose(exp2.x1, [0.0, 0.0])


def test_summaries(exp2):
    s = run_ensemble(exp2, 2, 0, checkpoints=[10, 100])
    assert [x.trial for x in s] == [0, 1]
    assert set(s[0].checkpoints) == {10, 100, exp2.T}
    assert s[0].bregman_start == pytest.approx(0.5 * (0.2 ** 2 + 0.1 ** 2))


@pytest.fixture
def exp5():
    geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=5))
    obj = ObjectiveSpec.abs_sum([0.5, -0.5, 0.3, -0.2, 0.6], geom)
    nm = NoiseModel("additive_gaussian", sd=0.1)
    return Experiment(Problem(obj, nm, geom), 0.05, StepSchedule(0.5, 0.75), 100_000)


def test_diag_sum_growth_flattens(exp5):
    tr = run_experiment(exp5, seed=0, record_ts=[1000, 10_000, 100_000])
    ratio = tr.diag_sum / np.log(tr.t)
    assert np.all(np.diff(ratio) < 0)
    # later increments shrink, as for a convergent series
    inc = np.diff(np.concatenate([[0.0], tr.diag_sum]))
    assert inc[2] < inc[1] < inc[0]


def test_median_gap_trend_and_replay(exp5):
    exp = exp5.with_horizon(10_000)
    s = run_ensemble(exp, 20, 3, checkpoints=[100, 1000])
    med = [np.median([x.checkpoints[t] for x in s]) for t in (100, 1000, 10_000)]
    assert med[0] >= med[1] >= med[2]
    again = run_ensemble(exp.with_horizon(1000), 20, 3, checkpoints=[100])
    assert [x.checkpoints[100] for x in again] == [x.checkpoints[100] for x in s]
