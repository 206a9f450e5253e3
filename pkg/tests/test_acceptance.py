"""Exit criteria of the package, each at its stated tolerance and time limit.

Every test records a one-line verdict that ``conftest.py`` prints in the
terminal summary.
"""

import json
import math
import time
from types import SimpleNamespace

import mpmath
import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, xlogy

from zomd import (Experiment, FeasibleSet, Geometry, MirrorMap, NoiseModel, ObjectiveSpec,
                  Problem, StepSchedule, concentration_bound, min_iterations_for_confidence,
                  neighborhood_radius, optimal_mu, prox_step, run_ensemble, three_point_gap)
from zomd.analysis import (compute_bias_bound, compute_second_moment_bound,
                           empirical_convergence_probability, partial_sums, radius_at)
from zomd.cli import main as cli_main
from zomd.nga import two_point_estimate
from zomd.streams import TrialStreams, substream

pytestmark = pytest.mark.acceptance

A5 = np.array([0.5, -0.5, 0.3, -0.2, 0.6])


def _probes(geom, seed):
    """The Bregman center plus four uniform points of the set."""
    return np.vstack([geom.initial_point(), geom.feasible_set.sample(substream(seed, 99), 4)])


def _estimator_moments(obj, nm, x, mu, samples, streams):
    """Estimator mean, its coordinatewise SE and the raw draws."""
    n = x.shape[0]
    U = streams.direction.standard_normal((samples, n))
    g, _, _ = two_point_estimate(obj, nm, np.broadcast_to(x, (samples, n)), mu, U,
                                 streams.noise_far.standard_normal(samples),
                                 streams.noise_near.standard_normal(samples))
    return g.mean(axis=0), g.std(axis=0, ddof=1) / np.sqrt(samples), g


def _abs_sum_smoothed_grad(x, a, mu):
    # d/dx E|x - a + mu u| = 2 Phi((x - a) / mu) - 1, coordinatewise
    return 2.0 * ndtr((x - a) / mu) - 1.0


# -- 1 -------------------------------------------------------------------------

_GRID = 10_000  # lattice units per coordinate: spacing 1e-4


def _grid_argmin(x, g, alpha):
    """Coarse-to-fine argmin over the 1e-4 lattice of the 3-simplex."""

    def best(k1, k2):
        k1, k2 = np.meshgrid(k1, k2, indexing="ij")
        k1, k2 = k1.ravel(), k2.ravel()
        keep = (k1 >= 0) & (k2 >= 0) & (k1 + k2 <= _GRID)
        Y = np.stack([k1[keep], k2[keep], _GRID - k1[keep] - k2[keep]], axis=1) / _GRID
        val = Y @ g + np.sum(xlogy(Y, Y) - xlogy(Y, x), axis=1) / alpha
        i = np.argmin(val)
        return int(round(Y[i, 0] * _GRID)), int(round(Y[i, 1] * _GRID))

    c1, c2 = best(np.arange(0, _GRID + 1, 100), np.arange(0, _GRID + 1, 100))
    for step, half in ((10, 300), (1, 30)):
        c1, c2 = best(np.arange(c1 - half, c1 + half + 1, step),
                      np.arange(c2 - half, c2 + half + 1, step))
    return np.array([c1, c2, _GRID - c1 - c2]) / _GRID


def test_criterion_1_geometry_exactness(record):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    mm, fs = MirrorMap("negative_entropy"), FeasibleSet.simplex(3)
    worst_prox = 0.0
    for _ in range(100):
        x = rng.dirichlet(np.ones(3)) * 0.97 + 0.01
        g = rng.standard_normal(3)
        alpha = rng.uniform(0.1, 1.0)
        y = prox_step(mm, fs, x, g, alpha)
        worst_prox = max(worst_prox, np.sum(np.abs(y - _grid_argmin(x, g, alpha))))
    worst_gap = 0.0
    for kind, sampler in (("negative_entropy", lambda s: rng.dirichlet(np.ones(3), s)),
                          ("euclidean", lambda s: rng.uniform(-1, 1, (s, 3)))):
        X, Y, Z = sampler(10_000), sampler(10_000), sampler(10_000)
        worst_gap = max(worst_gap, float(np.max(three_point_gap(MirrorMap(kind), X, Y, Z))))
    elapsed = time.perf_counter() - start
    ok = worst_prox <= 2e-4 and worst_gap <= 1e-10 and elapsed <= 60
    record(1, "geometry exactness", ok,
           f"max l1 prox error {worst_prox:.2e} (tol 2e-4), "
           f"max three-point residual {worst_gap:.2e} (tol 1e-10), {elapsed:.1f}s")
    assert worst_prox <= 2e-4
    assert worst_gap <= 1e-10
    assert elapsed <= 60


# -- 2 -------------------------------------------------------------------------

def test_criterion_2_estimator_bias_bound(record):
    start = time.perf_counter()
    worst = -np.inf
    rows = 0
    failures = []
    for n in (2, 5):
        geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=n))
        nm = NoiseModel("biased", sd=0.1, B=0.1)
        a = A5[:n]
        obj = ObjectiveSpec.abs_sum(a, geom)
        for i, mu in enumerate((0.05, 0.1, 0.5)):
            for j, x in enumerate(_probes(geom, 7)):
                mean, se, _ = _estimator_moments(obj, nm, x, mu, 100_000,
                                                 TrialStreams(2, j, prefix=(n, i)))
                exact = _abs_sum_smoothed_grad(x, a, mu)
                emp = geom.norms.dual_norm(mean - exact)
                bound = compute_bias_bound(geom.kappa1, nm.B, n, mu)
                tol = bound + 4 * geom.norms.dual_norm(se)
                worst = max(worst, emp / tol)
                rows += 1
                if emp > tol:
                    failures.append((n, mu, j, emp, tol))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed <= 120
    record(2, "estimator bias bound", ok,
           f"{rows - len(failures)}/{rows} cells within bound + 4 SE "
           f"(worst ratio {worst:.3f}), {elapsed:.1f}s")
    assert not failures, failures
    assert elapsed <= 120


# -- 3 -------------------------------------------------------------------------

def test_criterion_3_second_moment_bound(record):
    start = time.perf_counter()
    failures = []
    rows = 0
    worst = -np.inf
    ratios = []
    for n in (2, 5):
        geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=n))
        nm = NoiseModel("additive_gaussian", sd=0.1, V=0.1)
        obj = ObjectiveSpec.abs_sum(A5[:n], geom)
        dual = geom.norms.dual_norm
        probes = _probes(geom, 7)
        for i, mu in enumerate((0.05, 0.1, 0.5)):
            for j, x in enumerate(probes):
                _, _, g = _estimator_moments(obj, nm, x, mu, 100_000,
                                             TrialStreams(3, j, prefix=(n, i)))
                q = dual(g) ** 2
                emp, se = q.mean(), q.std(ddof=1) / np.sqrt(q.size)
                bound = compute_second_moment_bound("C00", kappa1=geom.kappa1, n=n, mu=mu,
                                                    V=nm.V, L0=obj.L0)
                rows += 1
                worst = max(worst, emp / (bound + 4 * se))
                if emp > bound + 4 * se:
                    failures.append((n, mu, j, round(float(emp), 3), round(float(bound), 3)))
        for j, x in enumerate(probes):
            m = {}
            for mu in (0.01, 0.1):
                _, _, g = _estimator_moments(obj, nm, x, mu, 100_000,
                                             TrialStreams(30, j, prefix=(n, int(mu * 100))))
                m[mu] = np.mean(dual(g) ** 2)
            ratios.append(m[0.01] / m[0.1])
    elapsed = time.perf_counter() - start
    ok = not failures and min(ratios) >= 10 and elapsed <= 120
    record(3, "second-moment bound", ok,
           f"{rows - len(failures)}/{rows} cells within bound + 4 SE "
           f"(worst ratio {worst:.3f}); min blow-up factor mu=0.01 vs 0.1: "
           f"{min(ratios):.1f} (need >= 10), {elapsed:.1f}s")
    assert not failures, failures
    assert min(ratios) >= 10
    assert elapsed <= 120


# -- 4, 5 ----------------------------------------------------------------------

def test_criterion_4_unbiased_convergence(record):
    start = time.perf_counter()
    geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=5))
    mu = 0.05
    obj = ObjectiveSpec.abs_sum(A5, geom, mu=mu)
    exp = Experiment(Problem(obj, NoiseModel("additive_gaussian", sd=0.1), geom), mu,
                     StepSchedule(0.5, 0.75), 100_000)
    gaps = np.array([s.final_gap for s in run_ensemble(exp, 20, master_seed=4)])
    level = mu * obj.L0 * np.sqrt(5) + 0.3
    inside = int(np.sum(gaps < level))
    elapsed = time.perf_counter() - start
    ok = inside >= 19 and elapsed <= 300
    record(4, "unbiased convergence", ok,
           f"{inside}/20 trials with gap < {level:.4f} "
           f"(median gap {np.median(gaps):.4f}), {elapsed:.1f}s")
    assert inside >= 19
    assert elapsed <= 300


def test_criterion_5_biased_convergence(record):
    start = time.perf_counter()
    geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=5))
    nm = NoiseModel("biased", sd=0.1, B=0.05)
    L0 = ObjectiveSpec.abs_sum(A5, geom).L0
    mu_star = optimal_mu("C00", L0, geom.kappa1, nm.B, geom.diameter, 5)

    def gaps(mu, seed):
        obj = ObjectiveSpec.abs_sum(A5, geom, mu=mu)
        exp = Experiment(Problem(obj, nm, geom), mu, StepSchedule(0.5, 0.75), 100_000)
        return np.array([s.final_gap for s in run_ensemble(exp, 20, master_seed=seed)]), exp

    g_star, exp = gaps(mu_star, 5)
    level = neighborhood_radius(exp.theory()) + 0.3
    inside = int(np.sum(g_star < level))
    g_ctrl, _ = gaps(mu_star / 10, 5)
    elapsed = time.perf_counter() - start
    ok = inside >= 19 and np.median(g_ctrl) > np.median(g_star) and elapsed <= 600
    record(5, "biased convergence", ok,
           f"mu*={mu_star:.4f}: {inside}/20 trials with gap < {level:.4f}; "
           f"median gap {np.median(g_star):.4f} at mu* vs {np.median(g_ctrl):.4f} "
           f"at mu*/10, {elapsed:.1f}s")
    assert inside >= 19
    assert np.median(g_ctrl) > np.median(g_star)
    assert elapsed <= 600


# -- 6 -------------------------------------------------------------------------

def _concentration_cells():
    """Six configurations whose computed bound at T = 10^5 is at most 0.5."""
    box2 = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=2))
    box1 = Geometry("euclidean", FeasibleSet.box(-0.5, 0.5, n=1))
    ball2 = Geometry("euclidean", FeasibleSet.ball([0.0, 0.0], 0.5))
    simplex2 = Geometry("negative_entropy", FeasibleSet.simplex(2), norm="l1")
    sched = StepSchedule(0.3, 0.55)
    return [
        ("abs_sum n=2 box", box2, lambda g, mu: ObjectiveSpec.abs_sum([0.3, -0.2], g, mu=mu),
         NoiseModel("additive_gaussian", sd=0.05), 0.1, sched, 1.0),
        ("abs_sum n=2 box biased", box2,
         lambda g, mu: ObjectiveSpec.abs_sum([0.3, -0.2], g, mu=mu),
         NoiseModel("biased", sd=0.05, B=0.002), 0.1, sched, 1.0),
        ("abs_sum n=1", box1, lambda g, mu: ObjectiveSpec.abs_sum([0.1], g, mu=mu),
         NoiseModel("additive_gaussian", sd=0.05), 0.05, sched, 0.45),
        ("quadratic n=1", box1, lambda g, mu: ObjectiveSpec.quadratic([[0.1]], [0.2], g, mu=mu),
         NoiseModel("additive_gaussian", sd=0.02), 0.1, sched, 0.3),
        ("quadratic n=2 ball", ball2,
         lambda g, mu: ObjectiveSpec.quadratic(np.diag([0.1, 0.05]), [0.6, 0.0], g, mu=mu),
         NoiseModel("additive_gaussian", sd=0.02), 0.1, sched, 0.7),
        ("quadratic n=2 simplex entropy", simplex2,
         lambda g, mu: ObjectiveSpec.quadratic(0.1 * np.eye(2), [0.8, 0.2], g, mu=mu),
         NoiseModel("additive_gaussian", sd=0.01), 0.05, sched, 1.2),
    ]


def test_criterion_6_concentration_one_sided(record):
    start = time.perf_counter()
    T, trials = 100_000, 200
    lines = []
    ok = True
    for k, (name, geom, make, nm, mu, sched, eps) in enumerate(_concentration_cells()):
        exp = Experiment(Problem(make(geom, mu), nm, geom), mu, sched, T)
        bound = concentration_bound(T, eps, sched, exp.theory())
        assert bound <= 0.5, (name, bound)
        frac, (lo, hi) = empirical_convergence_probability(exp, T, eps, trials, master_seed=600 + k)
        fail = 1.0 - frac
        half = 0.5 * (hi - lo)
        cell_ok = fail <= bound + half
        ok &= cell_ok
        lines.append(f"{name}: fail {fail:.3f} <= bound {bound:.3f} + {half:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 1800
    record(6, "concentration bound one-sidedness", ok,
                      "; ".join(lines) + f", {elapsed:.1f}s")
    assert ok


# -- 7 -------------------------------------------------------------------------

def _brute_force_first(a, p, conditions, limit):
    """Forward scan with compensated summation; returns the first hit."""
    s1 = c1 = s2 = c2 = 0.0
    for t in range(1, limit + 1):
        al = a * t ** (-p)
        y = al - c1
        tmp = s1 + y
        c1 = (tmp - s1) - y
        s1 = tmp
        y = al * al - c2
        tmp = s2 + y
        c2 = (tmp - s2) - y
        s2 = tmp
        if conditions(s1, s2):
            return t
    return None


def test_criterion_7_analysis_self_consistency(record):
    start = time.perf_counter()
    rng = np.random.default_rng(707)

    # optimal mu against a 1-D numeric minimiser
    worst_mu = 0.0
    for _ in range(20):
        klass = rng.choice(["C00", "C11"])
        variant = rng.choice(["sqrt_n", "n"]) if klass == "C11" else "sqrt_n"
        L, k1, B, D = rng.uniform(0.2, 5.0), rng.uniform(1.0, 3.0), rng.uniform(0.01, 0.5), \
            rng.uniform(0.5, 5.0)
        n = int(rng.integers(1, 20))
        closed = optimal_mu(klass, L, k1, B, D, n, delta_variant=variant)
        res = minimize_scalar(lambda lm: radius_at(klass, math.exp(lm), L, k1, B, D, n,
                                                   delta_variant=variant),
                              bounds=(math.log(1e-4), math.log(1e3)), method="bounded",
                              options={"xatol": 1e-12})
        worst_mu = max(worst_mu, abs(math.exp(res.x) - closed) / closed)

    # confidence iteration count against a forward scan
    mismatches = []
    draws = 0
    while draws < 10:
        a, p_exp = rng.uniform(0.5, 2.0), rng.uniform(0.55, 1.0)
        eps, conf = rng.uniform(0.5, 3.0), rng.uniform(0.3, 0.9)
        tp = SimpleNamespace(K=rng.uniform(0.01, 0.3), C=rng.uniform(0.01, 0.3),
                             D=rng.uniform(0.5, 2.0))
        q = 1.0 - conf
        sched = StepSchedule(a, p_exp)

        def conditions(s1, s2):
            return (s1 >= 3 * tp.D / eps and s1 >= 6 * tp.K / (eps * q) * s2
                    and s1 * s1 >= 18 * tp.C * tp.D / (eps ** 2 * q) * s2)

        brute = _brute_force_first(a, p_exp, conditions, 200_000)
        if brute is None:
            continue
        draws += 1
        got = min_iterations_for_confidence(conf, eps, sched, tp)
        if got != brute:
            mismatches.append((got, brute))

    # partial sums against high-precision summation
    mpmath.mp.dps = 40
    worst_sum = 0.0
    for a, p_exp in ((0.5, 0.75), (1.3, 0.55), (2.0, 1.0)):
        sched = StepSchedule(a, p_exp)
        ts = [1, 7, 1000, 20_000, 3_000_000, 10 ** 9]
        s1, s2 = partial_sums(sched, ts)
        for t, v1, v2 in zip(ts, s1, s2):
            if t <= 20_000:
                e1 = mpmath.fsum(mpmath.mpf(a) * mpmath.mpf(k) ** -p_exp for k in range(1, t + 1))
                e2 = mpmath.fsum(mpmath.mpf(a) ** 2 * mpmath.mpf(k) ** (-2 * p_exp)
                                 for k in range(1, t + 1))
            else:
                # Hurwitz zeta difference, exact for a power-law series
                def head(s):
                    if s == 1:
                        return mpmath.harmonic(t)
                    return mpmath.zeta(s) - mpmath.zeta(s, t + 1)
                e1 = a * head(mpmath.mpf(p_exp))
                e2 = a ** 2 * head(mpmath.mpf(2 * p_exp))
            worst_sum = max(worst_sum, float(abs(v1 - e1) / e1), float(abs(v2 - e2) / e2))

    elapsed = time.perf_counter() - start
    ok = worst_mu <= 1e-6 and not mismatches and worst_sum <= 1e-10 and elapsed <= 60
    record(7, "analysis self-consistency", ok,
           f"optimal mu rel err {worst_mu:.1e} (tol 1e-6); confidence scan "
           f"{10 - len(mismatches)}/10 exact; partial sums rel err {worst_sum:.1e} "
           f"(tol 1e-10), {elapsed:.1f}s")
    assert worst_mu <= 1e-6
    assert not mismatches, mismatches
    assert worst_sum <= 1e-10
    assert elapsed <= 60


# -- 8 -------------------------------------------------------------------------

def test_criterion_8_determinism(record, tmp_path):
    start = time.perf_counter()
    cfg = {
        "objective": {"kind": "abs_sum", "a": [0.5, -0.5, 0.3]},
        "noise": {"kind": "biased", "sd": 0.1, "B": 0.05},
        "geometry": {"n": 3, "set": {"kind": "box", "lo": -1.0, "hi": 1.0}},
        "estimator": {"mu": 0.1},
        "schedule": {"a": 0.5, "p": 0.75},
        "run": {"T": 20_000, "trials": 3, "seed": 8},
        "analysis": {"epsilon": [0.3, 1.0], "confidence": [0.9]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli_main(["run", "--config", str(path), "--out", str(out), "--quiet"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outs[0] == outs[1]
    names = sorted(outs[0])
    elapsed = time.perf_counter() - start
    ok = same and len(names) == 4 and elapsed <= 60
    record(8, "determinism", ok,
           f"{len(names)} files ({', '.join(names)}) byte-identical: {same}, "
           f"{elapsed:.1f}s")
    assert len(names) == 4
    assert same
    assert elapsed <= 60
