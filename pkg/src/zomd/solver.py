"""The zeroth-order mirror descent loop, step schedules and trajectories.

One iteration at ``x_t``::

    g_t     = two-point estimate at x_t          (oracle queries only)
    x_{t+1} = argmin_x <g_t, x - x_t> + D_R(x, x_t) / alpha(t)
    z_t     = sum_{j<=t} alpha(j) x_j / sum_{k<=t} alpha(k)

Ensembles advance all trials in lockstep on a ``(trials, n)`` array; each
trial still draws from its own sub-streams, so a trial's path does not
depend on which other trials run beside it.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import ConfigurationError, check_count, check_scalar, check_vector
from .analysis import TheoryParams
from .geometry import prox_step
from .nga import two_point_estimate
from .streams import BLOCK, TrialStreams

RECORD_LIMIT = 10_000
THIN_RATIO = 1.1


class StepSchedule:
    """Power-law steps ``alpha(t) = a * t**(-p)`` with ``0.5 < p <= 1``.

    That range makes ``sum alpha`` diverge while ``sum alpha**2``
    converges, the two requirements on the step sizes.
    """

    def __init__(self, a, p, T_max=None):
        self.a = check_scalar(a, "a", min_val=0.0, include_min=False)
        self.p = check_scalar(p, "p")
        if not 0.5 < self.p <= 1.0:
            raise ConfigurationError(
                f"step exponent p = {self.p} violates the step-size assumption: "
                "need 0.5 < p <= 1 so that sum(alpha) diverges and sum(alpha^2) converges")
        self.T_max = None if T_max is None else check_count(T_max, "T_max")

    def __repr__(self):
        return f"StepSchedule(a={self.a}, p={self.p})"

    def alphas(self, ts):
        ts = np.asarray(ts)
        if np.any(ts < 1):
            raise ValueError("iteration indices start at 1")
        if self.T_max is not None and np.any(ts > self.T_max):
            raise ValueError(f"iteration index beyond T_max = {self.T_max}")
        return self.a * np.power(ts.astype(float), -self.p)

    def alpha_at(self, t):
        if isinstance(t, bool) or int(t) != t or t < 1:
            raise ValueError(f"iteration index must be an integer >= 1, got {t}")
        return float(self.alphas(np.array([t]))[0])


def alpha_at(sched, t):
    return sched.alpha_at(t)


def update_average(z_prev, x_t, alpha_t, cum_alpha_prev):
    """Fold ``x_t`` with weight ``alpha_t`` into the running weighted average.

    Returns ``(z_t, cum_alpha)``. When ``cum_alpha_prev`` is zero the
    average is ``x_t`` itself and ``z_prev`` is ignored.
    """
    x_t = np.asarray(x_t, dtype=float)
    cum = cum_alpha_prev + alpha_t
    if cum_alpha_prev == 0:
        return x_t.copy(), cum
    return (cum_alpha_prev * np.asarray(z_prev) + alpha_t * x_t) / cum, cum


@dataclass
class Problem:
    objective: object
    noise: object
    geometry: object


@dataclass
class Experiment:
    """Everything needed to run the algorithm except the random seed."""

    problem: Problem
    mu: float
    schedule: StepSchedule
    T: int
    x1: np.ndarray = None
    record_limit: int = RECORD_LIMIT

    def __post_init__(self):
        self.mu = check_scalar(self.mu, "mu", min_val=0.0, include_min=False)
        self.T = check_count(self.T, "T")
        geom = self.problem.geometry
        if self.x1 is None:
            self.x1 = geom.initial_point()
        self.x1 = check_vector(self.x1, geom.n, name="x1")
        if not geom.contains(self.x1):
            raise ConfigurationError("initial point x1 lies outside the feasible set")
        if geom.mirror_map.kind == "negative_entropy" and np.any(self.x1 <= 0):
            raise ConfigurationError("entropy mirror descent needs a strictly positive x1")

    def with_horizon(self, T):
        return replace(self, T=T)

    def theory(self, **variants):
        p = self.problem
        return TheoryParams.from_problem(p.objective, p.noise, p.geometry, self.mu, **variants)


@dataclass
class Trajectory:
    """Recorded iterations of one run.

    Arrays are indexed by record; ``t`` holds the iteration numbers. Entry
    ``i`` describes iteration ``t[i]``: the iterate ``x`` at which the
    estimate was taken, the average ``z`` including it, and running sums
    through that iteration.
    """

    trial: int
    t: np.ndarray
    alpha: np.ndarray
    x: np.ndarray
    z: np.ndarray
    f_x: np.ndarray
    f_z: np.ndarray
    cum_alpha: np.ndarray
    cum_alpha_sq: np.ndarray
    diag_sum: np.ndarray
    f_star: float
    x_final: np.ndarray

    @property
    def gap_z(self):
        return self.f_z - self.f_star

    @property
    def final_gap(self):
        return float(self.f_z[-1] - self.f_star)

    def summary(self, bregman_start=None):
        return TrialSummary(trial=self.trial, T=int(self.t[-1]), final_gap=self.final_gap,
                            best_f_z=float(np.min(self.f_z)), final_f_z=float(self.f_z[-1]),
                            diag_sum=float(self.diag_sum[-1]),
                            checkpoints={int(t): float(g) for t, g in zip(self.t, self.gap_z)},
                            bregman_start=bregman_start)


@dataclass
class TrialSummary:
    trial: int
    T: int
    final_gap: float
    best_f_z: float
    final_f_z: float
    diag_sum: float
    checkpoints: dict = field(default_factory=dict)
    bregman_start: float = None


def record_indices(T, limit=RECORD_LIMIT, ratio=THIN_RATIO):
    """Every iteration up to ``limit``, then geometrically spaced ones, then ``T``."""
    ts = list(range(1, min(T, limit) + 1))
    k = 1
    while True:
        t = math.ceil(limit * ratio ** k)
        if t >= T:
            break
        if t > ts[-1]:
            ts.append(t)
        k += 1
    if ts[-1] != T:
        ts.append(T)
    return np.array(ts, dtype=np.int64)


def _simulate(exp, streams, record_ts):
    """Advance ``len(streams)`` trials in lockstep; record at ``record_ts``."""
    obj = exp.problem.objective
    nm = exp.problem.noise
    geom = exp.problem.geometry
    dual = geom.norms.dual_norm
    mm, fs = geom.mirror_map, geom.feasible_set
    half_inv_sigma = 0.5 / geom.sigma_R
    m, n, T, mu = len(streams), geom.n, exp.T, exp.mu

    record_ts = np.asarray(record_ts, dtype=np.int64)
    R = record_ts.shape[0]
    rec = {
        "alpha": np.empty(R), "cum_alpha": np.empty(R), "cum_alpha_sq": np.empty(R),
        "x": np.empty((R, m, n)), "z": np.empty((R, m, n)), "diag": np.empty((R, m)),
    }

    x = np.tile(exp.x1, (m, 1))
    z = np.zeros((m, n))
    diag = np.zeros(m)
    S = 0.0
    S2 = 0.0
    ptr = 0
    for start in range(1, T + 1, BLOCK):
        size = min(BLOCK, T - start + 1)
        # full blocks are always drawn so a shorter run is a prefix of a longer one
        drawn = [s.block(BLOCK, n) for s in streams]
        U = np.stack([d[0] for d in drawn], axis=1)
        XF = np.stack([d[1] for d in drawn], axis=1)
        XN = np.stack([d[2] for d in drawn], axis=1)
        alphas = exp.schedule.alphas(np.arange(start, start + size))
        for k in range(size):
            t = start + k
            a = float(alphas[k])
            g, _, _ = two_point_estimate(obj, nm, x, mu, U[k], XF[k], XN[k])
            if S == 0.0:
                z = x.copy()
            else:
                z = (S * z + a * x) / (S + a)
            S += a
            S2 += a * a
            diag = diag + a * a * dual(g) ** 2 * half_inv_sigma
            if ptr < R and t == record_ts[ptr]:
                rec["alpha"][ptr] = a
                rec["cum_alpha"][ptr] = S
                rec["cum_alpha_sq"][ptr] = S2
                rec["x"][ptr] = x
                rec["z"][ptr] = z
                rec["diag"][ptr] = diag
                ptr += 1
            x = prox_step(mm, fs, x, g, a)

    f_x = obj.value(rec["x"])
    f_z = obj.value(rec["z"])
    out = []
    for i, s in enumerate(streams):
        out.append(Trajectory(
            trial=s.trial, t=record_ts.copy(), alpha=rec["alpha"].copy(),
            x=rec["x"][:, i].copy(), z=rec["z"][:, i].copy(), f_x=f_x[:, i].copy(),
            f_z=f_z[:, i].copy(), cum_alpha=rec["cum_alpha"].copy(),
            cum_alpha_sq=rec["cum_alpha_sq"].copy(), diag_sum=rec["diag"][:, i].copy(),
            f_star=obj.f_star, x_final=x[i].copy()))
    return out


def run_experiment(exp, seed=0, trial=0, record_ts=None):
    """Run one trial of ``exp`` on sub-stream ``trial`` of ``seed``."""
    if record_ts is None:
        record_ts = record_indices(exp.T, exp.record_limit)
    return _simulate(exp, [TrialStreams(seed, trial)], record_ts)[0]


def run_zomd(obj, nm, geometry, mu, schedule, T, x1=None, rng=0,
             record_limit=RECORD_LIMIT):
    """Run the algorithm once and return its :class:`Trajectory`.

    ``rng`` is the master seed; the run uses trial sub-stream 0, so it
    coincides with trial 0 of :func:`run_ensemble` under the same seed.
    """
    exp = Experiment(Problem(obj, nm, geometry), mu, schedule, T, x1=x1,
                     record_limit=record_limit)
    return run_experiment(exp, seed=rng)


def run_ensemble(exp, trials, master_seed, checkpoints=(), batch=256,
                 return_trajectories=False, stream_prefix=()):
    """Run ``trials`` independent trials; trial ``i`` uses sub-stream ``i``.

    Only ``checkpoints`` (plus ``T``) are recorded. Returns summaries, or
    trajectories with ``return_trajectories=True``, ordered by trial.
    """
    trials = check_count(trials, "trials")
    record_ts = sorted({int(c) for c in checkpoints if 1 <= c <= exp.T} | {exp.T})
    out = []
    for lo in range(0, trials, batch):
        streams = [TrialStreams(master_seed, i, prefix=stream_prefix)
                   for i in range(lo, min(trials, lo + batch))]
        out.extend(_simulate(exp, streams, record_ts))
    if return_trajectories:
        return out
    mm = exp.problem.geometry.mirror_map
    x_star = exp.problem.objective.x_star
    try:
        start = float(mm.divergence(x_star, exp.x1))
    except ValueError:
        start = None
    return [tr.summary(bregman_start=start) for tr in out]
