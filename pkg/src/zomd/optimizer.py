"""Estimator-style front end to the solver."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_scalar
from .solver import Experiment, Problem, StepSchedule, run_experiment


class ZerothOrderMirrorDescent(BaseEstimator):
    """Zeroth-order mirror descent with a two-point Gaussian gradient estimate.

    Parameters
    ----------
    mu : float, default=0.05
        Smoothing radius of the gradient estimator.
    step_scale : float, default=0.5
        ``a`` in ``alpha(t) = a * t**(-p)``.
    step_power : float, default=0.75
        ``p`` in ``alpha(t) = a * t**(-p)``; must lie in ``(0.5, 1]``.
    n_iter : int, default=10000
    x_init : array_like, optional
        Starting point; defaults to the Bregman center of the feasible set.
    random_state : int, optional
        Master seed. The run uses trial sub-stream 0 of this seed.
    record_limit : int, default=10000
        Iterations recorded in full before geometric thinning.

    Attributes
    ----------
    trajectory_ : Trajectory
    x_ : ndarray
        Last iterate ``x_{T+1}``.
    z_ : ndarray
        Weighted average ``z_T``; the point the guarantees are about.
    gap_ : float
        ``f(z_T) - f*`` using the exact objective.
    n_iter_ : int

    Examples
    --------
    >>> import numpy as np
    >>> from zomd import FeasibleSet, Geometry, NoiseModel, ObjectiveSpec, Problem
    >>> geom = Geometry("euclidean", FeasibleSet.box(-1.0, 1.0, n=3))
    >>> obj = ObjectiveSpec.abs_sum([0.2, -0.1, 0.4], geom)
    >>> problem = Problem(obj, NoiseModel("additive_gaussian", sd=0.01), geom)
    >>> opt = ZerothOrderMirrorDescent(n_iter=2000, random_state=0).fit(problem)
    >>> bool(opt.gap_ < 0.5)
    True
    """

    def __init__(self, mu=0.05, step_scale=0.5, step_power=0.75, n_iter=10_000,
                 x_init=None, random_state=None, record_limit=10_000):
        self.mu = mu
        self.step_scale = step_scale
        self.step_power = step_power
        self.n_iter = n_iter
        self.x_init = x_init
        self.random_state = random_state
        self.record_limit = record_limit

    def _experiment(self, problem):
        check_scalar(self.mu, "mu", min_val=0.0, include_min=False)
        check_count(self.n_iter, "n_iter")
        schedule = StepSchedule(self.step_scale, self.step_power)
        return Experiment(problem, self.mu, schedule, self.n_iter,
                          x1=self.x_init, record_limit=self.record_limit)

    def fit(self, problem, y=None):
        """Minimise ``problem.objective`` through noisy oracle queries only.

        Parameters
        ----------
        problem : Problem
            Objective, noise law and geometry.
        y : ignored

        Returns
        -------
        self
        """
        if not isinstance(problem, Problem):
            raise TypeError(f"fit expects a Problem, got {type(problem).__name__}")
        exp = self._experiment(problem)
        seed = self.random_state
        if seed is None:
            seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
        traj = run_experiment(exp, seed=seed)
        self.trajectory_ = traj
        self.x_ = traj.x_final
        self.z_ = traj.z[-1].copy()
        self.gap_ = traj.final_gap
        self.n_iter_ = int(traj.t[-1])
        self.theory_ = exp.theory()
        return self

    def score(self, problem, y=None):
        """Negative optimality gap of ``z_T`` (higher is better)."""
        check_is_fitted(self, "z_")
        obj = problem.objective
        return -float(obj.value(self.z_) - obj.f_star)
