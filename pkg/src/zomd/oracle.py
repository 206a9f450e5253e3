"""Test objectives with known optima and the biased zeroth-order oracle.

An oracle query at ``x`` returns ``f(x) + e`` where ``e`` is a fresh draw
of the noise law: its mean is a bounded bias field ``b(x)`` and its second
moment is bounded by ``V**2``.
"""

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from ._validation import (ConfigurationError, DomainError, check_points,
                          check_scalar, check_vector)
from .geometry import vector_norm

OBJECTIVE_KINDS = ("quadratic", "abs_sum", "log_sum_exp")
SMOOTHNESS_CLASSES = ("C00", "C11")

# Lipschitz constants are certified on the set inflated by this many mu.
PROBE_INFLATION = 6.0


def _induced_norm(H, primal):
    """Upper bound on the primal-to-dual operator norm of a symmetric matrix."""
    if primal == "l2":
        return float(np.linalg.norm(H, 2))
    if primal == "l1":
        return float(np.max(np.abs(H)))
    return float(np.sum(np.abs(H)))


def _inflated_box(geometry, mu):
    lo, hi = geometry.feasible_set.bounding_box()
    pad = PROBE_INFLATION * mu
    return lo - pad, hi + pad


def _set_constraints(fs, nvar=None, offset=0):
    """SLSQP bounds/constraints restricting ``v[offset:offset+n]`` to ``fs``."""
    n = fs.n
    nvar = n if nvar is None else nvar
    bounds = [(None, None)] * nvar
    cons = []
    sl = slice(offset, offset + n)
    if fs.kind == "box":
        for i in range(n):
            bounds[offset + i] = (fs.lo[i], fs.hi[i])
    elif fs.kind == "ball":
        cons.append({"type": "ineq",
                     "fun": lambda v: fs.radius ** 2 - np.sum((v[sl] - fs.center) ** 2),
                     "jac": lambda v: _pad(-2.0 * (v[sl] - fs.center), nvar, offset)})
    else:
        for i in range(n):
            bounds[offset + i] = (0.0, 1.0)
        cons.append({"type": "eq", "fun": lambda v: np.sum(v[sl]) - 1.0,
                     "jac": lambda v: _pad(np.ones(n), nvar, offset)})
    return bounds, cons


def _pad(g, nvar, offset):
    out = np.zeros(nvar)
    out[offset:offset + g.shape[0]] = g
    return out


def _project_into(fs, x):
    if fs.kind == "box":
        return np.clip(x, fs.lo, fs.hi)
    if fs.kind == "ball":
        d = x - fs.center
        r = np.linalg.norm(d)
        return x if r <= fs.radius else fs.center + d * (fs.radius / r)
    x = np.maximum(x, 0.0)
    return x / x.sum() if x.sum() > 0 else fs.bregman_center()


class ObjectiveSpec:
    """A convex test objective tied to a geometry, with certified constants.

    Build instances with :meth:`quadratic`, :meth:`abs_sum` or
    :meth:`log_sum_exp`; the constants are computed for the geometry's
    primal norm and feasible set.

    Attributes
    ----------
    kind : str
    smoothness_class : {"C00", "C11"}
    L0 : float
        Lipschitz constant of ``f`` on the (inflated) set, primal norm.
    L1 : float or None
        Lipschitz constant of the gradient, primal to dual norm.
    G : float or None
        Bound on ``||grad f||_2`` over the set inflated by ``6 mu``.
    K1 : float
        Bound on the l2 norm of (smoothed) gradients over the set.
    f_star : float
    x_star : ndarray
    """

    def __init__(self, kind, params, *, smoothness_class, L0, L1=None, G=None,
                 K1, f_star, x_star, n):
        if kind not in OBJECTIVE_KINDS:
            raise ConfigurationError(f"unknown objective {kind!r}")
        if smoothness_class not in SMOOTHNESS_CLASSES:
            raise ConfigurationError(f"unknown smoothness class {smoothness_class!r}")
        self.kind = kind
        self.params = params
        self.smoothness_class = smoothness_class
        self.L0 = L0
        self.L1 = L1
        self.G = G
        self.K1 = K1
        self.f_star = float(f_star)
        self.x_star = np.asarray(x_star, dtype=float)
        self.n = int(n)

    def __repr__(self):
        return (f"ObjectiveSpec({self.kind!r}, class={self.smoothness_class}, "
                f"n={self.n}, f_star={self.f_star:.6g})")

    # -- evaluation -------------------------------------------------------

    def value(self, X):
        X = check_points(X, self.n)
        p = self.params
        if self.kind == "quadratic":
            D = X - p["c"]
            # elementwise product keeps evaluation independent of batch shape
            return np.sum(D * np.einsum("ij,...j->...i", p["Q"], D), axis=-1)
        if self.kind == "abs_sum":
            return np.sum(np.abs(X - p["a"]), axis=-1)
        S = p["scale"] * (X - p["a"])
        return logsumexp(np.concatenate([S, -S], axis=-1), axis=-1) / p["scale"]

    def gradient(self, X):
        """Exact gradient; raises DomainError at a kink of ``abs_sum``."""
        X = check_points(X, self.n)
        p = self.params
        if self.kind == "quadratic":
            return 2.0 * np.einsum("ij,...j->...i", p["Q"], X - p["c"])
        if self.kind == "abs_sum":
            D = X - p["a"]
            if np.any(D == 0):
                raise DomainError("abs_sum is not differentiable where x_i == a_i")
            return np.sign(D)
        S = p["scale"] * (X - p["a"])
        W = np.exp(np.concatenate([S, -S], axis=-1)
                   - logsumexp(np.concatenate([S, -S], axis=-1), axis=-1)[..., None])
        return W[..., :self.n] - W[..., self.n:]

    def subgradient(self, X):
        """A subgradient everywhere (zero in kinked coordinates of abs_sum)."""
        if self.kind == "abs_sum":
            return np.sign(check_points(X, self.n) - self.params["a"])
        return self.gradient(X)

    # -- constructors -----------------------------------------------------

    @classmethod
    def quadratic(cls, Q, c, geometry, mu=0.0):
        """``f(x) = (x - c)^T Q (x - c)`` with ``Q`` symmetric PSD."""
        n = geometry.n
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape != (n, n):
            raise ValueError(f"Q must have shape ({n}, {n}), got {Q.shape}")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        c = check_vector(c, n, name="c")
        primal = geometry.norms.primal
        fs = geometry.feasible_set
        params = {"Q": Q, "c": c}

        def grad_l2_max(lo, hi):
            # ||2Q(x - c)||_2 is convex, so its max over a box is at a vertex
            if n <= 12:
                corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(n, -1).T
                return float(np.max(np.linalg.norm(2.0 * (corners - c) @ Q, axis=1)))
            far = np.maximum(np.abs(lo - c), np.abs(hi - c))
            return float(2.0 * np.linalg.norm(Q, 2) * np.linalg.norm(far))

        lo, hi = _inflated_box(geometry, mu)
        G = grad_l2_max(lo, hi)
        if fs.kind == "simplex":
            K1 = float(np.max(np.linalg.norm(2.0 * (np.eye(n) - c) @ Q, axis=1)))
        elif fs.kind == "ball":
            K1 = float(2.0 * np.linalg.norm(Q, 2)
                       * (np.linalg.norm(fs.center - c) + fs.radius))
        else:
            K1 = grad_l2_max(fs.lo, fs.hi)
        # ||grad||_* <= kappa-free bound via the l2 maximum and norm equivalence
        dual_over_l2 = {"l2": 1.0, "l1": 1.0, "linf": float(np.sqrt(n))}[primal]
        L0 = G * dual_over_l2
        L1 = 2.0 * _induced_norm(Q, primal)

        if np.all(fs.contains(c)):
            x_star = c.copy()
        elif fs.kind == "box" and np.allclose(Q, np.diag(np.diag(Q))):
            x_star = np.clip(c, fs.lo, fs.hi)
        else:
            x_star = _solve_smooth(lambda v: (v - c) @ Q @ (v - c),
                                   lambda v: 2.0 * Q @ (v - c), fs, c)
        obj = cls("quadratic", params, smoothness_class="C11", L0=L0, L1=L1,
                  G=G, K1=K1, f_star=0.0, x_star=x_star, n=n)
        obj.f_star = float(obj.value(x_star))
        return obj

    @classmethod
    def abs_sum(cls, a, geometry, mu=0.0):
        """``f(x) = sum_i |x_i - a_i|``, Lipschitz but not smooth."""
        n = geometry.n
        a = check_vector(a, n, name="a")
        fs = geometry.feasible_set
        # ||sign(.)||_* is largest for the all-ones vector
        L0 = float(vector_norm(np.ones(n), geometry.norms.dual))
        if np.all(fs.contains(a)):
            x_star = a.copy()
        elif fs.kind == "box":
            x_star = np.clip(a, fs.lo, fs.hi)
        else:
            x_star = _solve_abs_sum(a, fs)
        obj = cls("abs_sum", {"a": a}, smoothness_class="C00", L0=L0,
                  K1=float(np.sqrt(n)), f_star=0.0, x_star=x_star, n=n)
        obj.f_star = float(obj.value(x_star))
        return obj

    @classmethod
    def log_sum_exp(cls, a, scale, geometry, mu=0.0):
        """Smooth surrogate of ``max_i |x_i - a_i|``.

        ``f(x) = log(sum_i exp(s(x_i - a_i)) + exp(-s(x_i - a_i))) / s``;
        its minimum over R^n is ``log(2n)/s`` at ``x = a``.
        """
        n = geometry.n
        a = check_vector(a, n, name="a")
        s = check_scalar(scale, "scale", min_val=0.0, include_min=False)
        fs = geometry.feasible_set
        L1 = s if geometry.norms.primal in ("l2", "l1") else 2.0 * s
        if np.all(fs.contains(a)):
            x_star = a.copy()
        else:
            probe = cls("log_sum_exp", {"a": a, "scale": s}, smoothness_class="C11",
                        L0=1.0, L1=L1, G=1.0, K1=1.0, f_star=0.0, x_star=a, n=n)
            x_star = _solve_smooth(lambda v: float(probe.value(v)),
                                   lambda v: probe.gradient(v), fs, a)
        obj = cls("log_sum_exp", {"a": a, "scale": s}, smoothness_class="C11",
                  L0=1.0, L1=L1, G=1.0, K1=1.0, f_star=0.0, x_star=x_star, n=n)
        obj.f_star = float(obj.value(x_star))
        return obj


def _solve_smooth(fun, jac, fs, start):
    x0 = _project_into(fs, np.asarray(start, dtype=float))
    bounds, cons = _set_constraints(fs)
    res = minimize(fun, x0, jac=jac, method="SLSQP", bounds=bounds,
                   constraints=cons, options={"ftol": 1e-15, "maxiter": 1000})
    return _project_into(fs, res.x)


def _solve_abs_sum(a, fs):
    # epigraph form: min sum(t) s.t. -t <= x - a <= t, x in the set
    n = fs.n
    x0 = _project_into(fs, a)
    v0 = np.concatenate([x0, np.abs(x0 - a) + 1e-3])
    bounds, cons = _set_constraints(fs, nvar=2 * n)
    I = np.eye(n)
    cons.append({"type": "ineq", "fun": lambda v: v[n:] - (v[:n] - a),
                 "jac": lambda v: np.hstack([-I, I])})
    cons.append({"type": "ineq", "fun": lambda v: v[n:] + (v[:n] - a),
                 "jac": lambda v: np.hstack([I, I])})
    res = minimize(lambda v: np.sum(v[n:]), v0,
                   jac=lambda v: np.concatenate([np.zeros(n), np.ones(n)]),
                   method="SLSQP", bounds=bounds, constraints=cons,
                   options={"ftol": 1e-15, "maxiter": 1000})
    return _project_into(fs, res.x[:n])


class NoiseModel:
    """Scalar noise law ``e(x) = b(x) + sd * xi`` with ``xi ~ N(0, 1)``.

    Parameters
    ----------
    kind : {"none", "additive_gaussian", "biased"}
    sd : float
        Standard deviation of the zero-mean part.
    B : float
        Bound on ``|b(x)|``; only used by ``"biased"``.
    bias_field : callable, optional
        Maps points of shape (..., n) to biases of shape (...). Defaults to
        ``B * sin(sum(x))``.
    V : float, optional
        Declared bound with ``E[e(x)^2] <= V**2``. Defaults to the smallest
        valid value ``sqrt(B**2 + sd**2)``. A smaller value may be declared
        (for negative controls); see :meth:`is_consistent`.
    """

    KINDS = ("none", "additive_gaussian", "biased")

    def __init__(self, kind="none", sd=0.0, B=0.0, bias_field=None, V=None):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown noise kind {kind!r}; expected one of {self.KINDS}")
        sd = check_scalar(sd, "sd", min_val=0.0)
        B = check_scalar(B, "B", min_val=0.0)
        if kind == "none":
            sd, B = 0.0, 0.0
        elif kind == "additive_gaussian":
            B = 0.0
        self.kind = kind
        self.sd = sd
        self.B = B
        if kind == "biased":
            self.bias_field = bias_field if bias_field is not None else self._sine_bias
        else:
            self.bias_field = None
        self.V = (float(np.hypot(B, sd)) if V is None
                  else check_scalar(V, "V", min_val=0.0))

    def __repr__(self):
        return f"NoiseModel({self.kind!r}, sd={self.sd}, B={self.B}, V={self.V})"

    def _sine_bias(self, X):
        return self.B * np.sin(np.sum(X, axis=-1))

    def bias(self, X):
        X = np.asarray(X, dtype=float)
        if self.bias_field is None:
            return np.zeros(X.shape[:-1])
        return np.asarray(self.bias_field(X), dtype=float)

    def sample(self, X, xi):
        """Noise at points ``X`` given standard normal draws ``xi``."""
        return self.bias(X) + self.sd * np.asarray(xi, dtype=float)

    def draw(self, X, rng):
        X = np.asarray(X, dtype=float)
        return self.sample(X, rng.standard_normal(X.shape[:-1]))

    def is_consistent(self):
        """True when the declared V dominates ``B**2 + sd**2``."""
        return self.B ** 2 + self.sd ** 2 <= self.V ** 2 * (1 + 1e-12)


def evaluate_exact(obj, x):
    out = obj.value(x)
    return float(out) if np.ndim(out) == 0 else out


def gradient_exact(obj, x):
    return obj.gradient(x)


def evaluate_noisy(obj, nm, x, rng):
    """One oracle query: ``f(x)`` plus an independent draw of the noise."""
    x = np.asarray(x, dtype=float)
    out = obj.value(x) + nm.draw(x, rng)
    return float(out) if np.ndim(out) == 0 else out
