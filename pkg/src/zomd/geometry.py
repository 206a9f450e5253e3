"""Norm pairs, feasible sets, mirror maps and the Bregman proximal step.

Only three (mirror map, feasible set) pairings are supported, each of which
admits an exact closed-form proximal step:

* ``euclidean`` on a ``box``: componentwise clipping of a gradient step,
* ``euclidean`` on a ``ball``: radial projection of a gradient step,
* ``negative_entropy`` on the ``simplex``: the exponentiated-gradient update.

All functions accept points stacked along leading axes; the last axis is
always the coordinate axis.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from ._validation import (ConfigurationError, DomainError, check_points,
                          check_scalar, check_vector)

NORMS = ("l1", "l2", "linf")
_DUAL = {"l1": "linf", "l2": "l2", "linf": "l1"}

# Entropy iterates are floored here before taking logarithms.
ENTROPY_FLOOR = 1e-300
MEMBERSHIP_TOL = 1e-12


def vector_norm(v, kind):
    """Norm of ``v`` along its last axis; ``kind`` is one of ``NORMS``."""
    v = np.asarray(v, dtype=float)
    if kind == "l2":
        return np.sqrt(np.sum(v * v, axis=-1))
    if kind == "l1":
        return np.sum(np.abs(v), axis=-1)
    if kind == "linf":
        return np.max(np.abs(v), axis=-1)
    raise ConfigurationError(f"unknown norm {kind!r}; expected one of {NORMS}")


def _l2_constant(kind, n):
    # tightest c with ||v||_2 <= c ||v||_kind in dimension n
    return float(np.sqrt(n)) if kind == "linf" else 1.0


@dataclass(frozen=True)
class NormPair:
    """A primal norm, its dual, and the constants relating both to l2.

    ``kappa1`` satisfies ``||v||_2 <= kappa1 * ||v||_*`` and ``kappa2``
    satisfies ``||v||_2 <= kappa2 * ||v||``; both are the tight constants
    for dimension ``n``.
    """

    primal: str
    n: int
    dual: str = field(init=False)
    kappa1: float = field(init=False)
    kappa2: float = field(init=False)

    def __post_init__(self):
        if self.primal not in NORMS:
            raise ConfigurationError(
                f"unknown norm {self.primal!r}; expected one of {NORMS}")
        if int(self.n) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "dual", _DUAL[self.primal])
        object.__setattr__(self, "kappa1", _l2_constant(self.dual, self.n))
        object.__setattr__(self, "kappa2", _l2_constant(self.primal, self.n))

    @property
    def kappa(self):
        return self.kappa1 * self.kappa2

    def primal_norm(self, v):
        return vector_norm(v, self.primal)

    def dual_norm(self, v):
        return vector_norm(v, self.dual)


def dual_norm_of(v, norms):
    """Dual norm ``sup{<v, y> : ||y|| <= 1}`` of a single vector."""
    v = check_vector(v, norms.n, name="v")
    return float(norms.dual_norm(v))


class FeasibleSet:
    """A compact convex feasible set: a box, a Euclidean ball or the simplex.

    Use the ``box``, ``ball`` and ``simplex`` constructors.
    """

    def __init__(self, kind, n, *, lo=None, hi=None, center=None, radius=None):
        self.kind = kind
        self.n = int(n)
        if kind == "box":
            self.lo = check_vector(lo, self.n, name="lo")
            self.hi = check_vector(hi, self.n, name="hi")
            if np.any(self.lo > self.hi):
                raise ValueError("box requires lo <= hi componentwise")
        elif kind == "ball":
            self.center = check_vector(center, self.n, name="center")
            self.radius = check_scalar(radius, "radius", min_val=0.0,
                                       include_min=False)
        elif kind == "simplex":
            if self.n < 2:
                raise ValueError("simplex requires n >= 2")
        else:
            raise ConfigurationError(
                f"unknown feasible set {kind!r}; expected box, ball or simplex")

    @classmethod
    def box(cls, lo, hi, n=None):
        if n is None:
            n = np.size(lo) if np.ndim(lo) else np.size(hi)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
        return cls("box", n, lo=lo, hi=hi)

    @classmethod
    def ball(cls, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls("ball", center.shape[0], center=center, radius=radius)

    @classmethod
    def simplex(cls, n):
        return cls("simplex", n)

    def __repr__(self):
        if self.kind == "box":
            return f"FeasibleSet.box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"
        if self.kind == "ball":
            return (f"FeasibleSet.ball(center={self.center.tolist()}, "
                    f"radius={self.radius})")
        return f"FeasibleSet.simplex({self.n})"

    def diameter(self, norm="l2"):
        """Exact diameter of the set measured in ``norm``."""
        if norm not in NORMS:
            raise ConfigurationError(f"unknown norm {norm!r}")
        if self.kind == "box":
            return float(vector_norm(self.hi - self.lo, norm))
        if self.kind == "ball":
            # extreme pair is +-radius along the direction maximising the
            # norm ratio to l2
            scale = {"l2": 1.0, "linf": 1.0, "l1": np.sqrt(self.n)}[norm]
            return float(2.0 * self.radius * scale)
        # simplex: extreme pair is two distinct vertices
        return {"l1": 2.0, "l2": float(np.sqrt(2.0)), "linf": 1.0}[norm]

    def contains(self, x, tol=MEMBERSHIP_TOL):
        """Membership test along the last axis, to absolute tolerance ``tol``."""
        x = check_points(x, self.n)
        if self.kind == "box":
            return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)
        if self.kind == "ball":
            return vector_norm(x - self.center, "l2") <= self.radius + tol
        return np.all(x >= -tol, axis=-1) & (np.abs(x.sum(axis=-1) - 1.0) <= tol)

    def bregman_center(self):
        """Box midpoint, ball center or the uniform distribution."""
        if self.kind == "box":
            return 0.5 * (self.lo + self.hi)
        if self.kind == "ball":
            return self.center.copy()
        return np.full(self.n, 1.0 / self.n)

    def sample(self, rng, size):
        """Draw ``size`` points uniformly from the set."""
        rng = np.random.default_rng(rng)
        if self.kind == "box":
            return self.lo + (self.hi - self.lo) * rng.random((size, self.n))
        if self.kind == "ball":
            d = rng.standard_normal((size, self.n))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            r = self.radius * rng.random(size) ** (1.0 / self.n)
            return self.center + d * r[:, None]
        return rng.dirichlet(np.ones(self.n), size=size)

    def bounding_box(self):
        """Lower and upper corners of the smallest enclosing box."""
        if self.kind == "box":
            return self.lo.copy(), self.hi.copy()
        if self.kind == "ball":
            return self.center - self.radius, self.center + self.radius
        return np.zeros(self.n), np.ones(self.n)


class MirrorMap:
    """Mirror map ``R`` with its gradient and Bregman divergence.

    ``euclidean`` is ``R(x) = ||x||_2^2 / 2``; ``negative_entropy`` is
    ``R(x) = sum x_i log x_i`` on the positive orthant.
    """

    KINDS = ("euclidean", "negative_entropy")

    def __init__(self, kind):
        if kind not in self.KINDS:
            raise ConfigurationError(
                f"unknown mirror map {kind!r}; expected one of {self.KINDS}")
        self.kind = kind

    def __repr__(self):
        return f"MirrorMap({self.kind!r})"

    def __eq__(self, other):
        return isinstance(other, MirrorMap) and other.kind == self.kind

    def __hash__(self):
        return hash(("MirrorMap", self.kind))

    def sigma(self, norm, n):
        """Strong-convexity modulus with respect to ``norm`` in dimension n.

        For the entropy the modulus holds on the simplex (Pinsker's
        inequality in l1, which dominates l2 and linf).
        """
        if norm not in NORMS:
            raise ConfigurationError(f"unknown norm {norm!r}")
        if self.kind == "euclidean":
            return 1.0 / n if norm == "l1" else 1.0
        return 1.0

    def _check_domain(self, x, name):
        if self.kind == "negative_entropy" and np.any(x < 0):
            raise DomainError(f"{name} has negative coordinates; outside entropy domain")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return 0.5 * np.sum(x * x, axis=-1)
        self._check_domain(x, "x")
        return np.sum(xlogy(x, x), axis=-1)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return x.copy()
        if np.any(x <= 0):
            raise DomainError("gradient of the entropy requires strictly positive coordinates")
        return np.log(x) + 1.0

    def divergence(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "euclidean":
            d = x - y
            return 0.5 * np.sum(d * d, axis=-1)
        self._check_domain(x, "x")
        if np.any(y <= 0):
            raise DomainError("y lies on the boundary of the entropy domain")
        # generalized KL; reduces to sum x log(x/y) when both sum to one
        return np.sum(xlogy(x, x) - xlogy(x, y) - x + y, axis=-1)


def bregman(mm, x, y):
    """Bregman divergence ``R(x) - R(y) - <grad R(y), x - y>``."""
    out = mm.divergence(x, y)
    return float(out) if np.ndim(out) == 0 else out


def three_point_gap(mm, x, y, z):
    """Residual of the three-point identity of Bregman divergences.

    Returns ``|D(z,y) - D(z,x) - D(x,y) - <grad R(x) - grad R(y), z - x>|``,
    which vanishes up to rounding for any valid triple.
    """
    lhs = mm.divergence(z, y) - mm.divergence(z, x) - mm.divergence(x, y)
    rhs = np.sum((mm.grad(x) - mm.grad(y)) * (np.asarray(z) - np.asarray(x)), axis=-1)
    out = np.abs(lhs - rhs)
    return float(out) if np.ndim(out) == 0 else out


_PAIRINGS = {("euclidean", "box"), ("euclidean", "ball"),
             ("negative_entropy", "simplex")}


def check_pairing(mm, fs):
    if (mm.kind, fs.kind) not in _PAIRINGS:
        raise ConfigurationError(
            f"mirror map {mm.kind!r} cannot be paired with a {fs.kind!r} set; "
            f"supported pairings are {sorted(_PAIRINGS)}")


def prox_step(mm, fs, x_t, g, alpha):
    """Exact minimiser over the set of ``<g, x - x_t> + D(x, x_t) / alpha``.

    Parameters
    ----------
    mm : MirrorMap
    fs : FeasibleSet
    x_t : array_like, shape (..., n)
        Current point(s), each inside ``fs``.
    g : array_like, shape (..., n)
        Linear term, typically a gradient estimate.
    alpha : float
        Step size, strictly positive.

    Returns
    -------
    ndarray, shape (..., n)
    """
    check_pairing(mm, fs)
    if not alpha > 0:
        raise ValueError(f"step size must be positive, got {alpha}")
    x_t = np.asarray(x_t, dtype=float)
    g = np.asarray(g, dtype=float)
    if fs.kind == "box":
        return np.clip(x_t - alpha * g, fs.lo, fs.hi)
    if fs.kind == "ball":
        d = x_t - alpha * g - fs.center
        r = np.sqrt(np.sum(d * d, axis=-1, keepdims=True))
        scale = np.minimum(1.0, fs.radius / np.maximum(r, np.finfo(float).tiny))
        return fs.center + d * scale
    w = np.log(np.maximum(x_t, ENTROPY_FLOOR)) - alpha * g
    w -= np.max(w, axis=-1, keepdims=True)
    y = np.exp(w)
    return y / np.sum(y, axis=-1, keepdims=True)


class Geometry:
    """A validated (mirror map, feasible set, norm pair) triple.

    Parameters
    ----------
    mirror_map : str or MirrorMap
    feasible_set : FeasibleSet
    norm : str, default="l2"
        Primal norm; the dual norm follows from it.
    """

    def __init__(self, mirror_map, feasible_set, norm="l2"):
        if isinstance(mirror_map, str):
            mirror_map = MirrorMap(mirror_map)
        check_pairing(mirror_map, feasible_set)
        self.mirror_map = mirror_map
        self.feasible_set = feasible_set
        self.norms = NormPair(norm, feasible_set.n)
        self.diameter = feasible_set.diameter(norm)
        self.sigma_R = mirror_map.sigma(norm, feasible_set.n)

    def __repr__(self):
        return (f"Geometry({self.mirror_map.kind!r}, {self.feasible_set!r}, "
                f"norm={self.norms.primal!r})")

    @property
    def n(self):
        return self.feasible_set.n

    @property
    def kappa1(self):
        return self.norms.kappa1

    @property
    def kappa2(self):
        return self.norms.kappa2

    def prox(self, x_t, g, alpha):
        return prox_step(self.mirror_map, self.feasible_set, x_t, g, alpha)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return self.feasible_set.contains(x, tol)

    def initial_point(self):
        return self.feasible_set.bregman_center()
