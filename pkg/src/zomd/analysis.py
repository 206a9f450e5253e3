"""Closed-form constants, convergence neighbourhoods and concentration bounds.

Everything here is a pure computation except
:func:`empirical_convergence_probability`, which runs a seeded ensemble
to estimate how often the averaged iterate ends inside the neighbourhood.

Notation used in names:

``delta``
    offset for which the smoothed gradient is a delta-subgradient;
``B1``
    bound on the dual norm of the estimator bias;
``K``
    bound on the conditional second moment of the estimator (dual norm);
``K1``
    bound on the l2 norm of the delta-subgradient over the set;
``C``
    bound on the second moment of the martingale noise term.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from ._validation import (ConfigurationError, PreconditionError, ScanLimitError,
                          check_count, check_scalar)

DELTA_VARIANTS = ("sqrt_n", "n")
C_VARIANTS = ("squared", "printed")
MOMENT_VARIANTS = ("L1_squared", "L1_printed")

SCAN_CAP = 10 ** 9
_FIRST_CHUNK = 4096
_MAX_CHUNK = 1 << 20


def compute_delta(smoothness_class, mu, L, n, variant="sqrt_n"):
    """Offset ``delta`` such that ``grad f_mu(x)`` is a delta-subgradient.

    ``C00``: ``mu L0 sqrt(n)``. ``C11``: ``mu^2 L1 sqrt(n) / 2`` by default,
    or ``mu^2 L1 n / 2`` with ``variant="n"``.
    """
    mu = check_scalar(mu, "mu", min_val=0.0)
    L = check_scalar(L, "L", min_val=0.0)
    n = check_count(n, "n")
    if smoothness_class == "C00":
        return mu * L * np.sqrt(n)
    if smoothness_class != "C11":
        raise ConfigurationError(f"unknown smoothness class {smoothness_class!r}")
    if variant not in DELTA_VARIANTS:
        raise ConfigurationError(f"unknown delta variant {variant!r}")
    dim = np.sqrt(n) if variant == "sqrt_n" else float(n)
    return 0.5 * mu * mu * L * dim


def compute_bias_bound(kappa1, B, n, mu):
    """``2 kappa1 B sqrt(n) / mu``."""
    mu = check_scalar(mu, "mu", min_val=0.0, include_min=False)
    B = check_scalar(B, "B", min_val=0.0)
    return 2.0 * kappa1 * B * np.sqrt(n) / mu


def compute_second_moment_bound(smoothness_class, *, kappa1, n, mu, V, L0=None,
                                L1=None, G=None, kappa2=1.0, variant="L1_squared"):
    """Bound on ``E[||g||_*^2]`` for the two-point estimator.

    ``C00``: ``kappa1^2 (2 L0^2 n + 8 (V/mu)^2 n)``. With
    ``variant="fourth_moment"`` the first term is ``2 L0^2 n (n + 2)``,
    which uses the exact Gaussian moment ``E||u||_2^4 = n (n + 2)``; the
    default form replaces that moment by ``n`` and can be exceeded near
    kinks of a nonsmooth objective.

    ``C11``: ``kappa1^2 (3/4 L1^2 mu^2 kappa2^4 (n+6)^3 + 3 G^2 (n+4)^2
    + 12 V^2 n / mu^2)``. With ``variant="L1_printed"`` the first term uses
    ``L1`` instead of ``L1^2``.
    """
    mu = check_scalar(mu, "mu", min_val=0.0, include_min=False)
    V = check_scalar(V, "V", min_val=0.0)
    k1sq = kappa1 * kappa1
    if smoothness_class == "C00":
        if L0 is None:
            raise ConfigurationError("C00 second-moment bound needs L0")
        u4 = n * (n + 2) if variant == "fourth_moment" else n
        return k1sq * (2.0 * L0 ** 2 * u4 + 8.0 * (V / mu) ** 2 * n)
    if smoothness_class != "C11":
        raise ConfigurationError(f"unknown smoothness class {smoothness_class!r}")
    if L1 is None or G is None:
        raise ConfigurationError("C11 second-moment bound needs both L1 and G")
    if variant not in MOMENT_VARIANTS:
        raise ConfigurationError(f"unknown second-moment variant {variant!r}")
    lip = L1 ** 2 if variant == "L1_squared" else L1
    return k1sq * (0.75 * lip * mu ** 2 * kappa2 ** 4 * (n + 6) ** 3
                   + 3.0 * G ** 2 * (n + 4) ** 2 + 12.0 * V ** 2 * n / mu ** 2)


@dataclass
class TheoryParams:
    smoothness_class: str
    n: int
    mu: float
    kappa1: float
    kappa2: float
    D: float
    sigma_R: float
    B: float
    V: float
    L0: float
    L1: float
    G: float
    delta: float
    B1: float
    K: float
    K1: float
    C: float
    variants: dict = field(default_factory=dict)

    @classmethod
    def from_problem(cls, obj, nm, geometry, mu, *, delta_variant="sqrt_n",
                     c_variant="squared", moment_variant="L1_squared"):
        """Derive every constant for a problem at smoothing radius ``mu``."""
        if c_variant not in C_VARIANTS:
            raise ConfigurationError(f"unknown C variant {c_variant!r}")
        klass = obj.smoothness_class
        n = geometry.n
        L = obj.L0 if klass == "C00" else obj.L1
        delta = compute_delta(klass, mu, L, n, variant=delta_variant)
        B1 = compute_bias_bound(geometry.kappa1, nm.B, n, mu)
        K = compute_second_moment_bound(
            klass, kappa1=geometry.kappa1, kappa2=geometry.kappa2, n=n, mu=mu,
            V=nm.V, L0=obj.L0, L1=obj.L1, G=obj.G, variant=moment_variant)
        K1 = obj.K1
        C = compute_C(geometry.kappa1, K, B1, K1, variant=c_variant)
        return cls(smoothness_class=klass, n=n, mu=float(mu), kappa1=geometry.kappa1,
                   kappa2=geometry.kappa2, D=geometry.diameter, sigma_R=geometry.sigma_R,
                   B=nm.B, V=nm.V, L0=obj.L0, L1=obj.L1, G=obj.G, delta=delta,
                   B1=B1, K=K, K1=K1, C=C,
                   variants={"delta": delta_variant, "C": c_variant,
                             "second_moment": moment_variant})

    @property
    def radius(self):
        return neighborhood_radius(self)

    def to_dict(self):
        return asdict(self)


def compute_C(kappa1, K, B1, K1, variant="squared"):
    """``3 kappa1^2 (K + B1^2 + K1^2)``; ``variant="printed"`` uses ``K1``."""
    k1_term = K1 * K1 if variant == "squared" else K1
    return 3.0 * kappa1 ** 2 * (K + B1 ** 2 + k1_term)


def neighborhood_radius(tp):
    """Asymptotic suboptimality floor ``delta + B1 D``."""
    return tp.delta + tp.B1 * tp.D


def radius_at(smoothness_class, mu, L, kappa1, B, D, n, delta_variant="sqrt_n"):
    """Neighbourhood radius as a function of ``mu`` for fixed constants."""
    bias = compute_bias_bound(kappa1, B, n, mu) * D
    return compute_delta(smoothness_class, mu, L, n, variant=delta_variant) + bias


def optimal_mu(smoothness_class, L, kappa1, B, D, n, delta_variant="sqrt_n"):
    """Smoothing radius minimising :func:`radius_at`.

    ``C00``: ``sqrt(2 kappa1 B D / L0)``. ``C11``: ``(2 kappa1 B D / L1)^(1/3)``,
    divided by ``n^(1/6)`` under the ``"n"`` delta variant.
    """
    B = check_scalar(B, "B", min_val=0.0)
    L = check_scalar(L, "L", min_val=0.0, include_min=False)
    if B == 0:
        raise ValueError("optimal mu requires B > 0; with an unbiased oracle the "
                         "radius is increasing in mu and has no interior minimum")
    num = 2.0 * kappa1 * B * D
    if smoothness_class == "C00":
        return float(np.sqrt(num / L))
    if smoothness_class != "C11":
        raise ConfigurationError(f"unknown smoothness class {smoothness_class!r}")
    if delta_variant == "n":
        return float(np.cbrt(num / (L * np.sqrt(n))))
    return float(np.cbrt(num / L))


# -- partial sums of the step sizes -----------------------------------------

# indices up to this are summed term by term; beyond it power-law
# schedules switch to an Euler-Maclaurin expansion
EXACT_LIMIT = 1 << 20
_EM_ANCHOR = 4096
_BERNOULLI = (1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0)


def _is_power_law(sched):
    return hasattr(sched, "a") and hasattr(sched, "p")


def iter_partial_sums(sched, cap=SCAN_CAP):
    """Yield ``(t, S1, S2)`` array chunks with ``S1(t) = sum alpha``, ``S2(t) = sum alpha^2``.

    Running sums are carried in extended precision (``np.longdouble``) so
    that the relative error stays near double rounding.
    """
    base1 = np.longdouble(0.0)
    base2 = np.longdouble(0.0)
    start = 1
    size = _FIRST_CHUNK
    while start <= cap:
        stop = min(start + size, cap + 1)
        ts = np.arange(start, stop, dtype=np.int64)
        a = sched.alphas(ts).astype(np.longdouble)
        c1 = base1 + np.cumsum(a)
        c2 = base2 + np.cumsum(a * a)
        yield ts, c1, c2
        base1, base2 = c1[-1], c2[-1]
        start = stop
        size = min(2 * size, _MAX_CHUNK)


def power_sum(s, t, anchor=_EM_ANCHOR):
    """``sum_{k=1}^{t} k**(-s)`` for integer ``t >= anchor``.

    The head below ``anchor`` is summed directly; the tail uses the
    Euler-Maclaurin formula with four Bernoulli corrections, whose
    remainder is far below double rounding at this anchor.
    """
    t = np.asarray(t, dtype=float)
    N = float(anchor)
    head = float(np.sum(np.arange(1, anchor, dtype=np.longdouble) ** np.longdouble(-s)))
    log_ratio = np.log(t / N)
    if s == 1.0:
        integral = log_ratio
    else:
        integral = N ** (1.0 - s) * np.expm1((1.0 - s) * log_ratio) / (1.0 - s)
    tail = integral + 0.5 * (N ** -s + t ** -s)
    rising = s
    fact = 2.0
    for j, b in enumerate(_BERNOULLI, start=1):
        r = 2 * j - 1
        if j > 1:
            rising *= (s + r - 2) * (s + r - 1)
            fact *= (2 * j - 1) * (2 * j)
        # f^(r)(x) = -rising * x**(-s-r) for odd r
        tail = tail - b / fact * rising * (t ** (-s - r) - N ** (-s - r))
    return head + tail


def _closed_partial_sums(sched, ts):
    ts = np.asarray(ts, dtype=float)
    return (sched.a * power_sum(sched.p, ts),
            sched.a ** 2 * power_sum(2.0 * sched.p, ts))


def partial_sums(sched, ts):
    """``(S1, S2)`` evaluated at the iteration indices ``ts`` (any order).

    Indices up to ``EXACT_LIMIT`` are summed forward; larger ones use the
    closed-form expansion when the schedule is a power law.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=np.int64))
    if np.any(ts < 1):
        raise ValueError("iteration indices start at 1")
    out1 = np.empty(ts.shape[0])
    out2 = np.empty(ts.shape[0])
    far = ts > EXACT_LIMIT if _is_power_law(sched) else np.zeros(ts.shape, bool)
    if far.any():
        out1[far], out2[far] = _closed_partial_sums(sched, ts[far])
    near = np.flatnonzero(~far)
    if near.size:
        order = near[np.argsort(ts[near])]
        j = 0
        for chunk_t, c1, c2 in iter_partial_sums(sched, cap=int(ts[order[-1]])):
            lo, hi = chunk_t[0], chunk_t[-1]
            while j < len(order) and ts[order[j]] <= hi:
                k = ts[order[j]] - lo
                out1[order[j]] = float(c1[k])
                out2[order[j]] = float(c2[k])
                j += 1
    return out1, out2


def first_index(sched, condition, cap=SCAN_CAP):
    """Smallest ``t`` with ``condition(S1, S2)`` true.

    ``condition`` must be vectorised and, once true, stay true as ``t``
    grows. Indices up to ``EXACT_LIMIT`` are scanned forward; beyond that
    a power-law schedule is searched by bisection on the closed-form sums
    (other schedules keep scanning). Raises :class:`ScanLimitError` when
    ``cap`` is reached.
    """
    last = None
    exact_cap = min(cap, EXACT_LIMIT) if _is_power_law(sched) else cap
    for ts, c1, c2 in iter_partial_sums(sched, cap=exact_cap):
        hit = np.asarray(condition(c1, c2))
        if hit.any():
            return int(ts[np.argmax(hit)])
        last = (int(ts[-1]), float(c1[-1]), float(c2[-1]))
    if exact_cap < cap:
        def holds(t):
            s1, s2 = _closed_partial_sums(sched, [t])
            return bool(np.asarray(condition(s1, s2))[0])

        lo = hi = exact_cap
        while hi < cap:
            lo, hi = hi, min(2 * hi, cap)
            if holds(hi):
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if holds(mid):
                        hi = mid
                    else:
                        lo = mid
                return int(hi)
        s1, s2 = _closed_partial_sums(sched, [cap])
        last = (cap, float(s1[0]), float(s2[0]))
    raise ScanLimitError(
        f"no iteration up to {cap} satisfies the condition "
        f"(sum alpha = {last[1]:.6g}, sum alpha^2 = {last[2]:.6g} at t = {last[0]})",
        t=last[0], sum_alpha=last[1], sum_alpha_sq=last[2])


def burn_in_index(sched, epsilon, D, cap=SCAN_CAP):
    """First ``t`` with ``sum_{k<=t} alpha(k) >= 3 D / epsilon``."""
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    target = 3.0 * D / epsilon
    return first_index(sched, lambda s1, s2: s1 >= target, cap=cap)


def _concentration_raw(s1, s2, epsilon, K, C, D):
    return 3.0 * K / epsilon * s2 / s1 + 9.0 * C * D / epsilon ** 2 * s2 / (s1 * s1)


def concentration_bound(t, epsilon, sched, tp, clip=True):
    """Upper bound on ``P(f(z_t) - f* >= delta + B1 D + epsilon)``.

    Valid for ``t >= t0`` with ``t0`` from :func:`burn_in_index`; below it
    a :class:`PreconditionError` carrying ``t0`` is raised. The value is
    clipped to ``[0, 1]`` unless ``clip`` is False.
    """
    t = check_count(t, "t")
    t0 = burn_in_index(sched, epsilon, tp.D)
    if t < t0:
        raise PreconditionError(
            f"concentration bound requires t >= t0 = {t0}, got t = {t}", t0=t0)
    s1, s2 = partial_sums(sched, [t])
    raw = float(_concentration_raw(s1[0], s2[0], epsilon, tp.K, tp.C, tp.D))
    return min(1.0, max(0.0, raw)) if clip else raw


def concentration_curve(ts, epsilon, sched, tp, clip=True):
    """Vectorised :func:`concentration_bound` over indices ``ts >= t0``."""
    ts = np.asarray(ts, dtype=np.int64)
    t0 = burn_in_index(sched, epsilon, tp.D)
    if np.any(ts < t0):
        raise PreconditionError(f"curve points must satisfy t >= t0 = {t0}", t0=t0)
    s1, s2 = partial_sums(sched, ts)
    raw = _concentration_raw(s1, s2, epsilon, tp.K, tp.C, tp.D)
    return np.clip(raw, 0.0, 1.0) if clip else raw


def min_iterations_for_confidence(p, epsilon, sched, tp, cap=SCAN_CAP):
    """Smallest ``t`` after which the averaged iterate is inside the
    neighbourhood with probability at least ``p``.

    With ``q = 1 - p`` the scan requires, at ``t``::

        sum alpha   >= 3 D / epsilon
        sum alpha   >= 6 K / (epsilon q) * sum alpha^2
        (sum alpha)^2 >= 18 C D / (epsilon^2 q) * sum alpha^2

    All three are monotone in ``t`` for decreasing steps, so the first
    index satisfying them is ``max(t0, t1)``.
    """
    p = check_scalar(p, "p", min_val=0.0, max_val=1.0, include_min=False,
                     include_max=False)
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False)
    q = 1.0 - p
    burn = 3.0 * tp.D / epsilon
    c_k = 6.0 * tp.K / (epsilon * q)
    c_c = 18.0 * tp.C * tp.D / (epsilon ** 2 * q)

    def ok(s1, s2):
        return (s1 >= burn) & (s1 >= c_k * s2) & (s1 * s1 >= c_c * s2)

    return first_index(sched, ok, cap=cap)


def confidence_conditions(t, p, epsilon, sched, tp):
    """The three conditions of :func:`min_iterations_for_confidence` at ``t``."""
    q = 1.0 - p
    s1, s2 = partial_sums(sched, [t])
    s1, s2 = s1[0], s2[0]
    return (s1 >= 3.0 * tp.D / epsilon,
            s1 >= 6.0 * tp.K / (epsilon * q) * s2,
            s1 * s1 >= 18.0 * tp.C * tp.D / (epsilon ** 2 * q) * s2)


@dataclass
class BoundReport:
    neighborhood_radius: float
    epsilon: float
    t0: int
    concentration_curve: list
    t_confidence: dict

    def to_dict(self):
        return asdict(self)


def bound_report(tp, sched, epsilon, T, confidences=(), points=25):
    """Radius, burn-in, a log-spaced concentration curve and confidence counts.

    The curve spans ``[t0, max(T, 2 t0)]``. Confidence levels whose scan
    hits the cap map to ``None``.
    """
    t0 = burn_in_index(sched, epsilon, tp.D)
    hi = max(int(T), 2 * t0)
    ts = np.unique(np.round(np.geomspace(t0, hi, points)).astype(np.int64))
    ts = np.unique(np.concatenate([ts, [hi]] + ([[int(T)]] if T >= t0 else [])))
    raw = concentration_curve(ts, epsilon, sched, tp, clip=False)
    curve = [[int(t), float(min(1.0, v))] for t, v in zip(ts, raw)]
    t_conf = {}
    for p in confidences:
        try:
            t_conf[repr(float(p))] = min_iterations_for_confidence(p, epsilon, sched, tp)
        except ScanLimitError:
            t_conf[repr(float(p))] = None
    return BoundReport(neighborhood_radius=neighborhood_radius(tp), epsilon=float(epsilon),
                       t0=t0, concentration_curve=curve, t_confidence=t_conf)


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def empirical_convergence_probability(experiment, t, epsilon, trials, master_seed,
                                      tp=None):
    """Fraction of seeded trials with ``f(z_t) - f* < delta + B1 D + epsilon``.

    Returns ``(fraction, (low, high))`` with a 95% Wilson interval.
    """
    from .solver import run_ensemble

    trials = check_count(trials, "trials")
    if trials < 30:
        raise PreconditionError(f"need at least 30 trials, got {trials}", trials=trials)
    if tp is None:
        tp = experiment.theory()
    summaries = run_ensemble(experiment.with_horizon(t), trials, master_seed)
    inside = sum(s.final_gap < neighborhood_radius(tp) + epsilon for s in summaries)
    return inside / trials, wilson_interval(inside, trials)
