"""Two-point Gaussian-smoothing gradient estimator and its reference checks.

The estimator draws ``u ~ N(0, I)`` and queries the oracle twice with
independent noise::

    g = (f_hat(x + mu u) - f_hat(x)) / mu * u

Its conditional mean is the gradient of the Gaussian smoothing
``f_mu(x) = E[f(x + mu u)]`` plus a bias term driven by the oracle bias.
The ``*_ref`` functions estimate ``f_mu`` and its gradient by plain Monte
Carlo so that the estimator can be checked against an independent route.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import ConfigurationError, check_count, check_scalar, check_vector
from .analysis import compute_bias_bound, compute_second_moment_bound
from .streams import REFERENCE, as_streams, substream

PASS_SIGMAS = 4.0
_CHUNK = 1 << 16


@dataclass(frozen=True)
class NgaConfig:
    mu: float
    n: int

    def __post_init__(self):
        check_scalar(self.mu, "mu", min_val=0.0, include_min=False)
        check_count(self.n, "n")


@dataclass
class GradientSample:
    g_tilde: np.ndarray
    u: np.ndarray
    f_hat_far: float
    f_hat_near: float


def sample_direction(rng, n):
    """A standard normal direction in R^n."""
    return np.random.default_rng(rng).standard_normal(check_count(n, "n"))


def two_point_estimate(obj, nm, X, mu, U, xi_far, xi_near):
    """Vectorised estimator given pre-drawn directions and noise draws.

    Returns ``(g, f_hat_far, f_hat_near)`` for every row of ``X``.
    """
    far = X + mu * U
    f_far = obj.value(far) + nm.sample(far, xi_far)
    f_near = obj.value(X) + nm.sample(X, xi_near)
    g = ((f_far - f_near) / mu)[..., None] * U
    return g, f_far, f_near


def estimate_gradient(obj, nm, x, cfg, rng):
    """One draw of the two-point estimator at ``x``.

    ``rng`` may be a seed, a Generator or a :class:`TrialStreams`; the
    direction and the two noise draws come from distinct sub-streams.
    """
    x = check_vector(x, cfg.n)
    streams = as_streams(rng)
    u = streams.direction.standard_normal(cfg.n)
    xi_far = streams.noise_far.standard_normal()
    xi_near = streams.noise_near.standard_normal()
    g, f_far, f_near = two_point_estimate(obj, nm, x, cfg.mu, u, xi_far, xi_near)
    return GradientSample(g_tilde=g, u=u, f_hat_far=float(f_far),
                          f_hat_near=float(f_near))


def _chunks(total):
    done = 0
    while done < total:
        size = min(_CHUNK, total - done)
        yield size
        done += size


def smoothed_value_ref(obj, x, mu, samples, rng):
    """Monte Carlo estimate of ``f_mu(x)``; returns ``(mean, stderr)``."""
    x = check_vector(x, obj.n)
    samples = check_count(samples, "samples", min_val=1000)
    rng = np.random.default_rng(rng)
    s1 = s2 = 0.0
    for size in _chunks(samples):
        v = obj.value(x + mu * rng.standard_normal((size, obj.n)))
        s1 += v.sum()
        s2 += (v * v).sum()
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, float(np.sqrt(var / samples))


def smoothed_gradient_ref(obj, x, mu, samples, rng):
    """Monte Carlo estimate of ``grad f_mu(x) = E[u f(x + mu u)] / mu``.

    The control variate ``u f(x)`` (mean zero) is subtracted from every
    term. Returns ``(mean, stderr)`` as two vectors.
    """
    x = check_vector(x, obj.n)
    samples = check_count(samples, "samples", min_val=1000)
    rng = np.random.default_rng(rng)
    f0 = obj.value(x)
    s1 = np.zeros(obj.n)
    s2 = np.zeros(obj.n)
    for size in _chunks(samples):
        U = rng.standard_normal((size, obj.n))
        T = ((obj.value(x + mu * U) - f0) / mu)[:, None] * U
        s1 += T.sum(axis=0)
        s2 += (T * T).sum(axis=0)
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, np.sqrt(var / samples)


@dataclass
class EstimatorReport:
    """Empirical estimator statistics next to their theoretical bounds."""

    mu: float
    x: list
    samples: int
    empirical_bias_dual_norm: float
    bias_se: float
    bias_bound: float
    empirical_second_moment: float
    second_moment_se: float
    second_moment_bound: float
    second_moment_bound_variants: dict = field(default_factory=dict)

    @property
    def bias_pass(self):
        return bool(self.empirical_bias_dual_norm <= self.bias_bound + PASS_SIGMAS * self.bias_se)

    @property
    def second_moment_pass(self):
        return bool(self.empirical_second_moment
                    <= self.second_moment_bound + PASS_SIGMAS * self.second_moment_se)

    @property
    def variants_passing(self):
        tol = PASS_SIGMAS * self.second_moment_se
        return {k: bool(self.empirical_second_moment <= v + tol)
                for k, v in self.second_moment_bound_variants.items()}

    @property
    def passed(self):
        return self.bias_pass and self.second_moment_pass

    def to_dict(self):
        out = asdict(self)
        out.update(bias_pass=self.bias_pass, second_moment_pass=self.second_moment_pass,
                   variants_passing=self.variants_passing)
        return out


def moment_params(obj, nm, geometry, mu):
    """Keyword arguments for :func:`compute_second_moment_bound`."""
    if obj.smoothness_class == "C11" and (obj.L1 is None or obj.G is None):
        raise ConfigurationError("a C11 objective needs both L1 and G declared")
    if obj.smoothness_class == "C00" and obj.L0 is None:
        raise ConfigurationError("a C00 objective needs L0 declared")
    return dict(kappa1=geometry.kappa1, kappa2=geometry.kappa2, n=geometry.n,
                mu=mu, V=nm.V, L0=obj.L0, L1=obj.L1, G=obj.G)


def verify_estimator_bounds(obj, nm, geometry, x, cfg, samples, rng,
                            ref_samples=None, moment_variant="L1_squared"):
    """Compare estimator bias and second moment with their bounds at ``x``.

    Parameters
    ----------
    obj, nm, geometry :
        Objective, noise law and geometry (for norms and kappas).
    x : array_like
        Probe point.
    cfg : NgaConfig
    samples : int
        Number of estimator draws, at least 10**4.
    rng : int or TrialStreams
        Source of the estimator draws; the reference gradient uses a
        separate sub-stream.
    ref_samples : int, optional
        Draws for the reference gradient; defaults to ``samples``.

    Returns
    -------
    EstimatorReport
    """
    x = check_vector(x, cfg.n)
    samples = check_count(samples, "samples", min_val=10_000)
    ref_samples = samples if ref_samples is None else ref_samples
    params = moment_params(obj, nm, geometry, cfg.mu)
    streams = as_streams(rng)
    dual = geometry.norms.dual_norm

    s1 = np.zeros(cfg.n)
    s2 = np.zeros(cfg.n)
    m1 = m2 = 0.0
    for size in _chunks(samples):
        U = streams.direction.standard_normal((size, cfg.n))
        g, _, _ = two_point_estimate(obj, nm, np.broadcast_to(x, (size, cfg.n)), cfg.mu, U,
                                     streams.noise_far.standard_normal(size),
                                     streams.noise_near.standard_normal(size))
        s1 += g.sum(axis=0)
        s2 += (g * g).sum(axis=0)
        q = dual(g) ** 2
        m1 += q.sum()
        m2 += (q * q).sum()
    g_mean = s1 / samples
    g_var = np.maximum(s2 / samples - g_mean ** 2, 0.0) * samples / (samples - 1)
    q_mean = m1 / samples
    q_var = max(m2 / samples - q_mean ** 2, 0.0) * samples / (samples - 1)

    # reference route: an independent stream keyed after the three call streams
    ref_rng = substream(streams.master_seed, *streams.prefix, streams.trial, REFERENCE)
    ref, ref_se = smoothed_gradient_ref(obj, x, cfg.mu, ref_samples, ref_rng)

    bias_se = float(dual(np.sqrt(g_var / samples + ref_se ** 2)))
    variants = {}
    names = ("L1_squared", "L1_printed") if obj.smoothness_class == "C11" else (
        "printed", "fourth_moment")
    for variant in names:
        variants[variant] = compute_second_moment_bound(obj.smoothness_class, variant=variant,
                                                        **params)
    bound = compute_second_moment_bound(obj.smoothness_class, variant=moment_variant, **params)
    return EstimatorReport(
        mu=cfg.mu, x=x.tolist(), samples=samples,
        empirical_bias_dual_norm=float(dual(g_mean - ref)),
        bias_se=bias_se,
        bias_bound=compute_bias_bound(geometry.kappa1, nm.B, cfg.n, cfg.mu),
        empirical_second_moment=float(q_mean),
        second_moment_se=float(np.sqrt(q_var / samples)),
        second_moment_bound=bound,
        second_moment_bound_variants=variants)
