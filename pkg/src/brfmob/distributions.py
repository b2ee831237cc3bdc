"""The beta rank function (BRF) family and its two competitors.

The rank-size form is the discrete generalized beta (DGBD) function::

    x(r) = A * (N + 1 - r)**b / r**a,     r = 1..N

and the continuous BRF distribution is defined by its quantile function::

    x(u) = A * (1 - u)**b / u**a,         0 < u < 1

``x(u)`` is decreasing, so ``u`` is the upper-tail probability ``P(X > x)``
and ``F(x(u)) = 1 - u``. The log variable ``Z = log X`` has a unimodal
density with exponential tails of semilog slope ``1/b`` (left) and ``-1/a``
(right). With ``b = 0`` both forms reduce to the power law ``A / r**a``.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import special, stats

from . import kernels
from .errors import DomainError, NumericError, UnsupportedShapeError

CDF_TOL = 1e-12       # bisection width in logit(u); implies |du| < 2.5e-13
CDF_MAX_ITER = 200
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class DgbdParams:
    """Parameters ``(A, a, b)`` of the rank-size function, plus the maximum rank ``N``."""

    A: float
    a: float
    b: float
    N: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.A) and self.A > 0):
            raise DomainError(f"A must be positive and finite, got {self.A}")
        if not (np.isfinite(self.a) and self.a >= 0):
            raise DomainError(f"a must be non-negative, got {self.a}")
        if not (np.isfinite(self.b) and self.b >= 0):
            raise DomainError(f"b must be non-negative, got {self.b}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")

    def to_brf(self):
        """Continuous BRF whose quantiles at ``u = r/(N+1)`` reproduce this rank-size curve.

        ``A (N+1-r)^b / r^a = A (N+1)^(b-a) (1-u)^b / u^a`` with ``u = r/(N+1)``.
        """
        scale = self.A * float(self.N + 1) ** (self.b - self.a)
        return BrfQuantile(DgbdParams(scale, self.a, self.b, self.N))


@dataclass(frozen=True)
class BrfQuantile:
    """The BRF distribution, represented by its quantile function.

    ``params.N`` is carried along but plays no role in the continuous form.
    """

    params: DgbdParams

    @classmethod
    def from_values(cls, A, a, b):
        return cls(DgbdParams(A, a, b))

    @property
    def A(self):
        return self.params.A

    @property
    def a(self):
        return self.params.a

    @property
    def b(self):
        return self.params.b

    def to_rank_size(self, N):
        """Inverse of :meth:`DgbdParams.to_brf`."""
        return DgbdParams(self.A * float(N + 1) ** (self.a - self.b), self.a, self.b, N)

    def quantile(self, u):
        return brf_quantile(self, u)

    def cdf(self, t):
        return brf_cdf(self, t)

    def log_density(self, z):
        return brf_log_density(self, z)

    def log_mode(self):
        return brf_log_mode(self)

    def sample(self, n, seed=None):
        return brf_sample(self, n, seed)

    def moment(self, n_order):
        return brf_moment(self, n_order)


def _as_brf(q):
    if isinstance(q, BrfQuantile):
        return q
    if isinstance(q, DgbdParams):
        return BrfQuantile(q)
    raise TypeError(f"expected BrfQuantile or DgbdParams, got {type(q).__name__}")


def _as_params(p):
    return p.params if isinstance(p, BrfQuantile) else p


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def dgbd_eval(params, r):
    """Evaluate the rank-size function ``A (N+1-r)^b / r^a`` at rank(s) ``r``."""
    r_arr = np.asarray(r)
    if np.any(r_arr != np.floor(r_arr)) or np.any(r_arr < 1) or np.any(r_arr > params.N):
        raise DomainError(f"rank must be an integer in [1, {params.N}]")
    r_f = r_arr.astype(np.float64)
    out = params.A * (params.N + 1.0 - r_f) ** params.b / r_f ** params.a
    return _scalar_or_array(out, r)


def brf_quantile(q, u):
    """``x(u) = A (1-u)^b / u^a`` for ``0 < u < 1``."""
    q = _as_brf(q)
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(~(u_arr > 0)) or np.any(~(u_arr < 1)):
        raise DomainError("u must lie in the open interval (0, 1)")
    out = q.A * (1.0 - u_arr) ** q.b / u_arr ** q.a
    return _scalar_or_array(out, u)


def _solve_u(q, log_targets):
    """Return ``(u, 1-u)`` with ``log x(u) = log_targets``, both computed without cancellation."""
    s, iters = kernels.solve_logit(log_targets, math.log(q.A), q.a, q.b,
                                   CDF_TOL, CDF_MAX_ITER)
    if iters >= CDF_MAX_ITER:
        raise NumericError("quantile inversion did not converge")
    return special.expit(s), special.expit(-s)


def brf_cdf(q, t):
    """``P(X <= t)``, by monotone inversion of the quantile function."""
    q = _as_brf(q)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(~(t_arr > 0)):
        raise DomainError("the BRF cdf is defined for t > 0")
    if q.a == 0 and q.b == 0:
        out = (t_arr >= q.A).astype(np.float64)
    else:
        _, one_minus_u = _solve_u(q, np.log(t_arr).ravel())
        out = one_minus_u.reshape(t_arr.shape)
    return _scalar_or_array(out, t)


def _require_two_tails(q):
    if not (q.a > 0 and q.b > 0):
        raise UnsupportedShapeError(
            f"log-density peak requires a > 0 and b > 0 (got a={q.a}, b={q.b})")


def brf_log_density(q, z):
    """Density of ``Z = log X`` at ``z``: ``u(1-u) / (a(1-u) + b u)`` with ``u = u(z)``."""
    q = _as_brf(q)
    _require_two_tails(q)
    z_arr = np.asarray(z, dtype=np.float64)
    u, v = _solve_u(q, z_arr.ravel())
    out = (u * v / (q.a * v + q.b * u)).reshape(z_arr.shape)
    return _scalar_or_array(out, z)


def brf_log_mode(q):
    """Peak ``(u*, z*)`` of the log-variable density.

    ``u*`` is the root in (0, 1) of ``(b-a)u^2 + 2au - a = 0``. The textbook
    root ``(sqrt(ab) - a)/(b - a)`` is evaluated in the rationalized form
    ``sqrt(a) / (sqrt(a) + sqrt(b))``, which has no 0/0 at ``a = b``.
    """
    q = _as_brf(q)
    _require_two_tails(q)
    a, b = q.a, q.b
    if abs(b - a) < SYMMETRY_TOL:
        u_star = 0.5
    else:
        ra, rb = math.sqrt(a), math.sqrt(b)
        u_star = ra / (ra + rb)
    z_star = math.log(q.A) + b * math.log1p(-u_star) - a * math.log(u_star)
    return u_star, z_star


def _uniform_open(rng, n):
    # 53-bit grid shifted by half a step: never exactly 0 or 1
    return (rng.integers(0, 2 ** 53, size=n, dtype=np.int64) + 0.5) / 2.0 ** 53


def brf_sample(q, n, seed=None):
    """Inverse-transform sample of size ``n``; ``seed`` may be an int or a Generator."""
    q = _as_brf(q)
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = _uniform_open(rng, int(n))
    return q.A * (1.0 - u) ** q.b / u ** q.a


def brf_moment(q, n_order):
    """``E[X^n] = A^n B(1 - n a, 1 + n b)``; ``math.inf`` when ``n a >= 1`` (divergent)."""
    p = _as_params(q)
    if not n_order > 0:
        raise DomainError(f"moment order must be positive, got {n_order}")
    if n_order * p.a >= 1:
        return math.inf
    log_m = n_order * math.log(p.A) + special.betaln(1 - n_order * p.a, 1 + n_order * p.b)
    return math.exp(log_m)


@dataclass(frozen=True)
class PowerLaw:
    """Pure power law ``x(u) = A / u^a``: the ``b = 0`` member of the BRF family."""

    A: float
    a: float

    def as_brf(self):
        return BrfQuantile.from_values(self.A, self.a, 0.0)

    def cdf(self, t):
        t_arr = np.asarray(t, dtype=np.float64)
        if self.a == 0:
            out = (t_arr >= self.A).astype(np.float64)
        else:
            ratio = np.clip(self.A / t_arr, 0.0, 1.0)
            out = 1.0 - ratio ** (1.0 / self.a)
        return _scalar_or_array(out, t)

    def quantile(self, u):
        return brf_quantile(self.as_brf(), u)


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    def cdf(self, t):
        t_arr = np.asarray(t, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = stats.norm.cdf((np.log(t_arr) - self.mu) / self.sigma)
        return _scalar_or_array(out, t)

    def log_cdf(self, z):
        """CDF of the log variable, a normal(mu, sigma)."""
        return stats.norm.cdf((np.asarray(z, dtype=np.float64) - self.mu) / self.sigma)

    def quantile(self, u):
        return np.exp(self.mu + self.sigma * stats.norm.ppf(u))
