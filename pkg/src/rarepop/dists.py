"""Scalar distribution kernels.

Zero-truncated Poisson and left-truncated binomial laws, the shifted
multinomial used for network sizes, and the handful of standard densities the
priors need. Everything works in log space; samplers take a
:class:`~rarepop.rng.RandomSource` (or a numpy ``Generator``).

The zero-truncated Poisson mean ``lambda / (1 - exp(-lambda))`` is written
``lambda'`` in comments. Split/combine moves work with its *excess*
``lambda' - 1``, which stays accurate when ``lambda`` is tiny.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError
from .rng import as_generator

DEFAULT_TOL = 1e-10
_TINY = 1e-300
_SERIES_CUT = 1e-2


@dataclass(frozen=True)
class TruncPoissonParam:
    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"truncated Poisson rate must be finite and > 0, got {self.lam}")


@dataclass(frozen=True)
class GammaParam:
    """Gamma law with mean ``shape / rate``."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError(f"gamma shape and rate must be > 0, got ({self.shape}, {self.rate})")

    @property
    def mean(self):
        return self.shape / self.rate


@dataclass(frozen=True)
class BetaParam:
    """Beta law with mean ``a / (a + b)``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError(f"beta parameters must be > 0, got ({self.a}, {self.b})")

    @property
    def mean(self):
        return self.a / (self.a + self.b)


def _rate(p) -> float:
    lam = p.lam if isinstance(p, TruncPoissonParam) else float(p)
    if not (math.isfinite(lam) and lam > 0):
        raise DomainError(f"truncated Poisson rate must be finite and > 0, got {lam}")
    return lam


def log1mexp(x: float) -> float:
    """``log(1 - exp(-x))`` for ``x > 0``."""
    if x <= 0:
        raise DomainError("log1mexp needs x > 0")
    if x < 0.6931471805599453:
        return math.log(-math.expm1(-x))
    return math.log1p(-math.exp(-x))


# --------------------------------------------------------------------------
# zero-truncated Poisson


def trunc_poisson_logpmf(y: int, p) -> float:
    """Log pmf of the zero-truncated Poisson, support ``y >= 1``."""
    lam = _rate(p)
    if y < 1 or int(y) != y:
        raise DomainError(f"truncated Poisson support is y >= 1, got {y}")
    return y * math.log(lam) - lam - math.lgamma(y + 1) - log1mexp(lam)


def trunc_poisson_sample(p, rng) -> int:
    """One zero-truncated Poisson draw.

    Inverse cdf by forward summation for ``lambda <= 30``; above that the
    untruncated Poisson is redrawn until positive (zero has mass < 1e-13).
    """
    lam = _rate(p)
    gen = as_generator(rng)
    return _ztp_draw(lam, gen)


def _ztp_draw(lam: float, gen: np.random.Generator) -> int:
    if lam > 30.0:
        while True:
            k = int(gen.poisson(lam))
            if k >= 1:
                return k
    target = gen.random() * -math.expm1(-lam)
    pk = lam * math.exp(-lam)
    cum = pk
    k = 1
    kmax = int(lam + 40.0 * math.sqrt(lam) + 60.0)
    while cum < target and k < kmax:
        k += 1
        pk *= lam / k
        cum += pk
    return k


def trunc_poisson_sample_n(lam: float, n: int, rng) -> np.ndarray:
    """``n`` independent zero-truncated Poisson draws (vectorized inverse cdf)."""
    lam = _rate(lam)
    gen = as_generator(rng)
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    if lam > 30.0:
        out = gen.poisson(lam, n)
        bad = out < 1
        while bad.any():
            out[bad] = gen.poisson(lam, int(bad.sum()))
            bad = out < 1
        return out.astype(np.int64)
    kmax = int(lam + 40.0 * math.sqrt(lam) + 60.0)
    k = np.arange(1, kmax + 1)
    logpmf = k * math.log(lam) - lam - special.gammaln(k + 1.0)
    cdf = np.cumsum(np.exp(logpmf))
    u = gen.random(n) * -math.expm1(-lam)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx + 1, kmax).astype(np.int64)


def trunc_poisson_mean(lam: float) -> float:
    """Mean of the zero-truncated Poisson, ``lambda / (1 - exp(-lambda))``."""
    lam = _rate(lam)
    return 1.0 + trunc_poisson_excess(lam)


def trunc_poisson_excess(lam: float) -> float:
    """``trunc_poisson_mean(lam) - 1`` without cancellation for small ``lam``."""
    if lam < _SERIES_CUT:
        l2 = lam * lam
        return lam / 2.0 + l2 / 12.0 - l2 * l2 / 720.0 + l2 * l2 * l2 / 30240.0
    em1 = -math.expm1(-lam)
    return (lam - em1) / em1


def trunc_poisson_mean_deriv(lam: float) -> float:
    """Derivative of the truncated-Poisson mean with respect to ``lambda``."""
    if lam < _SERIES_CUT:
        return 0.5 + lam / 6.0 - lam ** 3 / 180.0 + lam ** 5 / 5040.0
    e = math.exp(-lam)
    em1 = -math.expm1(-lam)
    return (em1 - lam * e) / (em1 * em1)


def inv_trunc_poisson_mean(lambda_prime: float, tol: float = DEFAULT_TOL) -> float:
    """Solve ``trunc_poisson_mean(lam) = lambda_prime`` for ``lam``.

    Raises DomainError for ``lambda_prime <= 1``, where no finite positive
    solution exists.
    """
    if not (math.isfinite(lambda_prime) and lambda_prime > 1.0):
        raise DomainError(f"inverse truncated-Poisson mean needs lambda' > 1, got {lambda_prime}")
    return inv_trunc_poisson_excess(lambda_prime - 1.0, tol=tol, lambda_prime=lambda_prime)


def inv_trunc_poisson_excess(excess: float, tol: float = DEFAULT_TOL, lambda_prime=None) -> float:
    """Solve ``trunc_poisson_excess(lam) = excess`` (Newton with bisection guard).

    Seeds at ``lambda'`` itself when ``lambda' >= 10`` (the mean is then within
    5e-4 of the rate) and at ``max(lambda' - lambda' e^{-lambda'}, tiny)``
    otherwise; every iterate is kept inside the bracket ``(0, lambda']``.
    """
    if not (math.isfinite(excess) and excess > 0.0):
        raise DomainError(f"truncated-Poisson excess must be > 0, got {excess}")
    lp = 1.0 + excess if lambda_prime is None else lambda_prime
    if lp >= 10.0:
        lam = lp
    else:
        lam = max(lp - lp * math.exp(-lp), _TINY)
    # small-excess regime: excess ~ lam / 2
    if excess < 1e-3:
        lam = 2.0 * excess
    lo, hi = 0.0, lp
    for _ in range(200):
        f = trunc_poisson_excess(lam) - excess
        if f == 0.0:
            break
        if f > 0:
            hi = min(hi, lam)
        else:
            lo = max(lo, lam)
        step = f / trunc_poisson_mean_deriv(lam)
        new = lam - step
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - lam) <= 4e-16 * max(lam, _TINY):
            lam = new
            break
        lam = new
    resid = abs(trunc_poisson_excess(lam) - excess)
    if resid > tol * max(1.0, lp):
        raise DomainError(f"truncated-Poisson mean inversion did not converge (residual {resid:.3g})")
    return lam


# --------------------------------------------------------------------------
# left-truncated binomial and shifted multinomial


def log_binom_coef(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_trunc_binom_norm(n: int, p: float) -> float:
    """``log(1 - (1 - p)^n)``."""
    return math.log(-math.expm1(n * math.log1p(-p)))


def trunc_binomial_logpmf(k: int, n: int, p: float) -> float:
    """Log pmf of Binomial(n, p) conditioned on ``k >= 1``."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"binomial probability must lie in (0, 1), got {p}")
    if n < 1 or k < 1 or k > n:
        raise DomainError(f"truncated binomial support is 1 <= k <= n, got k={k}, n={n}")
    return (log_binom_coef(n, k) + k * math.log(p) + (n - k) * math.log1p(-p)
            - log_trunc_binom_norm(n, p))


def trunc_binomial_sample(n: int, p: float, rng) -> int:
    """One draw from Binomial(n, p) conditioned on ``k >= 1``."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"binomial probability must lie in (0, 1), got {p}")
    if n < 1:
        raise DomainError(f"truncated binomial needs n >= 1, got {n}")
    gen = as_generator(rng)
    if n == 1:
        return 1
    p0 = math.exp(n * math.log1p(-p))
    if p0 < 0.5:
        while True:
            k = int(gen.binomial(n, p))
            if k >= 1:
                return k
    # most mass near zero: forward summation over [1, n]
    target = gen.random() * (1.0 - p0)
    ratio = p / (1.0 - p)
    pk = n * p * math.exp((n - 1) * math.log1p(-p))
    cum = pk
    k = 1
    while cum < target and k < n:
        pk *= (n - k) / (k + 1) * ratio
        k += 1
        cum += pk
    return k


def shifted_multinomial_sample(X: int, R: int, rng) -> np.ndarray:
    """``1_R + Multinomial(X - R, uniform)``: R positive sizes summing to X."""
    if R < 1 or X < R:
        raise DomainError(f"shifted multinomial needs X >= R >= 1, got X={X}, R={R}")
    gen = as_generator(rng)
    return 1 + gen.multinomial(X - R, np.full(R, 1.0 / R))


def shifted_multinomial_logpmf(C, R: int) -> float:
    """Log pmf of a labeled size vector ``C`` under ``1_R + Multinomial(X - R, 1/R)``."""
    C = [int(c) for c in C]
    if len(C) != R or R < 1 or min(C) < 1:
        raise DomainError("size vector must have R entries, each >= 1")
    X = sum(C)
    extra = X - R
    return (math.lgamma(extra + 1) - sum(math.lgamma(c) for c in C)
            - (extra * math.log(R) if extra else 0.0))


# --------------------------------------------------------------------------
# standard kernels


def gamma_logpdf(x: float, shape: float, rate: float) -> float:
    if not (shape > 0 and rate > 0):
        raise DomainError("gamma shape and rate must be > 0")
    if x <= 0:
        return -math.inf
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def gamma_sample(shape: float, rate: float, rng) -> float:
    if not (shape > 0 and rate > 0):
        raise DomainError("gamma shape and rate must be > 0")
    return float(as_generator(rng).gamma(shape, 1.0 / rate))


def beta_logpdf(x: float, a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise DomainError("beta parameters must be > 0")
    if not (0.0 < x < 1.0):
        return -math.inf
    return ((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)
            - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))


def beta_sample(a: float, b: float, rng) -> float:
    if not (a > 0 and b > 0):
        raise DomainError("beta parameters must be > 0")
    return float(as_generator(rng).beta(a, b))


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def truncnormal_below_logpdf(x: float, mu: float, sd: float, lower: float) -> float:
    """Normal(mu, sd) restricted to ``(lower, inf)``; ``sd`` is a standard deviation."""
    if not sd > 0:
        raise DomainError("truncated normal needs sd > 0")
    if x <= lower:
        return -math.inf
    z = (x - mu) / sd
    a = (lower - mu) / sd
    return -0.5 * z * z - _LOG_SQRT_2PI - math.log(sd) - float(special.log_ndtr(-a))


def truncnormal_below_sample(mu: float, sd: float, lower: float, rng) -> float:
    if not sd > 0:
        raise DomainError("truncated normal needs sd > 0")
    gen = as_generator(rng)
    a = (lower - mu) / sd
    if a < 30.0:
        # upper-tail inverse cdf, stable for large a
        tail = float(special.ndtr(-a))
        while True:
            z = -float(special.ndtri(gen.random() * tail))
            if z > a:
                return mu + sd * z
    # Robert (1995) exponential proposal for far tails
    rate = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + gen.exponential(1.0 / rate)
        if gen.random() <= math.exp(-0.5 * (z - rate) ** 2):
            return mu + sd * z
