"""Mean/precision Birnbaum-Saunders (RBS) and its zero-adjusted mixture (ZABS).

The RBS law is indexed by its mean ``mu`` and a precision ``sigma``.  It
coincides with the classical BS(alpha, beta) law under

    alpha = sqrt(2 / sigma),    beta = sigma * mu / (sigma + 1),

which gives closed forms for the CDF, quantile function and sampler.
ZABS puts mass ``nu`` at zero and ``1 - nu`` on an RBS component.

Parameters may be scalars or broadcastable arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

_HALF_LOG_16PI = 0.5 * np.log(16.0 * np.pi)


@dataclass(frozen=True)
class RbsParams:
    mu: float | np.ndarray
    sigma: float | np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if not (np.all(mu > 0) and np.all(np.isfinite(mu))):
            raise DomainError("RBS mean mu must be positive and finite")
        if not (np.all(sigma > 0) and np.all(np.isfinite(sigma))):
            raise DomainError("RBS precision sigma must be positive and finite")

    def classical(self) -> "ClassicalBsParams":
        return ClassicalBsParams.from_rbs(self)


@dataclass(frozen=True)
class ClassicalBsParams:
    """Shape ``alpha`` and scale ``beta`` of the original BS parameterization."""

    alpha: float | np.ndarray
    beta: float | np.ndarray

    @classmethod
    def from_rbs(cls, p: RbsParams) -> "ClassicalBsParams":
        sigma = np.asarray(p.sigma, dtype=float)
        mu = np.asarray(p.mu, dtype=float)
        return cls(np.sqrt(2.0 / sigma), sigma * mu / (sigma + 1.0))


@dataclass(frozen=True)
class ZabsParams:
    """RBS component plus zero mass ``nu``; ``nu = 0`` gives the plain RBS law."""

    rbs: RbsParams
    nu: float | np.ndarray = 0.0

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        if not np.all((nu >= 0) & (nu < 1)):
            raise DomainError("zero probability nu must lie in [0, 1)")

    @classmethod
    def of(cls, mu, sigma, nu=0.0) -> "ZabsParams":
        return cls(RbsParams(mu, sigma), nu)


def _positive(t, what="t") -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(t > 0):
        raise DomainError(f"{what} must be strictly positive")
    return t


def _nonnegative(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all(y >= 0):
        raise DomainError("y must be nonnegative")
    return y


def rbs_logpdf(t, p: RbsParams):
    t = _positive(t)
    mu = np.asarray(p.mu, dtype=float)
    s = np.asarray(p.sigma, dtype=float)
    scale = s * mu / (s + 1.0)
    return (
        0.5 * s
        + 0.5 * np.log1p(s)
        - _HALF_LOG_16PI
        - 0.5 * np.log(mu)
        - 1.5 * np.log(t)
        + np.log(t + scale)
        - 0.25 * s * (t / scale + scale / t)
    )


def rbs_pdf(t, p: RbsParams):
    return np.exp(rbs_logpdf(t, p))


def _bs_argument(t, p: RbsParams):
    c = p.classical()
    r = np.sqrt(t / c.beta)
    return (r - 1.0 / r) / c.alpha


def rbs_cdf(t, p: RbsParams):
    t = _positive(t)
    return special.ndtr(_bs_argument(t, p))


def rbs_sf(t, p: RbsParams):
    t = _positive(t)
    return special.ndtr(-_bs_argument(t, p))


def _bs_transform(z, c: ClassicalBsParams):
    az = c.alpha * z
    return 0.25 * c.beta * (az + np.sqrt(az * az + 4.0)) ** 2


def rbs_quantile(q, p: RbsParams):
    q = np.asarray(q, dtype=float)
    if not np.all((q > 0) & (q < 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    return _bs_transform(special.ndtri(q), p.classical())


def rbs_sample(n: int, p: RbsParams, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` RBS variates (``p`` must broadcast against shape ``(n,)``)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.standard_normal(n)
    return _bs_transform(z, p.classical())


def rbs_moments(p: RbsParams) -> tuple:
    mu = np.asarray(p.mu, dtype=float)
    s = np.asarray(p.sigma, dtype=float)
    return mu, mu**2 * (2.0 * s + 5.0) / (s + 1.0) ** 2


def zabs_logpdf(y, p: ZabsParams):
    y = _nonnegative(y)
    nu = np.asarray(p.nu, dtype=float)
    zero = y == 0
    y_safe = np.where(zero, 1.0, y)
    with np.errstate(divide="ignore"):
        cont = np.log1p(-nu) + rbs_logpdf(y_safe, p.rbs)
        atom = np.log(nu)
    return np.where(zero, atom, cont)


def zabs_cdf(y, p: ZabsParams):
    y = _nonnegative(y)
    nu = np.asarray(p.nu, dtype=float)
    pos = y > 0
    y_safe = np.where(pos, y, 1.0)
    cont = rbs_cdf(y_safe, p.rbs)
    return np.where(pos, nu + (1.0 - nu) * cont, nu * np.ones_like(cont))


def zabs_moments(p: ZabsParams) -> tuple:
    """Mean ``(1-nu) mu`` and variance ``(1-nu) mu^2 (nu + CV[T]^2)``."""
    mu = np.asarray(p.rbs.mu, dtype=float)
    s = np.asarray(p.rbs.sigma, dtype=float)
    nu = np.asarray(p.nu, dtype=float)
    cv2 = (2.0 * s + 5.0) / (s + 1.0) ** 2
    return (1.0 - nu) * mu, (1.0 - nu) * mu**2 * (nu + cv2)


def zabs_sample(n: int, p: ZabsParams, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.random(n)
    t = rbs_sample(n, p.rbs, rng)
    return np.where(u < np.asarray(p.nu, dtype=float), 0.0, t)
