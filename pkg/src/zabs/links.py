"""Link functions for the mean, precision and zero-probability predictors.

Each link maps a parameter from its natural domain to the real line.
Besides evaluation and inversion, the estimation code needs the first
and second derivatives of the link with respect to the parameter, from
which the chain-rule weights ``a = 1/g'(mu)`` and ``a' = da/dmu`` follow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError

POSITIVE = "positive"
UNIT = "unit"


def _check_domain(x, domain: str, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if domain == POSITIVE:
        ok = np.all(x > 0)
    else:
        ok = np.all((x > 0) & (x < 1))
    if not ok or not np.all(np.isfinite(x)):
        interval = "(0, inf)" if domain == POSITIVE else "(0, 1)"
        raise DomainError(f"{name} link evaluated outside {interval}")
    return x


@dataclass(frozen=True)
class LinkFunction:
    """A strictly increasing, twice differentiable link ``g``.

    ``inverse`` raises :class:`DomainError` when the predictor value has
    no preimage in the domain (e.g. a negative predictor under the
    identity link for a positive parameter).
    """

    name: str
    domain: str
    _eval: Callable[[np.ndarray], np.ndarray]
    _inverse: Callable[[np.ndarray], np.ndarray]
    _d1: Callable[[np.ndarray], np.ndarray]
    _d2: Callable[[np.ndarray], np.ndarray]
    _valid_eta: Callable[[np.ndarray], np.ndarray] | None = None
    _log_terms: Callable[[np.ndarray], tuple] | None = None

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        return self._eval(_check_domain(x, self.domain, self.name))

    def inverse(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self._valid_eta is not None and not np.all(self._valid_eta(eta)):
            raise DomainError(f"predictor outside the range of the {self.name} link")
        return self._inverse(eta)

    def deriv(self, x):
        """g'(x), strictly positive on the domain."""
        return self._d1(_check_domain(x, self.domain, self.name))

    def deriv2(self, x):
        """g''(x)."""
        return self._d2(_check_domain(x, self.domain, self.name))

    def dmu_deta(self, x):
        """Chain-rule weight ``1/g'(x)``."""
        return 1.0 / self.deriv(x)

    def dweight(self, x):
        """Derivative of ``1/g'(x)`` with respect to ``x``."""
        d1 = self.deriv(x)
        return -self.deriv2(x) / d1**2

    def log_terms(self, eta):
        """Log-scale quantities of a unit-interval link, computed from ``eta``.

        Returns ``(log p, log(1 - p), log dp/deta, d log(dp/deta) / deta)``
        with ``p = g^{-1}(eta)``.  These stay finite where ``p`` itself
        rounds to 0 or 1.
        """
        if self._log_terms is None:
            raise ValueError(f"{self.name} link has no log-scale form")
        return self._log_terms(np.asarray(eta, dtype=float))


def _probit_d1(x):
    z = special.ndtri(x)
    return 1.0 / _norm_pdf(z)


def _probit_d2(x):
    z = special.ndtri(x)
    return z / _norm_pdf(z) ** 2


def _norm_pdf(z):
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def _cloglog_d1(x):
    L = -np.log1p(-x)
    return 1.0 / ((1.0 - x) * L)


def _cloglog_d2(x):
    L = -np.log1p(-x)
    return (L - 1.0) / ((1.0 - x) ** 2 * L**2)


def _logit_logs(eta):
    lp, lq = -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)
    return lp, lq, lp + lq, np.tanh(-0.5 * eta)


def _probit_logs(eta):
    lpdf = -0.5 * eta * eta - 0.5 * np.log(2.0 * np.pi)
    return special.log_ndtr(eta), special.log_ndtr(-eta), lpdf, -eta


def _cloglog_logs(eta):
    e = np.exp(eta)
    return np.log(-np.expm1(-e)), -e, eta - e, 1.0 - e


LOG = LinkFunction(
    "log", POSITIVE, np.log, np.exp, lambda x: 1.0 / x, lambda x: -1.0 / x**2
)
SQRT = LinkFunction(
    "sqrt",
    POSITIVE,
    np.sqrt,
    np.square,
    lambda x: 0.5 / np.sqrt(x),
    lambda x: -0.25 * x**-1.5,
    lambda eta: eta > 0,
)
IDENTITY = LinkFunction(
    "identity",
    POSITIVE,
    lambda x: x,
    lambda eta: eta,
    np.ones_like,
    np.zeros_like,
    lambda eta: eta > 0,
)
LOGIT = LinkFunction(
    "logit",
    UNIT,
    special.logit,
    special.expit,
    lambda x: 1.0 / (x * (1.0 - x)),
    lambda x: (2.0 * x - 1.0) / (x**2 * (1.0 - x) ** 2),
    _log_terms=_logit_logs,
)
PROBIT = LinkFunction(
    "probit", UNIT, special.ndtri, special.ndtr, _probit_d1, _probit_d2, _log_terms=_probit_logs
)
CLOGLOG = LinkFunction(
    "cloglog",
    UNIT,
    lambda x: np.log(-np.log1p(-x)),
    lambda eta: -np.expm1(-np.exp(eta)),
    _cloglog_d1,
    _cloglog_d2,
    _log_terms=_cloglog_logs,
)

POSITIVE_LINKS = {link.name: link for link in (LOG, SQRT, IDENTITY)}
PROBABILITY_LINKS = {link.name: link for link in (LOGIT, PROBIT, CLOGLOG)}


def get_link(name: str | LinkFunction, domain: str = POSITIVE) -> LinkFunction:
    """Resolve a link by name for a positive (``"positive"``) or unit-interval parameter."""
    if isinstance(name, LinkFunction):
        if name.domain != domain:
            raise ValueError(f"link {name.name!r} is not defined on the {domain} domain")
        return name
    table = POSITIVE_LINKS if domain == POSITIVE else PROBABILITY_LINKS
    try:
        return table[name]
    except KeyError:
        raise ValueError(
            f"unknown link {name!r}; expected one of {sorted(table)}"
        ) from None
