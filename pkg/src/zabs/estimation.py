"""Maximum likelihood for the ZABS regression model by Fisher scoring.

The log-likelihood splits into a binary part in ``gamma`` and a
positive-part (nonlinear BS regression) part in ``(beta, alpha)``.
Score, Hessian and expected information are evaluated analytically
from per-observation derivatives with respect to ``mu``, ``sigma`` and
``nu``, pushed through the link weights and the predictor Jacobians.
"""

from __future__ import annotations

import functools
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate, linalg, special

from .distributions import RbsParams, rbs_logpdf
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DomainError,
    ModelSpecError,
    QuadratureError,
    RankDeficientError,
)
from .model import EXP_RATIO, LINEAR, ModelSpec, covariates, get_column

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-10
ZERO_TOL = np.finfo(float).tiny
RANK_RTOL = 1e-10
QUAD_TOL_ENV = "ZABS_QUAD_TOL"
DEFAULT_QUAD_TOL = 1e-9


def quad_tolerance() -> float:
    """Relative tolerance for the lambda quadrature (env override ``ZABS_QUAD_TOL``)."""
    raw = os.environ.get(QUAD_TOL_ENV)
    if raw is None:
        return DEFAULT_QUAD_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise ConfigError(f"{QUAD_TOL_ENV}={raw!r} is not a number") from None
    if not 0 < tol < 1:
        raise ConfigError(f"{QUAD_TOL_ENV} must lie in (0, 1)")
    return tol


# --------------------------------------------------------------------------- #
# lambda = E[(T + beta)^-2] with beta = sigma mu / (sigma + 1)
# --------------------------------------------------------------------------- #


def lambda_integral(mu: float, sigma: float, tol: float | None = None) -> float:
    """Integral of ``pdf(y) / (y + sigma mu/(sigma+1))^2`` over ``(0, inf)``.

    Evaluated by adaptive quadrature after mapping ``(0, inf)`` onto
    ``(0, 1)`` with ``y = beta u / (1 - u)``, which puts the bulk of the
    density near ``u = 1/2``.
    """
    if not (mu > 0 and sigma > 0 and np.isfinite(mu) and np.isfinite(sigma)):
        raise DomainError("lambda_integral needs mu > 0 and sigma > 0")
    tol = quad_tolerance() if tol is None else tol
    p = RbsParams(mu, sigma)
    beta = sigma * mu / (sigma + 1.0)

    def integrand(u):
        if u <= 0.0 or u >= 1.0:
            return 0.0
        t = beta * u / (1.0 - u)
        jac = beta / (1.0 - u) ** 2
        return float(np.exp(rbs_logpdf(t, p))) * jac / (t + beta) ** 2

    val, abserr, info = integrate.quad(
        integrand, 0.0, 1.0, points=[0.5], epsabs=0.0, epsrel=tol, limit=500,
        full_output=1,
    )[:3]
    if not np.isfinite(val) or val <= 0 or abserr > max(10 * tol * abs(val), 1e-300):
        raise QuadratureError(
            f"lambda quadrature failed for mu={mu!r}, sigma={sigma!r}: "
            f"value={val!r}, abserr={abserr!r}, evaluations={info.get('neval')}"
        )
    return val


@functools.lru_cache(maxsize=65536)
def _lambda_unit_mean(sigma: float, tol: float) -> float:
    return lambda_integral(1.0, sigma, tol)


def lambda_closed_form(mu, sigma) -> np.ndarray:
    """Closed form of :func:`lambda_integral`.

    Writing ``T = beta W`` with ``W = (s + sqrt(s^2 + 1))^2`` and
    ``s = alpha Z / 2`` gives ``(1 + W)^-2 = (1 - tanh u)^2 / 4`` with
    ``u = asinh(s)``.  The odd term has mean zero, and
    ``E[1 / (1 + s^2)] = sqrt(pi sigma) erfcx(sqrt(sigma))``, so
    ``lambda = (2 - sqrt(pi sigma) erfcx(sqrt(sigma))) / (4 beta^2)``.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    beta = sigma * mu / (sigma + 1.0)
    root = np.sqrt(sigma)
    return (2.0 - np.sqrt(np.pi) * root * special.erfcx(root)) / (4.0 * beta**2)


LAMBDA_METHODS = ("closed", "quadrature")


def lambda_vector(
    mu: np.ndarray, sigma: np.ndarray, tol: float | None = None, method: str = "quadrature"
) -> np.ndarray:
    """Per-observation lambda.

    With ``method="quadrature"`` the integral runs once per distinct
    ``sigma`` (memoized) and is rescaled by ``lambda(mu, s) = lambda(1, s) / mu^2``.
    """
    if method == "closed":
        return lambda_closed_form(mu, sigma) * np.ones_like(np.asarray(mu, dtype=float))
    if method != "quadrature":
        raise ValueError(f"unknown lambda method {method!r}")
    tol = quad_tolerance() if tol is None else tol
    mu = np.asarray(mu, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
    uniq, inv = np.unique(sigma, return_inverse=True)
    base = np.array([_lambda_unit_mean(float(s), tol) for s in uniq])
    return base[inv.reshape(mu.shape)] / mu**2


# --------------------------------------------------------------------------- #
# Bound model: model + data, evaluated at a parameter vector
# --------------------------------------------------------------------------- #


@dataclass
class ScoreComponents:
    """Per-observation score pieces; mean/precision parts vanish where y = 0."""

    kappa: np.ndarray
    y_star: np.ndarray
    mu_star: np.ndarray
    y_bullet: np.ndarray
    sigma_bullet: np.ndarray
    y_circ: np.ndarray
    nu_circ: np.ndarray

    @property
    def d_mu(self):
        return self.kappa * (self.y_star - self.mu_star)

    @property
    def d_sigma(self):
        return self.kappa * (self.y_bullet - self.sigma_bullet)

    @property
    def d_nu(self):
        return self.y_circ - self.nu_circ


@dataclass
class InformationBlocks:
    """Diagonal weights of the expected information (entries of V, S, U, Q)."""

    V: np.ndarray
    S: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    lam: np.ndarray


@dataclass
class _State:
    theta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    nu: np.ndarray
    jac: dict
    a: np.ndarray
    da: np.ndarray
    b: np.ndarray
    db: np.ndarray
    # zero block on the log scale: log nu, log(1 - nu), nu'/nu, nu'/(1 - nu)
    # and d log(nu')/d eta, where nu' = d nu / d eta
    log_nu: np.ndarray
    log_1mnu: np.ndarray
    r0: np.ndarray
    r1: np.ndarray
    s: np.ndarray


class BoundModel:
    """A model specification bound to a dataset."""

    def __init__(self, model: ModelSpec, data: Mapping, lambda_method: str = "closed"):
        self.model = model
        self.lambda_method = lambda_method
        y = get_column(data, model.response)
        if np.any(y < 0):
            bad = np.flatnonzero(y < 0)[:5]
            raise DataError(f"negative responses at rows {bad.tolist()}")
        y = np.where(y <= ZERO_TOL, 0.0, y)
        self.y = y
        self.n = y.size
        if self.n == 0:
            raise DataError("empty dataset")
        self.zero = y == 0
        self.kappa = (~self.zero).astype(float)
        self.n0 = int(self.zero.sum())
        self.y_safe = np.where(self.zero, 1.0, y)
        self.covs = {}
        self.slices = {}
        start = 0
        for name, comp in model.blocks():
            self.covs[name] = covariates(data, comp.predictor, self.n)
            k = comp.predictor.n_params
            self.slices[name] = slice(start, start + k)
            start += k
        self.dim = start
        self.names = model.param_names()

    # ------------------------------------------------------------------ #

    def validate(self) -> None:
        m = self.model
        if m.zeroprob is None and self.n0 > 0:
            raise ModelSpecError(
                f"{self.n0} zero responses but the model has no zero-probability block"
            )
        if m.zeroprob is not None and self.n0 == 0:
            raise ModelSpecError(
                "zero-probability block requested but there are no zero responses "
                "(nu estimate would sit on the boundary)"
            )
        if self.n0 == self.n:
            raise ModelSpecError(
                "all responses are zero: only the zero-probability block is estimable"
            )
        if self.dim >= self.n:
            raise ModelSpecError(f"{self.dim} parameters for only {self.n} observations")

    def split(self, theta) -> dict:
        theta = np.asarray(theta, dtype=float)
        return {k: theta[s] for k, s in self.slices.items()}

    def index(self, *blocks: str) -> np.ndarray:
        return np.concatenate(
            [np.arange(self.dim)[self.slices[b]] for b in blocks if b in self.slices]
        ).astype(int)

    def state(self, theta, check_rank: bool = False) -> _State:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta must have length {self.dim}")
        if not np.all(np.isfinite(theta)):
            raise DomainError("non-finite parameter vector")
        parts = self.split(theta)
        m = self.model
        jac = {}
        values = {}
        etas = {}
        for name, comp in m.blocks():
            pred = comp.predictor
            eta = etas[name] = pred.eta(self.covs[name], parts[name])
            values[name] = comp.link.inverse(eta)
            jac[name] = pred.jacobian(self.covs[name], parts[name])
        mu, sigma = values["beta"], values["alpha"]
        if not (np.all(np.isfinite(mu)) and np.all(mu > 0)):
            raise DomainError("mean left the positive half-line")
        if not (np.all(np.isfinite(sigma)) and np.all(sigma > SIGMA_FLOOR)):
            raise DomainError("precision left the valid region")
        if m.zeroprob is not None:
            # nu itself may round to 0 or 1; everything the fit uses is
            # evaluated on the log scale from eta, so only overflow there is fatal
            nu = values["gamma"]
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                log_nu, log_1mnu, log_d, slope = m.zeroprob.link.log_terms(etas["gamma"])
                r0, r1 = np.exp(log_d - log_nu), np.exp(log_d - log_1mnu)
            zl = (log_nu, log_1mnu, r0, r1, slope)
            if not all(np.all(np.isfinite(v)) for v in zl):
                raise DomainError("zero probability too close to 0 or 1")
        else:
            nu = np.zeros(self.n)
            zl = tuple(np.zeros(self.n) for _ in range(5))
        if check_rank:
            self._check_rank(jac)
        g1, g2 = m.mean.link, m.precision.link
        return _State(
            theta, mu, sigma, nu, jac,
            g1.dmu_deta(mu), g1.dweight(mu), g2.dmu_deta(sigma), g2.dweight(sigma), *zl,
        )

    def _check_rank(self, jac: dict) -> None:
        pos = ~self.zero
        for name, J in jac.items():
            rows = J if name == "gamma" else J[pos]
            if J.shape[1] == 0:
                continue
            sv = np.linalg.svd(rows, compute_uv=False)
            rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
            if rank < J.shape[1]:
                raise RankDeficientError(name, rank, J.shape[1])

    # ------------------------------------------------------------------ #
    # log-likelihood

    def loglik_terms(self, st: _State) -> tuple[np.ndarray, np.ndarray]:
        """Per-observation (binary part, positive part) log-likelihood."""
        y, k = self.y_safe, self.kappa
        mu, s = st.mu, st.sigma
        c = -0.5 * np.log(16 * np.pi) + 0.5 * s - 0.5 * np.log(mu) + 0.5 * np.log(s + 1)
        pos = (
            c
            - 1.5 * np.log(y)
            - (s + 1) * y / (4 * mu)
            - mu * s**2 / (4 * (s + 1) * y)
            + np.log(y + mu * s / (s + 1))
        )
        if self.model.zeroprob is not None:
            binary = np.where(self.zero, st.log_nu, st.log_1mnu)
        else:
            binary = np.zeros(self.n)
        return binary, k * pos

    def loglik(self, theta, part: str = "all") -> float:
        binary, pos = self.loglik_terms(self.state(theta))
        if part == "zero":
            return float(np.sum(binary))
        if part == "positive":
            return float(np.sum(pos))
        return float(np.sum(binary) + np.sum(pos))

    # ------------------------------------------------------------------ #
    # derivatives

    def components(self, st: _State) -> ScoreComponents:
        y, k = self.y_safe, self.kappa
        mu, s = st.mu, st.sigma
        D = (s + 1) * y + s * mu
        y_star = (s + 1) * y / (4 * mu**2) - s**2 / (4 * (s + 1) * y) + s / D
        y_bullet = (
            mu / ((s + 1) * D) - y / (4 * mu) - mu * s * (s + 2) / (4 * (s + 1) ** 2 * y)
        )
        if self.model.zeroprob is not None:
            nu = st.nu
            with np.errstate(divide="ignore"):
                y_circ = self.zero / (nu * (1 - nu))
                nu_circ = 1 / (1 - nu)
        else:
            y_circ = nu_circ = np.zeros(self.n)
        return ScoreComponents(
            k, k * y_star, k * (1 / (2 * mu)), k * y_bullet, k * (-(s + 2) / (2 * (s + 1))),
            y_circ, nu_circ,
        )

    def _second(self, st: _State):
        y, k = self.y_safe, self.kappa
        mu, s = st.mu, st.sigma
        D = (s + 1) * y + s * mu
        d_mumu = k * (1 / (2 * mu**2) - s**2 / D**2 - y * (s + 1) / (2 * mu**3))
        d_musig = k * (y / D**2 + y / (4 * mu**2) - s * (s + 2) / (4 * (s + 1) ** 2 * y))
        d_sigsig = k * (
            1 / (2 * (s + 1) ** 2) - (y + mu) ** 2 / D**2 - mu / (2 * (s + 1) ** 3 * y)
        )
        # second derivative of the binary part with respect to eta (not nu)
        d_etaeta = self.zero * (st.r0 * st.s - st.r0**2) - self.kappa * (st.r1 * st.s + st.r1**2)
        return d_mumu, d_musig, d_sigsig, d_etaeta

    def eta_gradients(self, st: _State, sc: ScoreComponents | None = None) -> dict:
        """dl_i / d(eta_i) for each block."""
        sc = sc or self.components(st)
        out = {"beta": sc.d_mu * st.a, "alpha": sc.d_sigma * st.b}
        if self.model.zeroprob is not None:
            out["gamma"] = self.zero * st.r0 - self.kappa * st.r1
        return out

    def score(self, st: _State) -> np.ndarray:
        g = self.eta_gradients(st)
        return np.concatenate([st.jac[name].T @ g[name] for name in self.slices])

    def case_weight_delta(self, st: _State) -> np.ndarray:
        """Per-observation score contributions, shape (dim, n)."""
        g = self.eta_gradients(st)
        return np.vstack([st.jac[name].T * g[name] for name in self.slices])

    def hessian(self, st: _State) -> np.ndarray:
        sc = self.components(st)
        d_mumu, d_musig, d_sigsig, d_etaeta = self._second(st)
        g = self.eta_gradients(st, sc)
        X, Z = st.jac["beta"], st.jac["alpha"]
        w_d = (d_mumu * st.a + sc.d_mu * st.da) * st.a
        w_m = d_musig * st.a * st.b
        w_e = (d_sigsig * st.b + sc.d_sigma * st.db) * st.b
        H = np.zeros((self.dim, self.dim))
        sb, sa = self.slices["beta"], self.slices["alpha"]
        m = self.model
        H[sb, sb] = X.T @ (w_d[:, None] * X) + m.mean.predictor.curvature(
            self.covs["beta"], st.theta[sb], g["beta"]
        )
        H[sb, sa] = X.T @ (w_m[:, None] * Z)
        H[sa, sb] = H[sb, sa].T
        H[sa, sa] = Z.T @ (w_e[:, None] * Z) + m.precision.predictor.curvature(
            self.covs["alpha"], st.theta[sa], g["alpha"]
        )
        if m.zeroprob is not None:
            sg = self.slices["gamma"]
            W = st.jac["gamma"]
            H[sg, sg] = W.T @ (d_etaeta[:, None] * W) + m.zeroprob.predictor.curvature(
                self.covs["gamma"], st.theta[sg], g["gamma"]
            )
        return 0.5 * (H + H.T)

    def information_blocks(self, st: _State, need_positive: bool = True) -> InformationBlocks:
        mu, s, nu = st.mu, st.sigma, st.nu
        if need_positive:
            lam = lambda_vector(mu, s, method=self.lambda_method)
            w = 1 - nu
            V = w * (s / (2 * mu**2) + s**2 / (s + 1) ** 2 * lam) * st.a**2
            S = w * (1 / (2 * mu * (s + 1)) + s * mu / (s + 1) ** 3 * lam) * st.a * st.b
            U = w * ((s**2 + 3 * s + 1) / (2 * s**2 * (s + 1) ** 2) + mu**2 / (s + 1) ** 4 * lam) * st.b**2
        else:
            lam = V = S = U = np.full(self.n, np.nan)
        if self.model.zeroprob is not None:
            Q = st.r0 * st.r1
        else:
            Q = np.zeros(self.n)
        return InformationBlocks(V, S, U, Q, lam)

    def fisher(self, st: _State, part: str = "all") -> np.ndarray:
        need_pos = part in ("all", "positive")
        ib = self.information_blocks(st, need_positive=need_pos)
        F = np.zeros((self.dim, self.dim))
        if need_pos:
            X, Z = st.jac["beta"], st.jac["alpha"]
            sb, sa = self.slices["beta"], self.slices["alpha"]
            F[sb, sb] = X.T @ (ib.V[:, None] * X)
            F[sb, sa] = X.T @ (ib.S[:, None] * Z)
            F[sa, sb] = F[sb, sa].T
            F[sa, sa] = Z.T @ (ib.U[:, None] * Z)
        if self.model.zeroprob is not None and part in ("all", "zero"):
            sg = self.slices["gamma"]
            W = st.jac["gamma"]
            F[sg, sg] = W.T @ (ib.Q[:, None] * W)
        return 0.5 * (F + F.T)


# --------------------------------------------------------------------------- #
# public evaluation API
# --------------------------------------------------------------------------- #


def loglik(theta, model: ModelSpec, data: Mapping) -> float:
    return BoundModel(model, data).loglik(theta)


def score_components(theta, model: ModelSpec, data: Mapping) -> ScoreComponents:
    bm = BoundModel(model, data)
    return bm.components(bm.state(theta))


def score(theta, model: ModelSpec, data: Mapping) -> np.ndarray:
    bm = BoundModel(model, data)
    return bm.score(bm.state(theta))


def hessian(theta, model: ModelSpec, data: Mapping) -> np.ndarray:
    bm = BoundModel(model, data)
    return bm.hessian(bm.state(theta))


def fisher_information(
    theta, model: ModelSpec, data: Mapping, lambda_method: str = "closed"
) -> np.ndarray:
    bm = BoundModel(model, data, lambda_method)
    return bm.fisher(bm.state(theta))


def information_blocks(theta, model: ModelSpec, data: Mapping) -> InformationBlocks:
    bm = BoundModel(model, data)
    return bm.information_blocks(bm.state(theta))


def inverse_information_blockwise(theta, model: ModelSpec, data: Mapping) -> np.ndarray:
    """Inverse information assembled from Schur complements of the (beta, alpha) block."""
    bm = BoundModel(model, data)
    st = bm.state(theta)
    ib = bm.information_blocks(st)
    X, Z = st.jac["beta"], st.jac["alpha"]
    V, S, U = np.diag(ib.V), np.diag(ib.S), np.diag(ib.U)
    XVX_inv = np.linalg.inv(X.T @ V @ X)
    ZUZ_inv = np.linalg.inv(Z.T @ U @ Z)
    W1 = V - S @ Z @ ZUZ_inv @ Z.T @ S
    W2 = U - S @ X @ XVX_inv @ X.T @ S
    bb = np.linalg.inv(X.T @ W1 @ X)
    aa = np.linalg.inv(Z.T @ W2 @ Z)
    ba = -bb @ X.T @ S @ Z @ ZUZ_inv
    out = np.zeros((bm.dim, bm.dim))
    sb, sa = bm.slices["beta"], bm.slices["alpha"]
    out[sb, sb], out[sb, sa], out[sa, sb], out[sa, sa] = bb, ba, ba.T, aa
    if "gamma" in bm.slices:
        W = st.jac["gamma"]
        sg = bm.slices["gamma"]
        out[sg, sg] = np.linalg.inv(W.T @ (ib.Q[:, None] * W))
    return out


# --------------------------------------------------------------------------- #
# fitting
# --------------------------------------------------------------------------- #


@dataclass
class FitOptions:
    tol_score: float = 1e-6
    tol_loglik: float = 1e-10
    max_iter: int = 200
    max_halvings: int = 30
    separate: bool = True
    check_rank: bool = True
    start: np.ndarray | None = None
    covariance: str = "expected"
    lambda_method: str = "closed"

    def __post_init__(self):
        if self.lambda_method not in LAMBDA_METHODS:
            raise ValueError(f"lambda_method must be one of {LAMBDA_METHODS}")
        if self.covariance not in ("expected", "observed"):
            raise ValueError("covariance must be 'expected' or 'observed'")


@dataclass
class IterationRecord:
    part: str
    iteration: int
    theta: np.ndarray
    loglik: float
    step_scale: float
    score_max: float


@dataclass
class FitResult:
    theta: np.ndarray
    names: list
    slices: dict
    inv_info: np.ndarray
    loglik: float
    trace: list
    converged: bool
    n: int
    n0: int
    model: ModelSpec
    score_max: float
    options: FitOptions = field(default_factory=FitOptions)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.inv_info))

    @property
    def dim(self) -> int:
        return self.theta.size

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.dim

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def block(self, name: str) -> np.ndarray:
        return self.theta[self.slices[name]]


def _solve_information(info: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    evals = np.linalg.eigvalsh(info)
    if evals[0] < 1e-12 * max(np.trace(info), np.finfo(float).tiny):
        warnings.warn(
            "information matrix is near singular; falling back to a pseudo-inverse",
            RuntimeWarning,
            stacklevel=3,
        )
        return np.linalg.pinv(info, hermitian=True) @ rhs
    return linalg.cho_solve(linalg.cho_factor(info), rhs)


def inverse_information(info: np.ndarray) -> np.ndarray:
    return _solve_information(info, np.eye(info.shape[0]))


def _ols(X, t):
    coef, *_ = np.linalg.lstsq(X, t, rcond=None)
    return coef


def starting_values(bm: BoundModel) -> np.ndarray:
    """Deterministic starting point.

    Mean block: least squares of ``g1(y)`` on the positives (log-linearised
    for ``exp_ratio``); precision: method of moments from the squared
    coefficient of variation of ``y / mu0``; zero block: ``g3(n0/n)``.
    """
    m = bm.model
    theta = np.zeros(bm.dim)
    pos = ~bm.zero
    y = bm.y[pos]

    mean_pred, g1 = m.mean.predictor, m.mean.link
    cov = bm.covs["beta"]
    sb = bm.slices["beta"]
    if mean_pred.kind == LINEAR:
        X = mean_pred.design(cov)
        theta[sb] = _ols(X[pos], g1(y))
    elif mean_pred.kind == EXP_RATIO:
        target = g1(y)
        if np.all(target > 0):
            c0, c1 = _ols(np.column_stack([np.ones(y.size), 1 / cov[pos, 0]]), np.log(target))
            theta[sb] = [np.exp(c0), c1]
        else:
            theta[sb] = [np.mean(target), 0.0]
    else:
        theta[sb] = mean_pred.start
    try:
        mu0 = g1.inverse(mean_pred.eta(cov, theta[sb]))
        if not np.all(mu0 > 0):
            raise DomainError("invalid start")
    except DomainError:
        if mean_pred.kind != LINEAR:
            raise
        theta[sb] = 0.0
        theta[sb.start] = g1(np.mean(y))
        mu0 = np.full(bm.n, np.mean(y))

    r = y / mu0[pos]
    cv2 = np.var(r) / np.mean(r) ** 2
    if cv2 > 0:
        sigma0 = ((2 - 2 * cv2) + np.sqrt(12 * cv2 + 4)) / (2 * cv2)
    else:
        sigma0 = 100.0
    sigma0 = max(sigma0, 0.1)
    theta[bm.slices["alpha"]] = _block_start(m.precision, m.precision.link(sigma0))

    if m.zeroprob is not None:
        theta[bm.slices["gamma"]] = _block_start(m.zeroprob, m.zeroprob.link(bm.n0 / bm.n))
    return theta


def _block_start(comp, level: float) -> np.ndarray:
    pred = comp.predictor
    if pred.kind == LINEAR:
        out = np.zeros(pred.n_params)
        if pred.intercept:
            out[0] = level
        return out
    if pred.kind == EXP_RATIO:
        return np.array([level, 0.0])
    return np.asarray(pred.start, dtype=float)


def _curvature_scale(H: np.ndarray, U: np.ndarray, step: np.ndarray) -> float:
    """Step length along the scoring direction, capped at 1.

    The full scoring step overshoots when the observed curvature along the
    direction exceeds the expected one; the quadratic model then gives
    ``U'd / d'(-H)d`` as the maximising length.
    """
    slope = float(U @ step)
    curv = float(step @ (-H) @ step)
    if slope > 0 and curv > 0 and slope < curv:
        return slope / curv
    return 1.0


def _newton_step(H: np.ndarray, U: np.ndarray) -> np.ndarray | None:
    """``(-H)^{-1} U`` when ``-H`` is positive definite, else ``None``."""
    try:
        factor = linalg.cho_factor(-H)
    except linalg.LinAlgError:
        return None
    step = linalg.cho_solve(factor, U)
    return step if np.all(np.isfinite(step)) else None


def _scoring_loop(
    bm: BoundModel, theta: np.ndarray, part: str, opts: FitOptions, trace: list
) -> tuple[np.ndarray, float, float]:
    blocks = {"zero": ("gamma",), "positive": ("beta", "alpha"), "all": ("beta", "alpha", "gamma")}
    idx = bm.index(*blocks[part])
    theta = theta.copy()
    st = bm.state(theta, check_rank=opts.check_rank)
    ll = bm.loglik(theta, part)
    U = bm.score(st)[idx]
    for it in range(1, opts.max_iter + 1):
        info = bm.fisher(st, part)[np.ix_(idx, idx)]
        step = _solve_information(info, U)
        H = bm.hessian(st)[np.ix_(idx, idx)]
        scale = _curvature_scale(H, U, step)
        if scale < 1.0:
            # scoring would need a shortened step and then converges only
            # linearly; take the Newton step instead where it is well defined
            newton = _newton_step(H, U)
            if newton is not None:
                step, scale = newton, 1.0
        for _ in range(opts.max_halvings + 1):
            cand = theta.copy()
            cand[idx] += scale * step
            try:
                ll_new = bm.loglik(cand, part)
                ok = np.isfinite(ll_new) and ll_new >= ll - 1e-12
            except (DomainError, FloatingPointError):
                ok = False
            if ok:
                break
            scale *= 0.5
        else:
            if np.max(np.abs(U)) < opts.tol_score:
                return theta, ll, float(np.max(np.abs(U)))
            raise ConvergenceError(
                f"step halving failed at iteration {it} ({part} part)", trace
            )
        change = abs(ll_new - ll) / max(abs(ll), 1.0)
        theta, ll = cand, ll_new
        st = bm.state(theta, check_rank=opts.check_rank)
        U = bm.score(st)[idx]
        smax = float(np.max(np.abs(U))) if U.size else 0.0
        trace.append(IterationRecord(part, it, theta.copy(), ll, scale, smax))
        logger.debug("%s it=%d ll=%.12g step=%g |U|=%.3g", part, it, ll, scale, smax)
        if smax < opts.tol_score and change < opts.tol_loglik:
            return theta, ll, smax
    raise ConvergenceError(
        f"no convergence after {opts.max_iter} iterations ({part} part)", trace
    )


def fit(model: ModelSpec, data: Mapping, options: FitOptions | None = None) -> FitResult:
    """Maximum likelihood fit by Fisher scoring with step halving.

    The covariance of the estimates is the inverse expected information
    unless ``options.covariance == "observed"`` (inverse negative Hessian).

    With ``options.separate`` (the default) the binary and positive parts
    of the likelihood are maximised independently, which is exact since
    they share no parameters.

    Raises ``ConvergenceError`` (carrying the trace) after ``max_iter``
    iterations and ``RankDeficientError`` when a derivative matrix loses
    rank.
    """
    opts = options or FitOptions()
    bm = BoundModel(model, data, opts.lambda_method)
    bm.validate()
    theta = (
        np.asarray(opts.start, dtype=float).copy()
        if opts.start is not None
        else starting_values(bm)
    )
    trace: list = []
    if opts.separate:
        theta, _, s_pos = _scoring_loop(bm, theta, "positive", opts, trace)
        s_zero = 0.0
        if model.zeroprob is not None:
            theta, _, s_zero = _scoring_loop(bm, theta, "zero", opts, trace)
        smax = max(s_pos, s_zero)
    else:
        theta, _, smax = _scoring_loop(bm, theta, "all", opts, trace)
    st = bm.state(theta, check_rank=opts.check_rank)
    info = bm.fisher(st) if opts.covariance == "expected" else -bm.hessian(st)
    return FitResult(
        theta=theta,
        names=list(bm.names),
        slices=dict(bm.slices),
        inv_info=inverse_information(info),
        loglik=bm.loglik(theta),
        trace=trace,
        converged=True,
        n=bm.n,
        n0=bm.n0,
        model=model,
        score_max=smax,
        options=opts,
    )


def fitted_values(fit: FitResult, data: Mapping) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fitted ``(mu_i, sigma_i, nu_i)``."""
    bm = BoundModel(fit.model, data)
    st = bm.state(fit.theta)
    return st.mu, st.sigma, st.nu


# --------------------------------------------------------------------------- #
# Wald inference
# --------------------------------------------------------------------------- #


@dataclass
class WaldTable:
    names: list
    estimate: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p_value: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    def rows(self) -> list[dict]:
        return [
            {
                "parameter": n,
                "estimate": float(e),
                "se": float(s),
                "z": float(z),
                "p_value": float(p),
                "ci_lower": float(lo),
                "ci_upper": float(hi),
            }
            for n, e, s, z, p, lo, hi in zip(
                self.names, self.estimate, self.se, self.z, self.p_value, self.lower, self.upper
            )
        ]


def wald_inference(fit: FitResult, level: float = 0.95) -> WaldTable:
    if not fit.converged:
        raise ConvergenceError("Wald inference requires a converged fit", fit.trace)
    if not 0 <= level <= 1:
        raise ValueError("level must lie in [0, 1]")
    se = fit.se
    z = fit.theta / se
    p = 2.0 * special.ndtr(-np.abs(z))
    q = special.ndtri(0.5 + 0.5 * level) if level < 1 else np.inf
    half = q * se
    return WaldTable(list(fit.names), fit.theta.copy(), se, z, p, fit.theta - half, fit.theta + half, level)
