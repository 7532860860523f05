"""Residual and local-influence diagnostics for fitted ZABS models."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np
from scipy import linalg, special

from .distributions import ZabsParams, zabs_cdf, zabs_sample
from .errors import ConvergenceError, SingularHessianError, ZabsError
from .estimation import BoundModel, FitResult, fit

logger = logging.getLogger(__name__)

CDF_CLIP = 1e-12


@dataclass
class ResidualSet:
    residuals: np.ndarray
    seed: int
    mu: np.ndarray
    sigma: np.ndarray
    nu: np.ndarray
    uniforms: np.ndarray


@dataclass
class EnvelopeBands:
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    replicates: int
    failed: int
    band: float
    theoretical: np.ndarray

    def coverage(self, residuals: np.ndarray) -> float:
        """Fraction of sorted observed residuals inside the band."""
        r = np.sort(residuals)
        return float(np.mean((r >= self.lower) & (r <= self.upper)))


@dataclass
class BlockInfluence:
    C: np.ndarray
    d_max: np.ndarray
    eigenvalue: float
    threshold: float
    flagged: np.ndarray


@dataclass
class InfluenceReport:
    blocks: dict
    ridge: float

    def __getitem__(self, block: str) -> BlockInfluence:
        return self.blocks[block]


# Streams are children of SeedSequence(seed) so they never coincide with
# default_rng(seed), which a caller may have used to generate the data.
# (SeedSequence([seed, 0]) and SeedSequence(seed) give the same stream.)
_RESIDUAL_KEY, _ENVELOPE_KEY = 0, 1


def _uniform_stream(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_RESIDUAL_KEY,)))


def _replicate_stream(seed, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_ENVELOPE_KEY, k)))


def _quantile_residuals(y, mu, sigma, nu, rng: np.random.Generator) -> tuple:
    zero = y == 0
    F = zabs_cdf(y, ZabsParams.of(mu, sigma, nu))
    u = np.where(zero, rng.random(y.size) * nu, F)
    clipped = (u < CDF_CLIP) | (u > 1 - CDF_CLIP)
    if np.any(clipped):
        warnings.warn(
            f"{int(clipped.sum())} CDF values clipped to [{CDF_CLIP}, 1 - {CDF_CLIP}]",
            RuntimeWarning,
            stacklevel=3,
        )
        u = np.clip(u, CDF_CLIP, 1 - CDF_CLIP)
    return special.ndtri(u), u


def quantile_residuals(fit_result: FitResult, data: Mapping, seed: int = 0) -> ResidualSet:
    """Randomized quantile residuals.

    Positive responses map through the fitted ZABS CDF; zeros get a
    uniform draw on ``(0, nu_i)``.  Under the true model the residuals
    are standard normal.
    """
    if not fit_result.converged:
        raise ConvergenceError("residuals need a converged fit", fit_result.trace)
    bm = BoundModel(fit_result.model, data)
    st = bm.state(fit_result.theta)
    r, u = _quantile_residuals(bm.y, st.mu, st.sigma, st.nu, _uniform_stream(seed))
    return ResidualSet(r, seed, st.mu, st.sigma, st.nu, u)


def simulate_response(fit_result: FitResult, data: Mapping, rng: np.random.Generator) -> np.ndarray:
    bm = BoundModel(fit_result.model, data)
    st = bm.state(fit_result.theta)
    return zabs_sample(bm.n, ZabsParams.of(st.mu, st.sigma, st.nu), rng)


def simulated_envelope(
    fit_result: FitResult,
    data: Mapping,
    replicates: int = 100,
    band: float = 0.95,
    seed: int = 0,
) -> EnvelopeBands:
    """Per-rank bands of sorted quantile residuals from refits to simulated data.

    Replicate ``k`` draws from its own child stream of ``seed`` so the
    result does not depend on execution order.  Refits warm-start at the
    fitted parameters.  Failed replicates are dropped; more than 10% failures
    is an error.
    """
    if replicates < 19:
        raise ValueError("need at least 19 replicates")
    if not 0 < band < 1:
        raise ValueError("band must lie in (0, 1)")
    model = fit_result.model
    opts = replace(fit_result.options, start=fit_result.theta.copy())
    sims = []
    failed = 0
    for k in range(replicates):
        rng = _replicate_stream(seed, k)
        sim = dict(data)
        sim[model.response] = simulate_response(fit_result, data, rng)
        try:
            refit = fit(model, sim, opts)
            bm = BoundModel(model, sim)
            st = bm.state(refit.theta)
            r, _ = _quantile_residuals(bm.y, st.mu, st.sigma, st.nu, rng)
        except ZabsError as exc:
            logger.info("envelope replicate %d dropped: %s", k, exc)
            failed += 1
            continue
        sims.append(np.sort(r))
    if failed > 0.1 * replicates:
        raise ConvergenceError(f"{failed} of {replicates} envelope refits failed")
    S = np.array(sims)
    lo, hi = 0.5 * (1 - band), 0.5 * (1 + band)
    lower, median, upper = np.quantile(S, [lo, 0.5, hi], axis=0)
    n = S.shape[1]
    theoretical = special.ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    return EnvelopeBands(lower, median, upper, len(sims), failed, band, theoretical)


def case_weight_delta(fit_result: FitResult, data: Mapping) -> np.ndarray:
    """Perturbation matrix for case weights at ``omega = 1``, shape (dim, n).

    Column ``i`` is observation ``i``'s contribution to the score.
    """
    bm = BoundModel(fit_result.model, data)
    return bm.case_weight_delta(bm.state(fit_result.theta))


def _sign_fix(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    return -v if v[k] < 0 else v


def _block_influence(delta: np.ndarray, neg_h: np.ndarray) -> BlockInfluence:
    try:
        cf = linalg.cho_factor(neg_h)
    except linalg.LinAlgError:
        raise SingularHessianError(
            "negative Hessian is not positive definite; retry with ridge=True"
        ) from None
    F = delta.T @ linalg.cho_solve(cf, delta)
    F = 0.5 * (F + F.T)
    C = 2.0 * np.abs(np.diag(F))
    evals, evecs = np.linalg.eigh(F)
    k = int(np.argmax(np.abs(evals)))
    d = evecs[:, k]
    d = _sign_fix(d / np.linalg.norm(d))
    threshold = 2.0 * C.mean()
    return BlockInfluence(C, d, float(evals[k]), threshold, np.flatnonzero(C > threshold))


def local_influence(fit_result: FitResult, data: Mapping, ridge: bool = False) -> InfluenceReport:
    """Case-weight local influence for each parameter block and for the full vector.

    Uses ``F = Delta' (-H)^-1 Delta`` with ``C_i = 2 F_ii``; ``d_max`` is the
    unit eigenvector of the largest-magnitude eigenvalue, signed so that its
    largest component is positive.  With ``ridge=True`` the Hessian is
    shifted by ``tau = 1e-8 * trace(-H) / dim`` and ``tau`` is reported.
    """
    if not fit_result.converged:
        raise ConvergenceError("influence needs a converged fit", fit_result.trace)
    bm = BoundModel(fit_result.model, data)
    st = bm.state(fit_result.theta)
    neg_h = -bm.hessian(st)
    tau = 0.0
    if ridge:
        tau = 1e-8 * np.trace(neg_h) / neg_h.shape[0]
        neg_h = neg_h + tau * np.eye(neg_h.shape[0])
    delta = bm.case_weight_delta(st)
    blocks = {}
    for name, s in bm.slices.items():
        blocks[name] = _block_influence(delta[s], neg_h[s, s])
    blocks["theta"] = _block_influence(delta, neg_h)
    return InfluenceReport(blocks, float(tau))
