"""Synthetic designs with known parameters, used by tests and scripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import ZabsParams, zabs_sample
from .estimation import BoundModel
from .model import ModelSpec, linear


@dataclass(frozen=True)
class SyntheticDesign:
    """A model, a covariate generator and the true coefficient vector."""

    model: ModelSpec
    theta: np.ndarray
    ranges: dict

    def covariates(self, n: int, rng: np.random.Generator) -> dict:
        return {name: rng.uniform(lo, hi, n) for name, (lo, hi) in self.ranges.items()}

    def params(self, cov: dict) -> ZabsParams:
        data = dict(cov)
        data[self.model.response] = np.ones(next(iter(cov.values())).size)
        st = BoundModel(self.model, data).state(self.theta, check_rank=False)
        return ZabsParams.of(st.mu, st.sigma, st.nu)

    def simulate(self, n: int, rng: np.random.Generator, cov: dict | None = None) -> dict:
        """Draw covariates (unless given) and then responses."""
        cov = self.covariates(n, rng) if cov is None else cov
        data = dict(cov)
        data[self.model.response] = zabs_sample(n, self.params(cov), rng)
        return data


# Log mean with two covariates, constant sigma on the identity scale and a
# probit zero model on three covariates.  Coefficients follow a published
# mycotoxin fit; the covariate ranges were chosen so that n = 300 gives
# standard errors of the same order as that fit.
FUMCORN_MODEL = ModelSpec.build(
    linear("x1", "x2"),
    linear(),
    linear("x1", "x2", "x3"),
    mean_link="log",
    precision_link="identity",
    zeroprob_link="probit",
)
FUMCORN_THETA = np.array([-4.726, 0.015, 0.057, 1.127, 1.934, -0.014, -0.030, 0.096])
FUMCORN = SyntheticDesign(
    FUMCORN_MODEL,
    FUMCORN_THETA,
    {"x1": (0.0, 100.0), "x2": (0.0, 60.0), "x3": (0.0, 30.0)},
)

# A small, well-conditioned design exercising every block with log links.
SIMPLE_MODEL = ModelSpec.build(linear("x"), linear("z"), linear("x"))
SIMPLE_THETA = np.array([1.0, 0.5, 1.5, -0.4, -0.5, 0.8])
SIMPLE = SyntheticDesign(SIMPLE_MODEL, SIMPLE_THETA, {"x": (-1.0, 1.0), "z": (-1.0, 1.0)})
