"""Predictor and model specifications.

A model has three systematic components, one per distribution parameter:

    g1(mu_i)    = f1(x_i; beta)
    g2(sigma_i) = f2(z_i; alpha)
    g3(nu_i)    = f3(w_i; gamma)

Each ``f`` is either linear in its coefficients, the builtin
``exp_ratio`` form ``b1 * exp(b2 / x)``, or a user function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, ModelSpecError
from .links import POSITIVE, UNIT, LinkFunction, get_link

LINEAR = "linear"
EXP_RATIO = "exp_ratio"
CUSTOM = "custom"

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class PredictorSpec:
    """How a block's predictor depends on covariates and coefficients.

    For ``custom`` predictors, ``func(cov, params)`` receives the
    ``(n, len(columns))`` covariate matrix and returns the predictor
    vector; ``jac`` (optional) returns the ``(n, n_params)`` Jacobian.
    Missing derivatives are taken by central differences.
    """

    kind: str = LINEAR
    columns: tuple[str, ...] = ()
    intercept: bool = True
    func: Callable | None = None
    jac: Callable | None = None
    n_custom: int = 0
    start: tuple[float, ...] | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (LINEAR, EXP_RATIO, CUSTOM):
            raise ModelSpecError(f"unknown predictor kind {self.kind!r}")
        if self.kind == EXP_RATIO and len(self.columns) != 1:
            raise ModelSpecError("exp_ratio needs exactly one covariate")
        if self.kind == CUSTOM and (self.func is None or self.n_custom < 1):
            raise ModelSpecError("custom predictor needs func and n_params >= 1")
        if self.kind == LINEAR and not self.intercept and not self.columns:
            raise ModelSpecError("linear predictor without intercept needs covariates")

    @property
    def n_params(self) -> int:
        if self.kind == LINEAR:
            return len(self.columns) + int(self.intercept)
        if self.kind == EXP_RATIO:
            return 2
        return self.n_custom

    @property
    def nonlinear(self) -> bool:
        return self.kind != LINEAR

    def param_names(self, prefix: str) -> list[str]:
        if self.names is not None:
            return [f"{prefix}.{n}" for n in self.names]
        if self.kind == LINEAR:
            terms = (["(Intercept)"] if self.intercept else []) + list(self.columns)
            return [f"{prefix}.{t}" for t in terms]
        return [f"{prefix}{k + 1}" for k in range(self.n_params)]

    def design(self, cov: np.ndarray) -> np.ndarray:
        """Linear design matrix (intercept column first)."""
        n = cov.shape[0]
        cols = [np.ones(n)] if self.intercept else []
        cols.extend(cov[:, j] for j in range(cov.shape[1]))
        return np.column_stack(cols) if cols else np.empty((n, 0))

    def eta(self, cov: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kind == LINEAR:
            return self.design(cov) @ b
        if self.kind == EXP_RATIO:
            return b[0] * np.exp(b[1] / cov[:, 0])
        return np.asarray(self.func(cov, b), dtype=float)

    def jacobian(self, cov: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kind == LINEAR:
            return self.design(cov)
        if self.kind == EXP_RATIO:
            x = cov[:, 0]
            e = np.exp(b[1] / x)
            return np.column_stack([e, b[0] * e / x])
        if self.jac is not None:
            return np.asarray(self.jac(cov, b), dtype=float)
        return _fd_jacobian(lambda v: self.eta(cov, v), b)

    def curvature(self, cov: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``sum_i w_i * d2 eta_i / db db'`` (zero for linear predictors)."""
        k = self.n_params
        if self.kind == LINEAR:
            return np.zeros((k, k))
        if self.kind == EXP_RATIO:
            x = cov[:, 0]
            e = np.exp(b[1] / x)
            h12 = np.sum(w * e / x)
            h22 = np.sum(w * b[0] * e / x**2)
            return np.array([[0.0, h12], [h12, h22]])
        out = np.zeros((k, k))
        for j in range(k):
            h = _FD_STEP * (abs(b[j]) + 1.0)
            up, dn = b.copy(), b.copy()
            up[j] += h
            dn[j] -= h
            dj = (self.jacobian(cov, up) - self.jacobian(cov, dn)) / (2.0 * h)
            out[j] = w @ dj
        return 0.5 * (out + out.T)


def _fd_jacobian(f: Callable, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    cols = []
    for j in range(b.size):
        h = _FD_STEP * (abs(b[j]) + 1.0)
        up, dn = b.copy(), b.copy()
        up[j] += h
        dn[j] -= h
        cols.append((f(up) - f(dn)) / (2.0 * h))
    return np.column_stack(cols)


def linear(*columns: str, intercept: bool = True) -> PredictorSpec:
    return PredictorSpec(LINEAR, tuple(columns), intercept)


def exp_ratio(column: str) -> PredictorSpec:
    """Builtin ``b1 * exp(b2 / x)`` predictor."""
    return PredictorSpec(EXP_RATIO, (column,), intercept=False)


def custom(
    func: Callable,
    columns: Sequence[str],
    n_params: int,
    start: Sequence[float],
    jac: Callable | None = None,
    names: Sequence[str] | None = None,
) -> PredictorSpec:
    return PredictorSpec(
        CUSTOM,
        tuple(columns),
        intercept=False,
        func=func,
        jac=jac,
        n_custom=n_params,
        start=tuple(float(s) for s in start),
        names=tuple(names) if names is not None else None,
    )


@dataclass(frozen=True)
class Component:
    link: LinkFunction
    predictor: PredictorSpec = field(default_factory=linear)


@dataclass(frozen=True)
class ModelSpec:
    """Three systematic components; ``zeroprob=None`` is the plain RBS regression."""

    mean: Component
    precision: Component
    zeroprob: Component | None = None
    response: str = "y"

    def __post_init__(self):
        for comp, dom, what in (
            (self.mean, POSITIVE, "mean"),
            (self.precision, POSITIVE, "precision"),
            (self.zeroprob, UNIT, "zeroprob"),
        ):
            if comp is not None and comp.link.domain != dom:
                raise ModelSpecError(f"{comp.link.name} link is not valid for the {what} block")

    @classmethod
    def build(
        cls,
        mean: PredictorSpec | None = None,
        precision: PredictorSpec | None = None,
        zeroprob: PredictorSpec | None = None,
        *,
        mean_link: str = "log",
        precision_link: str = "log",
        zeroprob_link: str = "probit",
        response: str = "y",
        with_zeros: bool = True,
    ) -> "ModelSpec":
        """Convenience constructor with the default log/log/probit links.

        Blocks left as ``None`` become intercept-only; set ``with_zeros=False``
        to drop the zero-probability block entirely.
        """
        zp = None
        if with_zeros:
            zp = Component(get_link(zeroprob_link, UNIT), zeroprob or linear())
        return cls(
            Component(get_link(mean_link), mean or linear()),
            Component(get_link(precision_link), precision or linear()),
            zp,
            response,
        )

    def blocks(self) -> list[tuple[str, Component]]:
        out = [("beta", self.mean), ("alpha", self.precision)]
        if self.zeroprob is not None:
            out.append(("gamma", self.zeroprob))
        return out

    def param_names(self) -> list[str]:
        names = []
        for prefix, comp in self.blocks():
            names.extend(comp.predictor.param_names(prefix))
        return names

    @property
    def n_params(self) -> int:
        return sum(c.predictor.n_params for _, c in self.blocks())

    def columns(self) -> set[str]:
        cols = {self.response}
        for _, comp in self.blocks():
            cols.update(comp.predictor.columns)
        return cols


def get_column(data: Mapping, name: str) -> np.ndarray:
    try:
        col = data[name]
    except KeyError:
        raise DataError(f"column {name!r} not found in data") from None
    col = np.asarray(col, dtype=float)
    if not np.all(np.isfinite(col)):
        raise DataError(f"column {name!r} contains missing or non-finite values")
    return col


def covariates(data: Mapping, pred: PredictorSpec, n: int) -> np.ndarray:
    if not pred.columns:
        return np.empty((n, 0))
    return np.column_stack([get_column(data, c) for c in pred.columns])
