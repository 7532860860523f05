"""Zero-adjusted Birnbaum-Saunders regression."""

from .distributions import (
    ClassicalBsParams,
    RbsParams,
    ZabsParams,
    rbs_cdf,
    rbs_logpdf,
    rbs_pdf,
    rbs_quantile,
    rbs_sample,
    zabs_cdf,
    zabs_logpdf,
    zabs_moments,
    zabs_sample,
)
from .estimation import (
    FitOptions,
    FitResult,
    fisher_information,
    fit,
    fitted_values,
    hessian,
    lambda_closed_form,
    lambda_integral,
    loglik,
    score,
    wald_inference,
)
from .links import get_link
from .model import Component, ModelSpec, PredictorSpec, custom, exp_ratio, linear

__version__ = "0.1.0"
