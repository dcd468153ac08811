"""Numerical tools for Eaton-kernel recurrence checks in the normal-means model."""

from .dist import NcChiSq, SeriesSpec, bessel_ratio, ncchisq_moment, ncchisq_pdf, ncchisq_sample, tk_value, wk_value
from .kernels import (TransitionKernel, WeightConfig, T_normalizer, T_tilde_density, T_tilde_sample,
                      detailed_balance_check, eaton_R_moment, eaton_R_sample, fullspace_R_sample,
                      fullspace_T_sample, lebesgue_image_kernel, reduced_eaton_kernel,
                      weighted_eaton_kernel)
from .model import (PriorParams, marginal, posterior_density, posterior_mean_fullspace,
                    posterior_moment, posterior_sample)
from .quadrature import QuadratureSpec

__version__ = "0.1.0"
