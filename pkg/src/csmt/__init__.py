"""Cauchy-combined studentized mediation test (CSMT) with Sobel and MaxP comparators."""

from .distributions import RandomSource
from .errors import CSMTError
from .medtests import (
    TestResult,
    cauchy_combine,
    choose_k,
    csmt,
    make_partition,
    maxp_test,
    sobel_statistic,
    sobel_test,
    subsampling_t_test,
)
from .regress import Dataset, RegressionFit, fit_alpha, fit_beta

__version__ = "0.1.0"

__all__ = [
    "CSMTError",
    "Dataset",
    "RandomSource",
    "RegressionFit",
    "TestResult",
    "cauchy_combine",
    "choose_k",
    "csmt",
    "fit_alpha",
    "fit_beta",
    "make_partition",
    "maxp_test",
    "sobel_statistic",
    "sobel_test",
    "subsampling_t_test",
]
