"""Ordinary least squares for the two structural equations of a mediation model.

    mediator model:  G ~ 1 + S + X          (alpha = coefficient of S)
    outcome model:   Y ~ 1 + G + S + X      (beta  = coefficient of G)

Standard errors are the classical homoscedastic ones, stored on the
finite-sample scale so that ``t_stat = estimate / std_error``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateFitError, DomainError, InsufficientDataError, SingularDesignError

RANK_TOL = 1e-10
DEGENERATE_TOL = 1e-12

OK, SINGULAR, DEGENERATE = 0, 1, 2


def _column(values, name):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Exposure ``s``, mediator ``g``, outcome ``y`` and an ``n x q`` covariate block ``x``."""

    s: np.ndarray
    g: np.ndarray
    y: np.ndarray
    x: Optional[np.ndarray] = None
    row_ids: Optional[Sequence] = None
    covariate_names: Sequence[str] = field(default=())

    def __post_init__(self):
        s = _column(self.s, "s")
        g = _column(self.g, "g")
        y = _column(self.y, "y")
        n = s.shape[0]
        x = np.zeros((n, 0)) if self.x is None else np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if n < 1 or g.shape[0] != n or y.shape[0] != n or x.ndim != 2 or x.shape[0] != n:
            raise DomainError("s, g, y and x must share the same number of rows n >= 1")
        for name, arr in (("s", s), ("g", g), ("y", y), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"column {name} contains non-finite values")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.row_ids is not None and len(self.row_ids) != n:
            raise DomainError("row_ids length does not match n")
        names = tuple(self.covariate_names) or tuple(f"X{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DomainError("covariate_names length does not match the number of covariates")
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def q(self) -> int:
        return self.x.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        rows = None if self.row_ids is None else [self.row_ids[i] for i in idx]
        return Dataset(self.s[idx], self.g[idx], self.y[idx], self.x[idx], rows, self.covariate_names)

    def alpha_design(self):
        """Design matrix and response of the mediator model; alpha sits in column 1."""
        return np.column_stack([np.ones(self.n), self.s, self.x]), self.g

    def beta_design(self):
        """Design matrix and response of the outcome model; beta sits in column 1."""
        return np.column_stack([np.ones(self.n), self.g, self.s, self.x]), self.y


@dataclass(frozen=True)
class RegressionFit:
    estimate: float
    std_error: float
    t_stat: float
    df_residual: int
    target: str  # "alpha" or "beta"


def ols_batch(X, y, nobs, col=1):
    """Fit many small least-squares problems at once and report one coefficient.

    Parameters
    ----------
    X : array, shape (B, L, p)
        Stacked design matrices. Rows beyond ``nobs[b]`` must be zero.
    y : array, shape (B, L)
        Stacked responses, zero-padded like ``X``.
    nobs : array of int, shape (B,)
        Number of real rows in each problem.
    col : int
        Column whose coefficient is reported.

    Returns
    -------
    estimate, std_error, status : arrays of shape (B,)
        ``status`` is ``OK``, ``SINGULAR`` (smallest singular value of the
        design below ``1e-10`` times the largest) or ``DEGENERATE`` (residual
        variance at or below ``1e-12`` times the response variance). Estimates
        and standard errors are NaN wherever the status is not ``OK``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    nobs = np.asarray(nobs)
    B, L, p = X.shape
    Q, R = np.linalg.qr(X)
    # X and R share singular values. 1 / (|R|_F |R^-1|_F) bounds their ratio from
    # below, so the exact SVD is only needed where that bound is inconclusive.
    zero_pivot = np.any(np.diagonal(R, axis1=1, axis2=2) == 0, axis=1)
    R = np.where(zero_pivot[:, None, None], np.eye(p), R)
    Rinv = np.linalg.inv(R)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        bound = 1.0 / (np.linalg.norm(R, axis=(1, 2)) * np.linalg.norm(Rinv, axis=(1, 2)))
    singular = zero_pivot.copy()
    check = ~zero_pivot & ~(bound >= RANK_TOL)
    if check.any():
        sv = np.linalg.svd(R[check], compute_uv=False)
        singular[check] = ~(sv[:, -1] >= RANK_TOL * sv[:, 0])
    if singular.any():
        R[singular] = np.eye(p)
        Rinv[singular] = np.eye(p)
    coef = np.einsum("bij,bj->bi", Rinv, np.einsum("blp,bl->bp", Q, y))
    resid = y - np.einsum("blp,bp->bl", X, coef)
    df = nobs - p
    s2 = np.einsum("bl,bl->b", resid, resid) / df
    mask = np.arange(L)[None, :] < nobs[:, None]
    ybar = y.sum(axis=1) / nobs
    dev = np.where(mask, y - ybar[:, None], 0.0)
    yvar = np.einsum("bl,bl->b", dev, dev) / np.maximum(nobs - 1, 1)
    # a response that is constant up to rounding counts as zero variance
    ymax = np.max(np.abs(y), axis=1)
    flat = yvar <= (64 * np.finfo(float).eps * ymax) ** 2
    degenerate = ~singular & ((s2 <= DEGENERATE_TOL * yvar) | flat)
    se = np.sqrt(s2 * np.einsum("bk,bk->b", Rinv[:, col, :], Rinv[:, col, :]))
    status = np.where(singular, SINGULAR, np.where(degenerate, DEGENERATE, OK))
    bad = status != OK
    est = np.where(bad, np.nan, coef[:, col])
    se = np.where(bad, np.nan, se)
    return est, se, status


def _fit(X, y, target, label):
    n, p = X.shape
    if n < p + 1:
        raise InsufficientDataError(
            f"{label} regression needs at least {p + 1} rows for {p} coefficients, got {n}"
        )
    est, se, status = ols_batch(X[None], y[None], np.array([n]))
    if status[0] == SINGULAR:
        raise SingularDesignError(f"{label} design matrix is rank deficient")
    if status[0] == DEGENERATE:
        raise DegenerateFitError(f"{label} regression has (near) zero residual variance")
    return RegressionFit(float(est[0]), float(se[0]), float(est[0] / se[0]), n - p, target)


def fit_alpha(ds: Dataset) -> RegressionFit:
    """OLS of G on (1, S, X); returns the S coefficient."""
    X, y = ds.alpha_design()
    return _fit(X, y, "alpha", "mediator")


def fit_beta(ds: Dataset) -> RegressionFit:
    """OLS of Y on (1, G, S, X); returns the G coefficient."""
    X, y = ds.beta_design()
    return _fit(X, y, "beta", "outcome")
