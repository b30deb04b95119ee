"""Mediation tests: Sobel, MaxP, the subsampling studentized test and CSMT.

CSMT repeatedly splits the sample into K disjoint groups, computes a Sobel
statistic inside each group, studentizes the K values (t with K-1 df under
every null configuration because the unknown null scale cancels) and merges
the per-split p-values with a Cauchy combination.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .distributions import (
    RandomSource,
    cauchy_sf,
    clamp_p,
    draw_uniform,
    normal_sf,
    student_t_sf,
)
from .errors import (
    DegenerateFitError,
    DegenerateStatisticError,
    DomainError,
    InsufficientDataError,
    SingularDesignError,
)
from .regress import DEGENERATE, OK, SINGULAR, Dataset, fit_alpha, fit_beta, ols_batch

METHODS = ("sobel", "maxp", "subsampling_t", "csmt")
DEFAULT_M = 500


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    method: str
    statistic: float
    p_value: float
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AsymptoticNull:
    """Null configuration and the limiting variance of the Sobel statistic under it."""

    null_type: str  # "H00", "H01" or "H10"

    def __post_init__(self):
        if self.null_type not in ("H00", "H01", "H10"):
            raise DomainError(f"unknown null type {self.null_type!r}")

    @property
    def variance_factor(self) -> float:
        return 0.25 if self.null_type == "H00" else 1.0


# -- classical tests --------------------------------------------------------


def sobel_statistic(t_alpha, t_beta):
    """``t_alpha * t_beta / sqrt(t_alpha**2 + t_beta**2)``, defined as 0 at the origin.

    Works elementwise on arrays.
    """
    a = np.asarray(t_alpha, dtype=float)
    b = np.asarray(t_beta, dtype=float)
    r = np.hypot(a, b)
    big = np.where(np.abs(a) >= np.abs(b), a, b)
    small = np.where(np.abs(a) >= np.abs(b), b, a)
    # small * (big / r) keeps |S| <= min(|a|, |b|) and avoids underflow in a * b
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(r > 0, small * (big / np.where(r > 0, r, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def sobel_test(ds: Dataset) -> TestResult:
    fa, fb = fit_alpha(ds), fit_beta(ds)
    stat = sobel_statistic(fa.t_stat, fb.t_stat)
    return TestResult(
        "sobel",
        stat,
        2.0 * normal_sf(abs(stat)),
        {"t_alpha": fa.t_stat, "t_beta": fb.t_stat, "alpha_hat": fa.estimate, "beta_hat": fb.estimate},
    )


def maxp_test(ds: Dataset) -> TestResult:
    """Joint significance: the larger of the two marginal normal-reference p-values."""
    fa, fb = fit_alpha(ds), fit_beta(ds)
    p_alpha = 2.0 * normal_sf(abs(fa.t_stat))
    p_beta = 2.0 * normal_sf(abs(fb.t_stat))
    p = max(p_alpha, p_beta)
    return TestResult("maxp", p, p, {"p_alpha": p_alpha, "p_beta": p_beta, "t_alpha": fa.t_stat, "t_beta": fb.t_stat})


# -- partitioning -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Partition:
    groups: List[np.ndarray]
    n: int

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> List[int]:
        return [len(g) for g in self.groups]

    def padded(self):
        """``(k, max_size)`` index array, padded with ``n``."""
        width = max(self.sizes)
        out = np.full((self.k, width), self.n, dtype=np.intp)
        for i, g in enumerate(self.groups):
            out[i, : len(g)] = g
        return out


def _check_k(n, k):
    if isinstance(k, bool) or int(k) != k or k < 2 or 2 * k > n:
        raise DomainError(f"group count k must satisfy 2 <= k <= n/2, got k={k}, n={n}")


def _padded_split(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Random ``(k, ceil(n/k))`` index array; short groups are padded with ``n``.

    Group i takes rows ``perm[i*base:(i+1)*base]``; the ``n mod k`` leftover
    rows go to distinct groups picked at random.
    """
    perm = rng.permutation(n)
    base, extra = divmod(n, k)
    out = np.full((k, base + (extra > 0)), n, dtype=np.intp)
    out[:, :base] = perm[: k * base].reshape(k, base)
    if extra:
        out[rng.choice(k, size=extra, replace=False), base] = perm[k * base :]
    return out


def _partition_from(rng: np.random.Generator, n: int, k: int) -> Partition:
    idx = _padded_split(rng, n, k)
    return Partition([row[row < n] for row in idx], n)


def make_partition(n: int, k: int, src: RandomSource) -> Partition:
    """Random partition of ``0..n-1`` into ``k`` groups of size ``n//k`` or ``n//k + 1``.

    Rows are randomly permuted; the ``n mod k`` leftover rows go to distinct,
    randomly chosen groups.
    """
    _check_k(n, k)
    return _partition_from(src.generator(), int(n), int(k))


def choose_k(n: int) -> int:
    """Default group count ``floor(0.5 * sqrt(n))``."""
    if n < 16:
        raise InsufficientDataError(f"need n >= 16 so that K >= 2 with K = floor(0.5*sqrt(n)), got n={n}")
    return math.isqrt(int(n)) // 2


# -- subsampling t ----------------------------------------------------------


def _no_spread(v, sd):
    """True where the sample sd is zero up to rounding of the values."""
    return sd <= 16 * np.finfo(float).eps * np.max(np.abs(v), axis=-1)


def studentize(values):
    """One-sample t statistic of per-group Sobel values and its two-sided p-value.

    ``values`` has the K group statistics along its last axis; leading axes are
    independent splits. Raises :class:`DegenerateStatisticError` when any row
    has zero sample standard deviation.
    """
    v = np.asarray(values, dtype=float)
    k = v.shape[-1]
    if k < 2:
        raise DomainError("need at least two per-group values")
    mean = v.mean(axis=-1)
    sd = v.std(axis=-1, ddof=1)
    if np.any(_no_spread(v, sd)):
        raise DegenerateStatisticError("per-group Sobel statistics have zero sample standard deviation")
    t = math.sqrt(k) * mean / sd
    p = 2.0 * student_t_sf(np.abs(t), k - 1)
    if v.ndim == 1:
        return float(t), float(p)
    return t, p


def _subsample_sobel(ds: Dataset, idx):
    """Sobel statistic of every group of a stack of padded splits.

    ``idx`` has shape ``(splits, k, width)`` with padding value ``ds.n``.
    Returns ``(sobel, status)`` of shape ``(splits, k)``.
    """
    idx = np.asarray(idx)
    splits, k, width = idx.shape
    flat = idx.reshape(splits * k, width)
    nobs = (flat < ds.n).sum(axis=1)
    # columns 1, G, S, X..., Y plus an all-zero sentinel row at index n
    Z = np.zeros((ds.n + 1, ds.q + 4))
    Z[:-1, 0] = 1.0
    Z[:-1, 1] = ds.g
    Z[:-1, 2] = ds.s
    Z[:-1, 3:-1] = ds.x
    Z[:-1, -1] = ds.y
    Zb = Z[flat]
    alpha_cols = [0, 2] + list(range(3, 3 + ds.q))
    ea, sa_, sta = ols_batch(Zb[..., alpha_cols], Zb[..., 1], nobs)
    eb, sb_, stb = ols_batch(Zb[..., :-1], Zb[..., -1], nobs)
    status = np.maximum(sta, stb)
    sob = sobel_statistic(ea / sa_, eb / sb_)
    return sob.reshape(splits, k), status.reshape(splits, k)


def _min_group_rows(ds: Dataset) -> int:
    return ds.q + 4  # outcome model has q + 3 coefficients and needs one residual df


def _check_subsample_size(ds: Dataset, k: int):
    _check_k(ds.n, k)
    need = _min_group_rows(ds)
    base = ds.n // k
    if base < need:
        raise InsufficientDataError(
            f"group sizes would be as small as {base} rows (n={ds.n}, k={k}); "
            f"each group needs at least {need} rows for the outcome regression"
        )


def _split_failure(status_row, sobel_row):
    """Exception describing why a single split cannot be used, or None."""
    bad = np.flatnonzero(status_row != OK)
    if bad.size:
        g = int(bad[0])
        if status_row[g] == SINGULAR:
            return SingularDesignError(f"singular regression design in group {g}")
        return DegenerateFitError(f"degenerate regression fit in group {g}")
    if _no_spread(sobel_row, np.std(sobel_row, ddof=1)):
        return DegenerateStatisticError("per-group Sobel statistics have zero sample standard deviation")
    return None


def _single_split(ds: Dataset, k: int, src: RandomSource):
    """One split with the retry policy: a failing split is redrawn once from ``src.child(1)``."""
    for attempt, s in enumerate((src, src.child(1))):
        sob, status = _subsample_sobel(ds, make_partition(ds.n, k, s).padded()[None])
        err = _split_failure(status[0], sob[0])
        if err is None:
            return sob[0], attempt > 0
    raise err


def subsampling_t_test(ds: Dataset, k: int, src: RandomSource) -> TestResult:
    """Studentized test from a single random split into ``k`` groups (t with k-1 df)."""
    _check_subsample_size(ds, k)
    sob, retried = _single_split(ds, k, src)
    t, p = studentize(sob)
    return TestResult(
        "subsampling_t",
        t,
        p,
        {"k": int(k), "group_sobel": sob.tolist(), "mean_sobel": float(sob.mean()), "retried": retried},
    )


# -- Cauchy combination -----------------------------------------------------


def normalize_weights(u):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size < 1 or np.any(u < 0) or u.sum() <= 0:
        raise DomainError("weights need a non-empty, non-negative vector with positive sum")
    return u / u.sum()


def generate_weights(m: int, src: RandomSource):
    """Random weights ``u / sum(u)`` with ``u_i ~ U(0, 1)`` independent."""
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    return normalize_weights(draw_uniform(src, int(m)))


def cauchy_combine(p_values, weights):
    """Weighted Cauchy combination of p-values.

    Returns ``(statistic, p)`` with ``statistic = sum(w * tan(pi * (0.5 - p)))``
    and ``p = 0.5 - arctan(statistic) / pi``. A single p-value with unit weight
    is returned unchanged (the combination is the identity there).
    """
    p = np.asarray(p_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if p.ndim != 1 or p.shape != w.shape:
        raise DomainError(f"p_values and weights must be vectors of equal length, got {p.shape} and {w.shape}")
    if p.size == 0:
        raise DomainError("need at least one p-value")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise DomainError("p-values must lie in [0, 1]")
    if p.size == 1 and w[0] == 1.0:
        return float(np.tan(np.pi * (0.5 - clamp_p(p[0])))), float(p[0])
    stat = float(np.dot(w, np.tan(np.pi * (0.5 - clamp_p(p)))))
    return stat, float(min(max(cauchy_sf(stat), 0.0), 1.0))


# -- CSMT -------------------------------------------------------------------


def _weights_digest(w) -> str:
    return hashlib.sha256(np.ascontiguousarray(w, dtype="<f8").tobytes()).hexdigest()[:16]


def csmt(
    ds: Dataset,
    k: Optional[int] = None,
    m: int = DEFAULT_M,
    src: Optional[RandomSource] = None,
    weights: str = "random",
    chunk: int = 100,
) -> TestResult:
    """Cauchy-combined studentized mediation test.

    Split ``m`` is drawn from ``src.child(m)`` for ``m = 1..M``; the random
    weights come from ``src.child(M + 1)``. ``weights="equal"`` uses ``1/M``
    instead. ``k`` defaults to :func:`choose_k`. ``chunk`` only bounds memory.
    """
    if src is None:
        src = RandomSource(0)
    if k is None:
        k = choose_k(ds.n)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if weights not in ("random", "equal"):
        raise DomainError(f"weights must be 'random' or 'equal', got {weights!r}")
    _check_subsample_size(ds, k)

    sobel = np.empty((m, k))
    retried = []
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        idx = np.stack([_padded_split(src.child(i + 1).generator(), ds.n, k) for i in range(start, stop)])
        sob, status = _subsample_sobel(ds, idx)
        for j in range(stop - start):
            if _split_failure(status[j], sob[j]) is not None:
                sob[j], _ = _single_split(ds, k, src.child(start + j + 1))
                retried.append(start + j + 1)
        sobel[start:stop] = sob
    t, p = studentize(sobel)

    w = generate_weights(m, src.child(m + 1)) if weights == "random" else np.full(m, 1.0 / m)
    stat, p_comb = cauchy_combine(p, w)
    return TestResult(
        "csmt",
        stat,
        p_comb,
        {
            "k": int(k),
            "m": int(m),
            "weight_mode": weights,
            "weights_digest": _weights_digest(w),
            "split_p_values": p.tolist(),
            "split_statistics": t.tolist(),
            "retried_splits": retried,
        },
    )


def run_method(method: str, ds: Dataset, k=None, m=DEFAULT_M, src=None, weights="random") -> TestResult:
    """Dispatch by method name."""
    if method == "sobel":
        return sobel_test(ds)
    if method == "maxp":
        return maxp_test(ds)
    if src is None:
        src = RandomSource(0)
    if method == "subsampling_t":
        return subsampling_t_test(ds, choose_k(ds.n) if k is None else k, src)
    if method == "csmt":
        return csmt(ds, k, m, src, weights)
    raise DomainError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
