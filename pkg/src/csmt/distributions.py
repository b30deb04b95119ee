"""Normal, Student-t and Cauchy laws plus the seeded random-source contract.

CDFs accept scalars or array-likes and return a Python float for scalar input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import optimize, special

from .errors import DomainError

P_CLAMP = 1e-15

_SQRT2 = math.sqrt(2.0)


def _as_finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _check_df(df):
    if isinstance(df, bool) or not float(df).is_integer() or df < 1:
        raise DomainError(f"degrees of freedom must be an integer >= 1, got {df!r}")
    return float(df)


def _check_prob(p):
    if not (0.0 < p < 1.0):
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")


def normal_cdf(x):
    """Standard normal CDF computed from the complementary error function."""
    arr = _as_finite(x)
    return _out(0.5 * special.erfc(-arr / _SQRT2), arr.ndim == 0)


def normal_sf(x):
    """Upper tail ``1 - normal_cdf(x)`` without cancellation."""
    arr = _as_finite(x)
    return _out(0.5 * special.erfc(arr / _SQRT2), arr.ndim == 0)


def student_t_cdf(x, df):
    """CDF of Student's t with ``df`` degrees of freedom.

    Evaluated through the regularized incomplete beta function. In the tails
    ``I_{df/(df+x^2)}(df/2, 1/2)`` gives the tail mass directly; near the centre
    ``I_{x^2/(df+x^2)}(1/2, df/2)`` gives the central mass, which keeps relative
    accuracy when ``x^2`` is small compared with ``df``.
    """
    arr = _as_finite(x)
    nu = _check_df(df)
    x2 = arr * arr
    denom = nu + x2
    z = nu / denom
    with np.errstate(invalid="ignore"):
        tail = 0.5 * special.betainc(0.5 * nu, 0.5, z)
        central = special.betainc(0.5, 0.5 * nu, x2 / denom)
    upper = np.where(z < 0.5, tail, 0.5 - 0.5 * central)  # P(T > |x|)
    out = np.where(arr >= 0, 1.0 - upper, upper)
    return _out(out, arr.ndim == 0)


def student_t_sf(x, df):
    """Upper tail ``P(T > x)``; symmetric counterpart of :func:`student_t_cdf`."""
    arr = _as_finite(x)
    return student_t_cdf(-arr if arr.ndim else -float(arr), df)


def student_t_pdf(x, df):
    nu = _check_df(df)
    arr = _as_finite(x)
    logc = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
    dens = np.exp(logc - (nu + 1) / 2 * np.log1p(arr * arr / nu))
    return _out(dens, arr.ndim == 0)


def student_t_quantile(p, df):
    """Inverse of :func:`student_t_cdf` in its first argument."""
    p = float(p)
    _check_prob(p)
    nu = _check_df(df)
    if p == 0.5:
        return 0.0
    if nu == 1.0:
        return math.tan(math.pi * (p - 0.5))
    # solve for the positive root of the tail equation, then reflect
    target = min(p, 1.0 - p)
    hi = 1.0
    while student_t_sf(hi, nu) > target:
        hi *= 2.0
    root = optimize.brentq(
        lambda t: student_t_sf(t, nu) - target, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500
    )
    return float(root) if p > 0.5 else -float(root)


def cauchy_cdf(x):
    arr = _as_finite(x)
    return _out(0.5 + np.arctan(arr) / math.pi, arr.ndim == 0)


def cauchy_sf(x):
    """``P(C > x) = 0.5 - arctan(x)/pi`` for a standard Cauchy variable."""
    arr = _as_finite(x)
    return _out(0.5 - np.arctan(arr) / math.pi, arr.ndim == 0)


def cauchy_quantile(p):
    p = float(p)
    _check_prob(p)
    return math.tan(math.pi * (p - 0.5))


def clamp_p(p):
    """Clamp probabilities to ``[1e-15, 1 - 1e-15]`` before tan/log transforms."""
    arr = np.clip(np.asarray(p, dtype=float), P_CLAMP, 1.0 - P_CLAMP)
    return _out(arr, arr.ndim == 0)


# -- random sources ---------------------------------------------------------

_MAX_SEED = 2**64


@dataclass(frozen=True)
class RandomSource:
    """Address of a reproducible random stream.

    The stream is a Philox counter-based generator keyed by a
    :class:`numpy.random.SeedSequence` built from ``master_seed`` with
    ``stream_key`` as its spawn key, so any ``(master_seed, stream_key)`` pair
    maps to the same draws regardless of call order, process or thread.
    """

    master_seed: int
    stream_key: Tuple[int, ...] = ()

    def __post_init__(self):
        seed = self.master_seed
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < _MAX_SEED:
            raise DomainError(f"master_seed must be an unsigned 64-bit integer, got {seed!r}")
        key = tuple(int(k) for k in self.stream_key)
        if any(k < 0 for k in key):
            raise DomainError(f"stream_key entries must be non-negative, got {key}")
        object.__setattr__(self, "master_seed", int(seed))
        object.__setattr__(self, "stream_key", key)

    def child(self, *key: int) -> "RandomSource":
        """Source for the substream ``stream_key + key``."""
        return RandomSource(self.master_seed, self.stream_key + tuple(key))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_key)
        return np.random.Generator(np.random.Philox(ss))


def draw_uniform(source: RandomSource, size=None):
    """Uniform draws on ``[0, 1)``."""
    return source.generator().random(size)


def draw_normal(source: RandomSource, size=None):
    return source.generator().standard_normal(size)


def draw_permutation(source: RandomSource, n: int) -> np.ndarray:
    """Uniformly random permutation of ``0..n-1``."""
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    return source.generator().permutation(n)
