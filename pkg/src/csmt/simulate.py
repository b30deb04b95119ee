"""Monte Carlo size and power studies under the linear mediation model

    G = alpha*S + alpha0 + alpha1*X1 + alpha2*X2 + eps
    Y = beta*G  + beta0  + beta1*X1  + beta2*X2  + tau_direct*S + e

with X1, X2 ~ U(0, 1), eps, e ~ N(0, 1) and a binary exposure S ~ Bernoulli(1/2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .distributions import RandomSource, clamp_p
from .errors import ConfigError, CSMTError
from .medtests import DEFAULT_M, METHODS, choose_k, run_method, studentize
from .regress import Dataset

log = logging.getLogger(__name__)

EXPOSURE_LAW = "bernoulli(0.5)"
NULL_TYPES = ("H00", "H01", "H10", "H11")
# sample size -> alpha*beta for the fixed-product power scenario
DEFAULT_PRODUCTS = {100: 0.3, 200: 0.2, 300: 0.1}


@dataclass(frozen=True)
class SimulationParams:
    alpha: float
    beta: float
    n: int = 600
    alpha0: float = 0.5
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta0: float = 0.5
    beta1: float = 1.0
    beta2: float = 1.0
    tau_direct: float = 0.0

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 16:
            raise ConfigError(f"n must be an integer >= 16, got {self.n!r}")
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")


NUISANCE_FIELDS = ("alpha0", "alpha1", "alpha2", "beta0", "beta1", "beta2", "tau_direct")


def structural_equations(params: SimulationParams, s, x, eps, e):
    """Mediator and outcome columns for given exposure, covariates and noise."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    g = params.alpha * s + params.alpha0 + params.alpha1 * x[:, 0] + params.alpha2 * x[:, 1] + eps
    y = params.beta * g + params.beta0 + params.beta1 * x[:, 0] + params.beta2 * x[:, 1] + params.tau_direct * s + e
    return g, y


def generate_dataset(params: SimulationParams, src: RandomSource) -> Dataset:
    rng = src.generator()
    n = int(params.n)
    s = (rng.random(n) < 0.5).astype(float)
    x = rng.random((n, 2))
    eps = rng.standard_normal(n)
    e = rng.standard_normal(n)
    g, y = structural_equations(params, s, x, eps, e)
    return Dataset(s, g, y, x, covariate_names=("X1", "X2"))


@dataclass(frozen=True)
class NullMixture:
    pi_00: float
    pi_01: float
    pi_10: float
    pi_11: float
    r: float

    def __post_init__(self):
        pis = self.proportions
        if any(not (0.0 <= p <= 1.0) for p in pis) or abs(sum(pis) - 1.0) > 1e-12:
            raise ConfigError(f"mixture proportions must lie in [0, 1] and sum to 1, got {pis}")
        if not math.isfinite(self.r):
            raise ConfigError("signal magnitude r must be finite")

    @property
    def proportions(self):
        return (self.pi_00, self.pi_01, self.pi_10, self.pi_11)

    @classmethod
    def dense(cls, r):
        return cls(0.4, 0.3, 0.3, 0.0, r)

    @classmethod
    def sparse(cls, r):
        return cls(0.8, 0.1, 0.1, 0.0, r)


def mixture_counts(proportions: Sequence[float], n_tests: int) -> List[int]:
    """Largest-remainder apportionment of ``n_tests`` (ties go to the earlier type)."""
    quotas = [p * n_tests for p in proportions]
    counts = [math.floor(q) for q in quotas]
    short = n_tests - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def null_coefficients(null_type: str, r: float):
    return {"H00": (0.0, 0.0), "H01": (0.0, r), "H10": (r, 0.0), "H11": (r, r)}[null_type]


def solve_alpha_beta(ratio: float, product: float):
    """Positive ``(alpha, beta)`` with ``alpha / beta = ratio`` and ``alpha * beta = product``."""
    if not ratio > 0 or not product > 0:
        raise ConfigError(f"ratio and product must be positive, got ratio={ratio}, product={product}")
    beta = math.sqrt(product / ratio)
    return ratio * beta, beta


def qq_points(p_values):
    """Uniform-quantile and observed ``-log10 p`` pairs, both sorted ascending."""
    p = np.sort(np.asarray(p_values, dtype=float))[::-1]
    N = p.size
    expected = -np.log10(np.arange(N, 0, -1) / (N + 1.0))
    observed = -np.log10(clamp_p(p)) if N else p
    return expected, np.asarray(observed, dtype=float)


@dataclass
class ExperimentReport:
    """Aggregated outcome of a size or power study.

    ``rows`` holds one entry per grid point (a single entry for size studies)
    with the data-generating coefficients, per-method p-values and rejection
    rates at ``level``.
    """

    kind: str
    level: float
    methods: List[str]
    master_seed: int
    config: dict
    rows: List[dict] = field(default_factory=list)
    qq: Dict[str, dict] = field(default_factory=dict)

    def rate(self, method: str, row: int = 0) -> float:
        return self.rows[row]["rates"][method]

    def p_values(self, method: str, row: int = 0) -> np.ndarray:
        return np.asarray(self.rows[row]["p_values"][method])

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": self.kind,
            "level": self.level,
            "methods": list(self.methods),
            "master_seed": self.master_seed,
            "exposure": EXPOSURE_LAW,
            "config": self.config,
            "rows": self.rows,
            "qq": self.qq,
        }


def _check_methods(methods):
    methods = list(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown or empty methods {bad or methods}; choose from {', '.join(METHODS)}")
    return methods


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must lie in (0, 1), got {level}")


def _run_tests(coefs, n, methods, src, k, m, weights, nuisance):
    """p-values of every method on one dataset per ``(alpha, beta)`` in ``coefs``.

    Test t draws its data from ``src.child(t, 0)`` and its method randomness from
    ``src.child(t, 1)``.
    """
    pv = {meth: np.empty(len(coefs)) for meth in methods}
    for t, (a, b) in enumerate(coefs):
        params = SimulationParams(a, b, n, **nuisance)
        ds = generate_dataset(params, src.child(t, 0))
        for meth in methods:
            try:
                res = run_method(meth, ds, k=k, m=m, src=src.child(t, 1), weights=weights)
            except CSMTError as exc:
                exc.args = (f"test {t} ({meth}): {exc}",)
                raise
            pv[meth][t] = res.p_value
        if (t + 1) % 50 == 0:
            log.debug("finished %d/%d tests", t + 1, len(coefs))
    return pv


def _config_echo(**kw):
    return {key: (list(v) if isinstance(v, tuple) else v) for key, v in kw.items()}


def run_size_experiment(
    mix: NullMixture,
    n: int,
    n_tests: int,
    methods: Sequence[str],
    level: float,
    src: RandomSource,
    k: Optional[int] = None,
    m: int = DEFAULT_M,
    weights: str = "random",
    nuisance: Optional[dict] = None,
) -> ExperimentReport:
    """Empirical size of each method over a mixture of null configurations."""
    methods = _check_methods(methods)
    _check_level(level)
    if mix.pi_11 > 0:
        raise ConfigError("a size experiment needs pi_11 = 0")
    if n_tests < 1:
        raise ConfigError(f"n_tests must be >= 1, got {n_tests}")
    nuisance = dict(nuisance or {})
    k = choose_k(n) if k is None else k
    counts = mixture_counts(mix.proportions, n_tests)
    types = [t for t, c in zip(NULL_TYPES, counts) for _ in range(c)]
    coefs = [null_coefficients(t, mix.r) for t in types]
    pv = _run_tests(coefs, n, methods, src, k, m, weights, nuisance)
    row = {
        "alpha": None,
        "beta": None,
        "r": mix.r,
        "counts": dict(zip(NULL_TYPES, counts)),
        "null_types": types,
        "rates": {meth: float(np.mean(pv[meth] <= level)) for meth in methods},
        "p_values": {meth: pv[meth].tolist() for meth in methods},
    }
    qq = {}
    for meth in methods:
        e, o = qq_points(pv[meth])
        qq[meth] = {"expected": e.tolist(), "observed": o.tolist()}
    config = _config_echo(
        mode="size",
        mixture=list(mix.proportions),
        r=mix.r,
        n=n,
        n_tests=n_tests,
        k=k,
        m=m,
        weights=weights,
        nuisance=nuisance,
        stream_key=src.stream_key,
    )
    return ExperimentReport("size", level, methods, src.master_seed, config, [row], qq)


def power_grid(scenario: str, grid: Sequence[float], n: int, product: Optional[float] = None):
    """``(alpha, beta)`` pairs for a power scenario.

    ``fixed_equal``: grid values are the common value of alpha and beta.
    ``fixed_product``: grid values are ratios alpha/beta; the product defaults
    to 0.3, 0.2, 0.1 for n = 100, 200, 300.
    """
    grid = [float(v) for v in grid]
    if not grid:
        raise ConfigError("power grid is empty")
    if scenario == "fixed_equal":
        return [(v, v) for v in grid], None
    if scenario == "fixed_product":
        if product is None:
            if n not in DEFAULT_PRODUCTS:
                raise ConfigError(f"no default alpha*beta for n={n}; pass a product explicitly")
            product = DEFAULT_PRODUCTS[n]
        return [solve_alpha_beta(rho, product) for rho in grid], product
    raise ConfigError(f"unknown power scenario {scenario!r}; use fixed_equal or fixed_product")


def run_power_experiment(
    scenario: str,
    grid: Sequence[float],
    n: int,
    n_tests: int,
    methods: Sequence[str],
    level: float,
    src: RandomSource,
    product: Optional[float] = None,
    k: Optional[int] = None,
    m: int = DEFAULT_M,
    weights: str = "random",
    nuisance: Optional[dict] = None,
) -> ExperimentReport:
    """Empirical rejection rate per grid point; grid point g uses ``src.child(g)``."""
    methods = _check_methods(methods)
    _check_level(level)
    if n_tests < 1:
        raise ConfigError(f"n_tests must be >= 1, got {n_tests}")
    pairs, product = power_grid(scenario, grid, n, product)
    nuisance = dict(nuisance or {})
    k = choose_k(n) if k is None else k
    rows = []
    for gi, ((a, b), value) in enumerate(zip(pairs, grid)):
        pv = _run_tests([(a, b)] * n_tests, n, methods, src.child(gi), k, m, weights, nuisance)
        rows.append(
            {
                "grid_value": float(value),
                "alpha": a,
                "beta": b,
                "product": product if product is not None else a * b,
                "rates": {meth: float(np.mean(pv[meth] <= level)) for meth in methods},
                "p_values": {meth: pv[meth].tolist() for meth in methods},
            }
        )
    config = _config_echo(
        mode="power",
        scenario=scenario,
        grid=[float(v) for v in grid],
        product=product,
        n=n,
        n_tests=n_tests,
        k=k,
        m=m,
        weights=weights,
        nuisance=nuisance,
        stream_key=src.stream_key,
    )
    return ExperimentReport("power", level, methods, src.master_seed, config, rows)


# -- calibration draws ------------------------------------------------------


def sobel_null_draws(null_type: str, n: int, reps: int, src: RandomSource, r: float = 0.5, nuisance=None):
    """Full-sample Sobel statistics from ``reps`` datasets generated under one null type.

    Their limiting law is N(0, 1/4) under H00 and N(0, 1) under H01 or H10.
    """
    a, b = null_coefficients(null_type, r)
    nuisance = dict(nuisance or {})
    out = np.empty(reps)
    for i in range(reps):
        ds = generate_dataset(SimulationParams(a, b, n, **nuisance), src.child(i))
        out[i] = run_method("sobel", ds).statistic
    return out


def studentized_null_draws(k: int, scale_var: float, reps: int, src: RandomSource):
    """Studentized means of ``k`` i.i.d. N(0, scale_var) values, ``reps`` times.

    Whatever the variance, the law is Student t with ``k - 1`` degrees of freedom.
    """
    z = src.generator().normal(0.0, math.sqrt(scale_var), size=(reps, k))
    t, _ = studentize(z)
    return t
