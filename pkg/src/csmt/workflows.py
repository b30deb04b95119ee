"""Config handling, the real-data analysis driver and the simulation driver."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from importlib import resources
from pathlib import Path
from typing import List, Optional

import jsonschema
import numpy as np
import yaml

from .distributions import RandomSource
from .errors import ConfigError, CSMTError
from .dataio import _check_roles, pair_dataset, read_table
from .medtests import DEFAULT_M, choose_k, run_method
from .simulate import (
    NullMixture,
    ExperimentReport,
    run_power_experiment,
    run_size_experiment,
)

log = logging.getLogger(__name__)

ANALYSIS_DEFAULTS = {
    "covariates": [],
    "id_column": None,
    "methods": ["csmt", "maxp", "sobel"],
    "k": "auto",
    "m": DEFAULT_M,
    "level": 0.05,
    "seed": 0,
    "weights": "random",
    "out": None,
    "format": "json",
}

PRESETS = {"paper": {"n_tests": 500, "m": 500}, "ci": {"n_tests": 100, "m": 100}}

SIMULATION_DEFAULTS = {
    "preset": "paper",
    "k": "auto",
    "level": 0.05,
    "seed": 0,
    "methods": ["csmt", "maxp", "sobel"],
    "weights": "random",
    "out": None,
    "size": {"mixture": "sparse", "r": 0.1},
    "power": {"scenario": "fixed_equal", "grid": None, "product": None},
    "nuisance": {},
}
DEFAULT_N = {"size": 600, "power": 300}
DEFAULT_GRID = {
    "fixed_equal": [0.1, 0.2, 0.3, 0.4, 0.5],
    "fixed_product": [0.25, 0.5, 1.0, 2.0, 4.0],
}


# -- schemas and config documents ------------------------------------------


def load_schema(name: str) -> dict:
    text = resources.files("csmt").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(doc, schema_name: str) -> None:
    """Validate against a shipped schema; errors carry a JSON-pointer path."""
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ConfigError(f"config error at {pointer}: {err.message}")


def read_config(path) -> dict:
    """Read a YAML or JSON config document (JSON is valid YAML)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config error at /: top level must be a mapping")
    return doc


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def analysis_config(doc: dict) -> dict:
    """Validate an analysis config and fill in defaults."""
    validate(doc, "analysis_config")
    cfg = _merge(ANALYSIS_DEFAULTS, doc)
    _check_roles(cfg["exposure"], cfg["mediators"], cfg["outcomes"], cfg["covariates"])
    return cfg


def simulation_config(doc: dict) -> dict:
    """Validate a simulation config, then apply preset and mode defaults."""
    validate(doc, "simulation_config")
    cfg = _merge(SIMULATION_DEFAULTS, doc)
    preset = PRESETS[cfg["preset"]]
    cfg.setdefault("n_tests", preset["n_tests"])
    cfg.setdefault("m", preset["m"])
    cfg.setdefault("n", DEFAULT_N[cfg["mode"]])
    if cfg["power"]["grid"] is None:
        cfg["power"]["grid"] = list(DEFAULT_GRID[cfg["power"]["scenario"]])
    return cfg


# -- number formatting -----------------------------------------------------


def _num17(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _num4(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return format(float(x), ".4g")


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj, **kw) -> str:
    return json.dumps(_clean(obj), allow_nan=False, **kw)


# -- real-data analysis ----------------------------------------------------


def run_analysis(config: dict) -> List[dict]:
    """Run every requested method on every (mediator, outcome) pair.

    Pairs are enumerated outcomes-outermost; pair j draws its randomness from
    ``RandomSource(seed, (j,))``. A failing pair yields a row with ``error`` set
    instead of aborting the batch.
    """
    cfg = analysis_config(config)
    covs = list(cfg["covariates"])
    table = read_table(
        cfg["input"], [cfg["exposure"], *cfg["mediators"], *cfg["outcomes"], *covs], cfg["id_column"]
    )
    rows = []
    j = 0
    for outcome in cfg["outcomes"]:
        for mediator in cfg["mediators"]:
            row = {
                "schema_version": 1,
                "pair": j,
                "outcome": outcome,
                "mediator": mediator,
                "exposure": cfg["exposure"],
                "covariates": covs,
                "n": None,
                "n_dropped": None,
                "k": None if cfg["k"] == "auto" else cfg["k"],
                "m": cfg["m"],
                "seed": cfg["seed"],
                "results": {},
                "error": None,
            }
            try:
                ds, dropped = pair_dataset(table, cfg["exposure"], mediator, outcome, covs)
                row["n"], row["n_dropped"] = ds.n, dropped
                if cfg["k"] == "auto":
                    row["k"] = choose_k(ds.n)
                    log.info("pair %d (%s, %s): n=%d, auto K=%d", j, mediator, outcome, ds.n, row["k"])
                src = RandomSource(cfg["seed"], (j,))
                for meth in cfg["methods"]:
                    res = run_method(meth, ds, k=row["k"], m=cfg["m"], src=src, weights=cfg["weights"])
                    row["results"][meth] = {"statistic": res.statistic, "p_value": res.p_value}
            except CSMTError as exc:
                log.warning("pair %d (%s, %s) failed: %s", j, mediator, outcome, exc)
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            j += 1
    return rows


def analysis_jsonl(rows) -> str:
    return "".join(dumps(r, sort_keys=True) + "\n" for r in rows)


def analysis_csv(rows, methods) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["pair", "outcome", "mediator", "n", "n_dropped", "k", "m", "covariates"]
    for meth in methods:
        head += [f"{meth}_statistic", f"{meth}_p"]
    w.writerow(head + ["error"])
    for r in rows:
        line = [r["pair"], r["outcome"], r["mediator"], _num17(r["n"]), _num17(r["n_dropped"]),
                _num17(r["k"]), r["m"], ";".join(r["covariates"])]
        for meth in methods:
            res = r["results"].get(meth, {})
            line += [_num17(res.get("statistic")), _num17(res.get("p_value"))]
        w.writerow(line + [r["error"] or ""])
    return buf.getvalue()


def analysis_table(rows, methods) -> str:
    """Human-readable fixed-width table of p-values (4 significant digits)."""
    head = ["Outcome", "Mediator", "n", "K"] + list(methods)
    body = []
    for r in rows:
        cells = [r["outcome"], r["mediator"], str(r["n"] if r["n"] is not None else "NA"), str(r["k"] or "NA")]
        cells += [_num4(r["results"].get(meth, {}).get("p_value")) for meth in methods]
        if r["error"]:
            cells[-1] += f"  [{r['error']}]"
        body.append(cells)
    widths = [max(len(h), *(len(c[i]) for c in body)) if body else len(h) for i, h in enumerate(head)]
    fmt = lambda cells: "  ".join(c.ljust(wd) for c, wd in zip(cells, widths)).rstrip()
    lines = [fmt(head), fmt(["-" * wd for wd in widths])] + [fmt(c) for c in body]
    return "\n".join(lines) + "\n"


# -- simulation ------------------------------------------------------------


def _mixture(spec, r) -> NullMixture:
    if spec == "sparse":
        return NullMixture.sparse(r)
    if spec == "dense":
        return NullMixture.dense(r)
    return NullMixture(*spec, r)


def build_experiment(cfg: dict) -> ExperimentReport:
    k = None if cfg["k"] == "auto" else cfg["k"]
    src = RandomSource(cfg["seed"])
    if cfg["mode"] == "size":
        mix = _mixture(cfg["size"]["mixture"], cfg["size"]["r"])
        return run_size_experiment(
            mix, cfg["n"], cfg["n_tests"], cfg["methods"], cfg["level"], src,
            k=k, m=cfg["m"], weights=cfg["weights"], nuisance=cfg["nuisance"],
        )
    pw = cfg["power"]
    return run_power_experiment(
        pw["scenario"], pw["grid"], cfg["n"], cfg["n_tests"], cfg["methods"], cfg["level"], src,
        product=pw["product"], k=k, m=cfg["m"], weights=cfg["weights"], nuisance=cfg["nuisance"],
    )


def report_document(report: ExperimentReport, cfg: Optional[dict] = None) -> dict:
    doc = report.to_dict()
    if cfg is not None:
        doc["config"] = dict(doc["config"], preset=cfg.get("preset"), methods=list(cfg["methods"]))
    doc["reference_line"] = {"neg_log10_level": -math.log10(report.level)}
    return _clean(doc)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num17(v) if not isinstance(v, str) else v for v in row])


def write_simulation(report: ExperimentReport, out_dir, cfg: Optional[dict] = None) -> List[Path]:
    """Write ``report.json`` and the flat plot-data CSV files; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report_document(report, cfg)
    validate_report(doc)
    written = [out / "report.json"]
    written[0].write_text(dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if report.kind == "size":
        for meth, qq in report.qq.items():
            path = out / f"qq_{meth}.csv"
            _write_csv(path, ["uniform_quantile", "neg_log10_p"], zip(qq["expected"], qq["observed"]))
            written.append(path)
        row = report.rows[0]
        path = out / "size.csv"
        _write_csv(
            path,
            ["method", "empirical_size", "level", "n_tests"],
            [(meth, row["rates"][meth], report.level, len(row["null_types"])) for meth in report.methods],
        )
        written.append(path)
    else:
        path = out / "power.csv"
        _write_csv(
            path,
            ["grid_value", "alpha", "beta", "product"] + list(report.methods),
            [
                [r["grid_value"], r["alpha"], r["beta"], r["product"]] + [r["rates"][m] for m in report.methods]
                for r in report.rows
            ],
        )
        written.append(path)
    return written


def validate_report(doc: dict) -> None:
    try:
        jsonschema.validate(doc, load_schema("experiment_report"))
    except jsonschema.ValidationError as exc:  # pragma: no cover - guards our own output
        raise CSMTError(f"report failed schema validation: {exc.message}") from None


def run_simulation(config: dict, out_dir=None):
    """Validate ``config``, run the experiment and optionally write its files."""
    cfg = simulation_config(config)
    report = build_experiment(cfg)
    out_dir = out_dir or cfg.get("out")
    paths = write_simulation(report, out_dir, cfg) if out_dir else []
    return report, paths
