"""Command-line entry point.

    csmt test        --input data.csv --exposure S --mediators M1,M2 --outcomes Y ...
    csmt simulate    size|power [--config study.yaml] [--preset ci] ...
    csmt calibrate   theorem1|theorem2 ...

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
degeneracy, 1 anything else raised by the package.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from scipy import stats

from . import __version__
from .distributions import RandomSource, normal_cdf, student_t_cdf
from .errors import ConfigError, CSMTError
from .medtests import METHODS
from .simulate import sobel_null_draws, studentized_null_draws
from .workflows import (
    analysis_csv,
    analysis_jsonl,
    analysis_table,
    dumps,
    read_config,
    run_analysis,
    run_simulation,
)

log = logging.getLogger("csmt")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _floats(text):
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text):
    out = _csv_list(text)
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return out


def _k(text):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k takes an integer or 'auto', got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p, formats=True):
    p.add_argument("--config", help="YAML/JSON config document; flags override its keys")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--k", type=_k, help="number of subsamples per split, or 'auto'")
    p.add_argument("--m", type=int, help="number of random splits combined by CSMT")
    p.add_argument("--level", type=float, help="nominal level")
    p.add_argument("--methods", type=_methods, help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--weights", choices=["random", "equal"], help="Cauchy combination weights")
    p.add_argument("--out", help="output file (test) or directory (simulate)")
    if formats:
        p.add_argument("--format", choices=["csv", "json"], help="machine-readable output format")


def build_parser():
    parser = _Parser(prog="csmt", description="Cauchy-combined studentized mediation test")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test every mediator/outcome pair of a CSV file")
    t.add_argument("--input")
    t.add_argument("--exposure")
    t.add_argument("--mediators", type=_csv_list)
    t.add_argument("--outcomes", type=_csv_list)
    t.add_argument("--covariates", type=_csv_list)
    t.add_argument("--id-column", dest="id_column")
    _common(t)

    s = sub.add_parser("simulate", help="Monte Carlo size or power study")
    s.add_argument("mode", choices=["size", "power"])
    s.add_argument("--preset", choices=["paper", "ci"])
    s.add_argument("--n", type=int)
    s.add_argument("--tests", dest="n_tests", type=int, help="replications per grid point")
    s.add_argument("--null", choices=["sparse", "dense"], help="size mode: null mixture preset")
    s.add_argument("--mixture", type=_floats, help="size mode: pi_00,pi_01,pi_10,pi_11")
    s.add_argument("--r", type=float, help="size mode: signal magnitude of the non-zero coefficient")
    s.add_argument("--scenario", choices=["fixed_equal", "fixed_product"])
    s.add_argument("--grid", type=_floats, help="power mode: common values or alpha/beta ratios")
    s.add_argument("--product", type=float, help="power mode: alpha*beta for fixed_product")
    _common(s, formats=False)

    c = sub.add_parser("calibrate", help="Monte Carlo checks of the null distributions")
    c.add_argument("which", choices=["theorem1", "theorem2"])
    c.add_argument("--null", choices=["H00", "H01", "H10"], default="H00", help="theorem1: null type")
    c.add_argument("--n", type=int, default=600, help="theorem1: sample size")
    c.add_argument("--r", type=float, default=0.5, help="theorem1: non-zero coefficient")
    c.add_argument("--k", type=int, default=12, help="theorem2: number of subsamples")
    c.add_argument("--tau", type=float, default=0.25, help="theorem2: variance of the injected values")
    c.add_argument("--draws", type=int, help="replications (default 2000 / 100000)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", help="write the summary as JSON")
    return parser


def _flag_overrides(args, keys):
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def cmd_test(args):
    doc = read_config(args.config) if args.config else {}
    doc.update(
        _flag_overrides(
            args,
            ["input", "exposure", "mediators", "outcomes", "covariates", "id_column", "seed", "k", "m",
             "level", "methods", "weights", "out", "format"],
        )
    )
    rows = run_analysis(doc)
    methods = doc.get("methods") or ["csmt", "maxp", "sobel"]
    fmt = doc.get("format", "json")
    machine = analysis_jsonl(rows) if fmt == "json" else analysis_csv(rows, methods)
    if doc.get("out"):
        Path(doc["out"]).write_text(machine, encoding="utf-8")
        sys.stdout.write(analysis_table(rows, methods))
    else:
        sys.stdout.write(machine)
    failed = sum(r["error"] is not None for r in rows)
    if failed:
        log.warning("%d of %d pair(s) failed; see the error column", failed, len(rows))
    return 0


def cmd_simulate(args):
    doc = read_config(args.config) if args.config else {}
    doc["mode"] = args.mode
    doc.update(_flag_overrides(args, ["preset", "n", "n_tests", "seed", "k", "m", "level", "methods", "weights", "out"]))
    size = dict(doc.get("size") or {})
    if args.null is not None:
        size["mixture"] = args.null
    if args.mixture is not None:
        size["mixture"] = args.mixture
    if args.r is not None:
        size["r"] = args.r
    if size:
        doc["size"] = size
    power = dict(doc.get("power") or {})
    power.update(_flag_overrides(args, ["scenario", "grid", "product"]))
    if power:
        doc["power"] = power
    report, paths = run_simulation(doc)
    for row in report.rows:
        label = f"r={row['r']}" if report.kind == "size" else f"grid={row['grid_value']:g} alpha={row['alpha']:.4g} beta={row['beta']:.4g}"
        rates = "  ".join(f"{m}={row['rates'][m]:.4g}" for m in report.methods)
        print(f"{report.kind} {label}  {rates}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_calibrate(args):
    src = RandomSource(args.seed)
    if args.which == "theorem1":
        draws = args.draws or 2000
        x = sobel_null_draws(args.null, args.n, draws, src, r=args.r)
        sd = 0.5 if args.null == "H00" else 1.0
        ks = stats.kstest(x, lambda v: normal_cdf(v / sd))
        summary = {"check": "sobel_null_law", "null": args.null, "n": args.n, "draws": draws,
                   "reference_sd": sd, "empirical_sd": float(x.std(ddof=1))}
    else:
        draws = args.draws or 100_000
        x = studentized_null_draws(args.k, args.tau, draws, src)
        ks = stats.kstest(x, lambda v: student_t_cdf(v, args.k - 1))
        summary = {"check": "studentized_null_law", "k": args.k, "tau": args.tau, "draws": draws,
                   "reference_df": args.k - 1}
    summary.update({"ks_statistic": float(ks.statistic), "ks_p_value": float(ks.pvalue), "seed": args.seed})
    text = dumps(summary, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handler = {"test": cmd_test, "simulate": cmd_simulate, "calibrate": cmd_calibrate}[args.command]
    try:
        return handler(args)
    except CSMTError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
