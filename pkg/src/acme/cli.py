"""Command-line interface: ``acme simulate|fit-removal|fit-discovery|reduction|estimate|golden``.

Exit codes: 0 success, 2 input error, 3 numerical or fit failure, 4 I/O error.
JSON reports carry a schema version and the full effective configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import inference as inf
from .golden import benchmark, run_golden_suite
from .idt_data import DEFAULT_PFM_CADENCE, IdtParseError, load_dataset, simulate_idt, write_dataset
from .legacy import ConsistencyError, ConstantCaseParams, compare_all
from .mle_fit import FitError, deviance_vs_constant, fit_discovery, fit_removal, search_histories
from .reduction import ALTAMONT, AcmeParams, ConvergenceError, reduction_factor

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
PARAM_NAMES = ("alpha", "rho", "a", "b", "bleed")
CONSTANT_M_NOTE = ("mean daily mortality is treated as constant over earlier periods, "
                   "since carcasses found now may have arrived before this period")


class InputError(ValueError):
    pass


def _floats(text: str, what: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise InputError(f"{what}: empty list")
    return vals


def _counts(text: str) -> list:
    vals = _floats(text, "--counts")
    if any(v < 0 or v != int(v) for v in vals):
        raise InputError("--counts must be nonnegative integers")
    return [int(v) for v in vals]


def _gammas(text: str) -> list:
    vals = _floats(text, "--gamma")
    if any(not 0 < g < 1 for g in vals):
        raise InputError("--gamma levels must lie in (0, 1)")
    return vals


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, nonfinite floats to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _params_from_report(path: str) -> dict:
    try:
        report = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError:
        raise
    except ValueError as exc:
        raise InputError(f"{path}: not a JSON report ({exc})") from None
    found = {}
    for block in (report.get("config", {}).get("params", {}), report.get("estimates", {})):
        for k in PARAM_NAMES:
            if isinstance(block.get(k), (int, float)):
                found[k] = float(block[k])
    if not found:
        raise InputError(f"{path}: no model parameters found")
    return found


def resolve_params(args, interval: float | None = None) -> AcmeParams:
    """Defaults (Altamont fit) < --params reports in order < explicit flags."""
    values = ALTAMONT.as_dict()
    for path in args.params or []:
        values.update(_params_from_report(path))
    for k in PARAM_NAMES:
        if getattr(args, k, None) is not None:
            values[k] = getattr(args, k)
    values["interval"] = interval if interval is not None else _floats(args.interval, "--interval")[0]
    try:
        return AcmeParams.from_values(**values)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _reduction(params: AcmeParams, args):
    if args.terms is not None:
        return reduction_factor(params, n_terms=args.terms)
    return reduction_factor(params, target_rel_error=args.tol)


def _reduction_row(params, rr) -> dict:
    return {
        "interval": params.interval,
        "r_star": rr.r_star,
        "t_star_0": rr.t_star_0,
        "multiplier": rr.multiplier,
        "n_terms": rr.n_terms,
        "truncation_bound": rr.truncation_bound,
        "terms": list(rr.terms),
    }


def _config(args, **extra) -> dict:
    keys = [k for k in vars(args) if k not in ("func",)]
    cfg = {k: getattr(args, k) for k in sorted(keys)}
    cfg.update(extra)
    return cfg


def _envelope(command, args, body, **config_extra) -> dict:
    out = {"version": SCHEMA_VERSION, "acme_version": __version__, "command": command,
           "config": _config(args, **config_extra)}
    out.update(body)
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt_cell(v) for v in r])
    return buf.getvalue()


def _fmt_cell(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return v


def _emit(args, report: dict, csv_table=None):
    if args.format == "csv":
        if csv_table is None:
            raise InputError(f"--format csv is not available for {report['command']}")
        text = _csv_text(*csv_table)
    else:
        text = json.dumps(_clean(report), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    I = _floats(args.interval, "--interval")[0]
    params = resolve_params(args, I)
    if args.n_carcasses < 1 or args.window <= 0 or args.horizon < I:
        raise InputError("need --n-carcasses >= 1, --window > 0 and --horizon >= --interval")
    times = np.arange(I, args.horizon + 0.5 * I, I)
    ds = simulate_idt(params, args.n_carcasses, args.window, times, args.seed,
                      pfm_cadence=args.pfm_cadence)
    cpath, spath = write_dataset(ds, args.out)
    found = {s.carcass_id for s in ds.searches if s.discovered}
    rr = _reduction(params, args)
    frac = len(found) / len(ds.carcasses)
    summary = {
        "version": SCHEMA_VERSION,
        "acme_version": __version__,
        "command": "simulate",
        "config": _config(args, params=params.as_dict(), search_times=times.tolist()),
        "files": {"carcasses": str(cpath), "searches": str(spath)},
        "n_carcasses": len(ds.carcasses),
        "n_searches": len(ds.searches),
        "fraction_ever_discovered": frac,
        "r_star": rr.r_star,
        "binomial_sigma": math.sqrt(rr.r_star * (1.0 - rr.r_star) / len(ds.carcasses)),
    }
    sys.stdout.write(json.dumps(_clean(summary), indent=2) + "\n")
    return EXIT_OK


def _load(args, need_searches: bool):
    if not args.carcasses:
        raise InputError("--carcasses PATH is required")
    if need_searches and not args.searches:
        raise InputError("--searches PATH is required")
    return load_dataset(args.carcasses, args.searches if need_searches else None)


def cmd_fit_removal(args) -> int:
    ds = _load(args, need_searches=False)
    weib = fit_removal(ds)
    expo = fit_removal(ds, fixed_alpha=1.0)
    if "non_identified" in weib.flags:
        raise FitError("every carcass is censored: removal rate not identified")
    al, rho = weib.estimates["alpha"], weib.estimates["rho"]
    body = {
        "model": "weibull",
        "estimates": weib.estimates,
        "std_errors": weib.std_errors,
        "nllh": weib.nllh,
        "converged": weib.converged,
        "flags": list(weib.flags),
        "n_carcasses": weib.n_used,
        "mean_persistence_days": math.gamma(1.0 + 1.0 / al) / rho,
        "exponential": {
            "estimates": {"rho": expo.estimates["rho"]},
            "std_errors": expo.std_errors,
            "nllh": expo.nllh,
            "mean_persistence_days": 1.0 / expo.estimates["rho"],
        },
    }
    report = _envelope("fit-removal", args, body)
    rows = [(k, weib.estimates[k], weib.std_errors.get(k, math.nan)) for k in ("alpha", "rho")]
    _emit(args, report, (("parameter", "estimate", "std_error"), rows))
    return EXIT_OK


def cmd_fit_discovery(args) -> int:
    ds = _load(args, need_searches=True)
    h = search_histories(ds)
    fit = fit_discovery(h, constant=args.constant)
    if "no_discoveries" in fit.flags:
        raise FitError("no search discovered any carcass: proficiency not identified")
    body = {
        "model": "constant" if args.constant else "full",
        "estimates": fit.estimates,
        "std_errors": fit.std_errors,
        "nllh": fit.nllh,
        "converged": fit.converged,
        "flags": list(fit.flags),
        "n_carcasses": fit.n_used,
        "n_excluded_searches": len(ds.excluded_searches()),
    }
    if not args.constant:
        body["deviance_vs_constant"] = deviance_vs_constant(h, fit).as_dict()
    report = _envelope("fit-discovery", args, body)
    rows = [(k, fit.estimates[k], fit.std_errors.get(k, math.nan)) for k in ("a", "b", "bleed")]
    _emit(args, report, (("parameter", "estimate", "std_error"), rows))
    return EXIT_OK


def cmd_reduction(args) -> int:
    intervals = sorted(set(_floats(args.interval, "--interval")))
    if any(I <= 0 for I in intervals):
        raise InputError("--interval values must be positive")
    rows = []
    for I in intervals:
        p = resolve_params(args, I)
        rows.append(_reduction_row(p, _reduction(p, args)))
    report = _envelope("reduction", args, {"results": rows},
                       params={k: v for k, v in p.as_dict().items() if k != "interval"})
    table = (("interval", "r_star", "t_star_0", "multiplier", "n_terms", "truncation_bound"),
             [tuple(r[k] for k in ("interval", "r_star", "t_star_0", "multiplier", "n_terms",
                                   "truncation_bound")) for r in rows])
    _emit(args, report, table)
    return EXIT_OK


def _legacy_block(C, legacy, I):
    s, t_hat = legacy
    try:
        est = compare_all(C, ConstantCaseParams(s, t_hat, I))
    except ConsistencyError as exc:
        return {"error": str(exc)}
    return {**est.as_dict(), "spread": est.spread}


def cmd_estimate(args) -> int:
    if not args.counts:
        raise InputError("--counts C1,C2,... is required")
    counts = _counts(args.counts)
    gammas = _gammas(args.gamma)
    params = resolve_params(args)
    I = params.interval
    rr = _reduction(params, args)
    legacy = None
    if args.legacy:
        legacy = _floats(args.legacy, "--legacy")
        if len(legacy) != 2:
            raise InputError("--legacy takes s,t_hat")
    if args.prior == "empirical":
        prior = inf.empirical_bayes_fit(counts, rr, I)
    else:
        prior = inf.PriorSpec.objective()

    periods, pmf_rows = [], []
    for C in counts:
        post = inf.posterior_for(C, rr, I, prior)
        block = {
            "count": C,
            "point_estimate": inf.point_estimate(C, rr),
            "posterior_mean": post.mean,
            "mean_mortality": [],
            "mortality": [],
        }
        for g in gammas:
            for kind in ("one_sided", "symmetric"):
                block["mean_mortality"].append(inf.mean_mortality_interval(C, rr, I, prior, g, kind).as_dict())
            for kind in ("one_sided", "symmetric", "hpd"):
                block["mortality"].append(inf.mortality_interval(post, g, kind).as_dict())
        if legacy:
            block["legacy"] = _legacy_block(C, legacy, I)
        periods.append(block)
        pmf_rows.extend((C, M, float(p)) for M, p in enumerate(post.pmf))
        if args.pmf:
            block["pmf"] = post.pmf.tolist()

    pooled = {
        "total_count": sum(counts),
        "n_periods": len(counts),
        "posterior": {"shape": 0.0, "rate": 0.0},
        "intervals": [],
    }
    g_post = inf.mean_mortality_posterior(counts, rr, I, prior)
    pooled["posterior"] = {"shape": g_post.shape, "rate": g_post.rate, "mean": g_post.mean}
    for g in gammas:
        for kind in ("one_sided", "symmetric"):
            pooled["intervals"].append(inf.mean_mortality_interval(counts, rr, I, prior, g, kind).as_dict())

    body = {
        "reduction": _reduction_row(params, rr),
        "prior": prior.as_dict(),
        "assumptions": [CONSTANT_M_NOTE] if rr.r_star - rr.t_star_0 >= inf.GAP_TOL else [],
        "periods": periods,
        "pooled": pooled,
    }
    report = _envelope("estimate", args, body, params=params.as_dict())
    _emit(args, report, (("count", "M", "probability"), pmf_rows))
    return EXIT_OK


def cmd_golden(args) -> int:
    results = run_golden_suite()
    body = {"n_cases": len(results), "n_failed": sum(not r.passed for r in results),
            "cases": [r.as_dict() for r in results], "benchmark_seconds": benchmark()}
    report = _envelope("golden", args, body)
    rows = [tuple(r.as_dict().values()) for r in results]
    _emit(args, report, (tuple(results[0].as_dict().keys()) if results else (), rows))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output file (directory for simulate); stdout if omitted")
    common.add_argument("--seed", type=int, default=0)

    model = argparse.ArgumentParser(add_help=False)
    for name in PARAM_NAMES:
        model.add_argument(f"--{name}", type=float, help=f"override {name}")
    model.add_argument("--interval", default="7", help="search interval in days (comma list for reduction)")
    model.add_argument("--params", action="append", metavar="REPORT",
                       help="JSON fit or reduction report supplying parameters (repeatable)")
    model.add_argument("--tol", type=float, default=1e-3, help="target relative truncation error")
    model.add_argument("--terms", type=int, help="sum exactly this many reduction terms instead")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--carcasses", metavar="PATH")
    data.add_argument("--searches", metavar="PATH")

    parser = argparse.ArgumentParser(prog="acme", description="ACME carcass-count mortality estimator")
    parser.add_argument("--version", action="version", version=f"acme {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, model], help="simulate an IDT data set")
    p.add_argument("--n-carcasses", type=int, default=500)
    p.add_argument("--window", type=float, default=70.0, help="placement window in days")
    p.add_argument("--horizon", type=float, default=210.0, help="last search time in days")
    p.add_argument("--pfm-cadence", type=float, default=DEFAULT_PFM_CADENCE,
                   help="days between presence checks")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-removal", parents=[common, data], help="fit Weibull persistence")
    p.set_defaults(func=cmd_fit_removal)

    p = sub.add_parser("fit-discovery", parents=[common, data], help="fit searcher proficiency")
    p.add_argument("--constant", action="store_true", help="fit only the b=0, bleed=1 submodel")
    p.set_defaults(func=cmd_fit_discovery)

    p = sub.add_parser("reduction", parents=[common, model], help="reduction factor R*")
    p.set_defaults(func=cmd_reduction)

    p = sub.add_parser("estimate", parents=[common, model], help="mortality estimates from counts")
    p.add_argument("--counts", help="carcass counts, one per search period")
    p.add_argument("--prior", choices=("objective", "empirical"), default="objective")
    p.add_argument("--gamma", default="0.5,0.9", help="interval coverage levels")
    p.add_argument("--legacy", metavar="S,T_HAT", help="add the constant-rate estimator comparison")
    p.add_argument("--pmf", action="store_true", help="include posterior pmfs in the JSON report")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("golden", parents=[common], help="run the regression corpus and benchmark")
    p.set_defaults(func=cmd_golden)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "simulate" and args.out and Path(args.out).is_dir():
        print(f"acme: --out {args.out} is a directory", file=sys.stderr)
        return EXIT_IO
    if args.command == "simulate" and not args.out:
        print("acme: simulate needs --out DIR", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except IdtParseError as exc:
        for line in exc.errors:
            print(f"acme: {line}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ValueError) as exc:
        print(f"acme: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, ConvergenceError, ArithmeticError, inf.PosteriorError) as exc:
        print(f"acme: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"acme: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
