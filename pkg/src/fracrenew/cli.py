"""Command-line front end: one subcommand per experiment, CSV or JSON tables.

Every output embeds the run configuration (subcommand, parameters, master
seed, format) and the library version.  Feeding that configuration back with
``--config`` reproduces the table byte for byte; ``--threads`` and
``--output`` are deliberately not part of it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Any

import numpy as np

from fracrenew import __version__, checks, ctrw, mlnum, montecarlo, renewal, thinning
from fracrenew.errors import FracRenewError
from fracrenew.rng import SeedStream

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
NON_CONFIG_KEYS = ("subcommand", "config", "output", "threads", "format", "seed")


class UsageError(Exception):
    """Bad flag value; reported with the flag's name and exit status 2."""


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _flag(name: str, fn, *args):
    """Run a constructor, re-raising library domain errors against flag ``name``."""
    try:
        return fn(*args)
    except (FracRenewError, ValueError) as exc:
        raise UsageError(f"{name}: {exc}") from None


# ---------------------------------------------------------------- models


def _add_model_flags(p: argparse.ArgumentParser, default: str = "ml"):
    p.add_argument("--model", choices=["ml", "exponential", "pareto"], default=default,
                   help="waiting-time law (Mittag-Leffler, exponential, Lomax power tail)")
    p.add_argument("--beta", type=float, default=1.0, help="Mittag-Leffler order or Lomax tail index")
    p.add_argument("--tau", type=float, default=1.0, help="Mittag-Leffler time scale")
    p.add_argument("--rate", type=float, default=1.0, help="exponential rate")
    p.add_argument("--scale", type=float, default=1.0, help="Lomax scale")


def _model(cfg: dict) -> renewal.WaitingTimeModel:
    kind = cfg["model"]
    if kind == "exponential":
        return _flag("--rate", renewal.Exponential, cfg["rate"])
    if kind == "pareto":
        _flag("--scale", lambda c: renewal.ParetoTail(0.5, c), cfg["scale"])
        return _flag("--beta", renewal.ParetoTail, cfg["beta"], cfg["scale"])
    _flag("--tau", lambda s: renewal.MittagLeffler(1.0, s), cfg["tau"])
    return _flag("--beta", renewal.MittagLeffler, cfg["beta"], cfg["tau"])


def _seed(cfg_seed: int) -> SeedStream:
    return _flag("--seed", SeedStream, cfg_seed)


# ---------------------------------------------------------------- commands


def _required(cfg: dict, key: str, flag: str):
    if cfg.get(key) is None:
        raise UsageError(f"{flag}: this flag is required")
    return cfg[key]


def cmd_ml_eval(cfg: dict, seed: int, threads: int):
    order = _flag("--beta", mlnum.Order, _required(cfg, "beta", "--beta"))
    mode = "deriv" if cfg["deriv"] is not None else ("phi" if cfg["phi"] else ("psi" if cfg["psi"] else "E"))
    if (cfg["z"] is None) == (cfg["t"] is None):
        raise UsageError("--z/--t: give exactly one of the two argument lists")
    if mode in ("psi", "phi") and cfg["t"] is None:
        raise UsageError(f"--{mode}: needs --t")
    if mode == "deriv" and cfg["z"] is None:
        raise UsageError("--deriv: needs --z")
    rows = []
    if cfg["z"] is not None:
        for z in cfg["z"]:
            if not z <= 0:
                raise UsageError(f"--z: arguments must be <= 0, got {z!r}")
            if mode == "deriv":
                k = cfg["deriv"]
                value = _flag("--deriv", mlnum.ml_deriv, order, k, z)
                t = (-z) ** (1.0 / order.beta)
                method = mlnum.Method.SERIES if t <= mlnum.DEFAULT_CONFIG.series_t_max else mlnum.Method.LAPLACE
                rows.append({"input": z, "value": value, "method_used": method.value, "est_abs_error": None})
            else:
                r = mlnum.ml_eval(order, z)
                rows.append({"input": z, "value": r.value, "method_used": r.method_used.value,
                             "est_abs_error": r.est_abs_error})
        return rows, EXIT_OK
    for t in cfg["t"]:
        if mode == "phi":
            if not t > 0:
                raise UsageError(f"--t: the density needs t > 0, got {t!r}")
            r = mlnum.ml_pdf_eval(order, t)
        else:
            if not t >= 0:
                raise UsageError(f"--t: times must be >= 0, got {t!r}")
            r = mlnum.ml_eval(order, -(t**order.beta))
        rows.append({"input": t, "value": r.value, "method_used": r.method_used.value,
                     "est_abs_error": r.est_abs_error})
    return rows, EXIT_OK


def cmd_pmf(cfg: dict, seed: int, threads: int):
    model = _model(cfg)
    t = _required(cfg, "t", "--t")
    if not t >= 0:
        raise UsageError(f"--t: must be >= 0, got {t!r}")
    if cfg["k_max"] < 0:
        raise UsageError("--k-max: must be >= 0")
    pmf = renewal.counting_pmf(model, t, cfg["k_max"])
    probs = pmf.probs[:1] if t == 0 else pmf.probs
    return [{"k": k, "prob": float(p), "tail_bound": pmf.tail_bound} for k, p in enumerate(probs)], EXIT_OK


def cmd_simulate(cfg: dict, seed: int, threads: int):
    model = _model(cfg)
    t, n = cfg["t"], cfg["n_paths"]
    horizon = t if cfg["horizon"] is None else cfg["horizon"]
    if n < 1:
        raise UsageError(f"--n-paths: must be >= 1, got {n}")
    if not t >= 0:
        raise UsageError("--t: must be >= 0")
    if not horizon >= t or not horizon > 0:
        raise UsageError("--horizon: must be positive and at least --t")
    koz = cfg["sampler"] == "kozubowski"
    stream = _seed(seed)
    emp = montecarlo.empirical_counting_pmf(model, t, n, stream, threads, koz)
    k_top = max(emp.k_max, cfg["k_max"])
    exact = renewal.counting_pmf(model, t, k_top).probs
    emp_p = np.zeros(k_top + 1)
    emp_p[: emp.probs.size] = emp.probs
    band = montecarlo.binomial_band(exact, n)
    waits = montecarlo.sample_waits(model, n, stream, threads, koz)
    ks = montecarlo.ks_statistic(waits, montecarlo.waiting_time_cdf(model))
    crit = montecarlo.ks_critical(n)
    rows = [{"k": k, "empirical": float(emp_p[k]), "analytic": float(exact[k]),
             "abs_diff": float(abs(emp_p[k] - exact[k])), "band_4sigma": float(band[k]),
             "within_band": bool(abs(emp_p[k] - exact[k]) <= band[k]),
             "ks_statistic": ks, "ks_critical": crit} for k in range(k_top + 1)]
    return rows, EXIT_OK


def cmd_thin(cfg: dict, seed: int, threads: int):
    base = cfg["base"]
    if base == "exponential":
        model = _flag("--rate", renewal.Exponential, cfg["rate"])
    elif base == "ml":
        model = _flag("--beta", renewal.MittagLeffler, cfg["beta"], cfg["tau"])
    else:
        model = _flag("--beta", renewal.ParetoTail, cfg["beta"], cfg["scale"])
    phi = thinning.LaplaceDensity.from_model(model)
    a = phi.a_const if cfg["a_const"] is None else cfg["a_const"]
    levels = cfg["levels"]
    if not levels:
        raise UsageError("--levels: the schedule is empty")
    schedule = _flag("--levels", thinning.ThinningSchedule, phi.beta, a, tuple(levels))
    if cfg["n_paths"] < 1:
        raise UsageError("--n-paths: must be >= 1")
    def log(i, r):
        print(f"level {i + 1}/{len(levels)}: delta={r.delta:g} KS={r.ks_distance:.4f}", file=sys.stderr)

    res = thinning.thinning_cascade(model, schedule, cfg["n_paths"], _seed(seed), threads, log)
    rows = [{"level": i + 1, "delta": r.delta, "epsilon": r.epsilon, "ks_distance": r.ks_distance,
             "ks_critical": r.ks_critical, "transform_distance": r.transform_distance}
            for i, r in enumerate(res)]
    return rows, EXIT_OK


def _ctrw_models(cfg: dict):
    wait = _model(cfg)
    if isinstance(wait, renewal.ParetoTail):
        raise UsageError("--model: the walk supports ml and exponential waiting times")
    if cfg["jump"] == "gaussian":
        jump = _flag("--sigma", ctrw.Gaussian, cfg["sigma"])
    else:
        jump = ctrw.TwoPoint()
    return wait, jump


def _ctrw_checks(cfg: dict, wait, jump):
    rows = []
    dt = cfg["dt"]
    if not 0 < dt <= 0.1:
        raise UsageError("--dt: must lie in (0, 0.1]")
    if isinstance(jump, ctrw.TwoPoint):
        xg = np.arange(-10.0, 11.0)
    else:
        xg = np.linspace(-8.0, 8.0, 161) * jump.sigma
    if cfg["check_kf"]:
        unit = (isinstance(wait, renewal.Exponential) and wait.rate == 1.0) or (
            isinstance(wait, renewal.MittagLeffler) and wait.beta == 1.0 and wait.time_scale == 1.0)
        if not unit:
            raise UsageError("--check-kf: needs unit-rate exponential waiting times")
        tg = np.arange(0.5 - dt, 2.0 + dt + 1e-12, dt)
        r = ctrw.kolmogorov_feller_residual(renewal.Exponential(1.0), jump, xg, tg)
        rows.append({"check": "kolmogorov-feller", "value": r, "threshold": 1e-4, "passed": r < 1e-4})
    if cfg["check_fractional"]:
        if not isinstance(wait, renewal.MittagLeffler):
            raise UsageError("--check-fractional: needs --model ml")
        tg = np.arange(0.0, 2.0 + 1e-12, dt)
        t_min = cfg["t_min"]
        if t_min is not None and not 0 <= t_min < 2.0:
            raise UsageError("--t-min: must lie in [0, 2)")
        rep = ctrw.fractional_master_residual(wait, jump, xg, tg, t_min)
        rep2 = ctrw.fractional_master_residual(wait, jump, xg, np.arange(0.0, 2.0 + 1e-12, 2 * dt), t_min)
        rows.append({"check": "fractional-master", "value": rep.max_residual, "threshold": 5e-3,
                     "passed": rep.max_residual < 5e-3})
        ratio = rep2.max_residual / rep.max_residual
        target = 2.0**rep.expected_order
        rows.append({"check": "fractional-order-ratio", "value": ratio, "threshold": target,
                     "passed": abs(ratio / target - 1.0) <= 0.2})
    if cfg["check_mw"]:
        if not cfg["s"] > 0:
            raise UsageError("--s: must be positive")
        r = ctrw.montroll_weiss_check(wait, jump, cfg["kappa"], cfg["s"])
        rows.append({"check": "montroll-weiss", "value": r, "threshold": 1e-4, "passed": r < 1e-4})
    code = EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK_FAILED
    return rows, code


def cmd_ctrw(cfg: dict, seed: int, threads: int):
    wait, jump = _ctrw_models(cfg)
    if cfg["check_kf"] or cfg["check_fractional"] or cfg["check_mw"]:
        return _ctrw_checks(cfg, wait, jump)
    t, k_max = cfg["t"], cfg["k_max"]
    if not t >= 0:
        raise UsageError("--t: must be >= 0")
    if k_max < 0:
        raise UsageError("--k-max: must be >= 0")
    if cfg["x"] is not None:
        xs = np.asarray(cfg["x"], dtype=float)
    else:
        if cfg["nx"] < 1:
            raise UsageError("--nx: must be >= 1")
        xs = np.linspace(cfg["x_min"], cfg["x_max"], cfg["nx"])
        if isinstance(jump, ctrw.TwoPoint):
            xs = np.unique(np.round(xs))
    full = ctrw.sojourn_series(wait, jump, t, None, k_max)
    rows = []
    for x in xs:
        sd = _flag("--x", ctrw.sojourn_series, wait, jump, t, np.array([x]), k_max)
        dens = float(sd.density[0])
        at_origin = abs(x) < 1e-12
        rows.append({"x": float(x), "density": dens, "atom": sd.atom_at_origin,
                     "value": dens + (sd.atom_at_origin if at_origin else 0.0), "mass": full.mass,
                     "truncation_bound": sd.truncation_bound})
    if cfg["simulate"]:
        n = cfg["simulate"]
        if n < 1:
            raise UsageError("--simulate: must be >= 1")
        pos, _ = ctrw.simulate_positions(wait, jump, t, n, _seed(seed), threads)
        series = ctrw.sojourn_cdf(wait, jump, t, xs, k_max)
        srt = np.sort(pos)
        empirical = np.searchsorted(srt, xs, side="right") / n
        for row, f, e in zip(rows, series, empirical):
            row.update({"series_cdf": float(f), "empirical_cdf": float(e), "abs_diff": float(abs(f - e))})
    return rows, EXIT_OK


def cmd_verify(cfg: dict, seed: int, threads: int):
    _flag("--beta", mlnum.Order, cfg["beta"])
    _required(cfg, "suite", "suite")
    if cfg["suite"] not in checks.SUITES:
        raise UsageError(f"suite: unknown suite {cfg['suite']!r}; choose from {', '.join(checks.SUITES)}")
    options = {}
    if cfg["t_min"] is not None:
        if cfg["suite"] != "relaxation":
            raise UsageError("--t-min: only the relaxation suite has a residual window")
        if not 0 < cfg["t_min"] < 5.0:
            raise UsageError("--t-min: must lie in (0, 5)")
        options["t_min"] = cfg["t_min"]
    res = checks.run_suite(cfg["suite"], cfg["beta"], **options)
    rows = [dict(zip(res.columns, r)) for r in res.rows]
    for r in rows:
        r["suite"] = res.name
        r["passed"] = res.passed
    print(f"{'PASS' if res.passed else 'FAIL'} {res.name}", file=sys.stderr)
    return rows, EXIT_OK if res.passed else EXIT_CHECK_FAILED


COMMANDS = {
    "ml-eval": cmd_ml_eval,
    "pmf": cmd_pmf,
    "simulate": cmd_simulate,
    "thin": cmd_thin,
    "ctrw": cmd_ctrw,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["csv", "json"], default=None, help="output format (default csv)")
    common.add_argument("--output", default=None, help="output file (default stdout)")
    common.add_argument("--config", default=None,
                        help="JSON run configuration, or a previous output file; overrides flags")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo")
    common.add_argument("--seed", type=int, default=None, help="master seed (fallback: $FRACRENEW_SEED, then 0)")

    parser = argparse.ArgumentParser(prog="fracrenew", parents=[common],
                                     description="Renewal, fractional Poisson and CTRW experiments.")
    parser.add_argument("--version", action="version", version=f"fracrenew {__version__}")
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("ml-eval", parents=[common], help="evaluate Mittag-Leffler quantities")
    p.add_argument("--beta", type=float, default=None, help="order in (0, 1] (required)")
    p.add_argument("--z", type=float, nargs="+", default=None, help="arguments z <= 0 of E_beta(z)")
    p.add_argument("--t", type=float, nargs="+", default=None, help="times for the survival or density")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--psi", action="store_true", help="survival E_beta(-t^beta)")
    mode.add_argument("--phi", action="store_true", help="waiting-time density")
    mode.add_argument("--deriv", type=int, default=None, metavar="K", help="K-th derivative of E_beta at z")

    p = sub.add_parser("pmf", parents=[common], help="counting distribution P(N(t) = k)")
    _add_model_flags(p)
    p.add_argument("--t", type=float, default=None, help="time (required)")
    p.add_argument("--k-max", type=int, default=20)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo counting pmf against the closed form")
    _add_model_flags(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--n-paths", type=int, default=10_000)
    p.add_argument("--k-max", type=int, default=8, help="report at least k = 0..K")
    p.add_argument("--sampler", choices=["inversion", "kozubowski"], default="inversion")

    p = sub.add_parser("thin", parents=[common], help="thinning cascade towards the Mittag-Leffler law")
    p.add_argument("--base", choices=["pareto", "exponential", "ml"], default="pareto")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--a-const", type=float, default=None, help="default: the base law's tail constant")
    p.add_argument("--levels", type=_floats, default=list(thinning.DEFAULT_LEVELS),
                   help="comma-separated decreasing deltas")
    p.add_argument("--n-paths", type=int, default=100_000, help="retained gaps per level")

    p = sub.add_parser("ctrw", parents=[common], help="sojourn density of the compound renewal process")
    _add_model_flags(p)
    p.add_argument("--jump", choices=["twopoint", "gaussian"], default="twopoint")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", type=float, nargs="+", default=None)
    p.add_argument("--x-min", type=float, default=-5.0)
    p.add_argument("--x-max", type=float, default=5.0)
    p.add_argument("--nx", type=int, default=11)
    p.add_argument("--k-max", type=int, default=ctrw.DEFAULT_K_MAX)
    p.add_argument("--simulate", type=int, default=0, metavar="N", help="compare with N simulated walkers")
    p.add_argument("--check-kf", action="store_true", help="Kolmogorov-Feller residual")
    p.add_argument("--check-fractional", action="store_true", help="fractional master-equation residual")
    p.add_argument("--check-mw", action="store_true", help="Montroll-Weiss residual")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-min", type=float, default=None,
                   help="start of the fractional residual window (default: a quarter of the final time)")

    p = sub.add_parser("verify", parents=[common], help="run an invariant battery")
    p.add_argument("suite", nargs="?", default=None, help=f"one of: {', '.join(checks.SUITES)}")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--t-min", type=float, default=None, help="relaxation residual window start (default 0.1)")
    return parser


# ---------------------------------------------------------------- output


def _clean(v: Any) -> Any:
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _csv_cell(v: Any) -> str:
    v = _clean(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(rows: list[dict], meta: dict, fmt: str) -> str:
    rows = [{k: _clean(v) for k, v in r.items()} for r in rows]
    if fmt == "json":
        return json.dumps({"meta": meta, "rows": rows}, indent=2, sort_keys=False, allow_nan=False) + "\n"
    columns: list[str] = []
    for r in rows:
        columns.extend(c for c in r if c not in columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns + ["meta"])
    meta_text = json.dumps(meta, sort_keys=True, separators=(",", ":"))
    if not rows:
        w.writerow([""] * len(columns) + [meta_text])
    for i, r in enumerate(rows):
        w.writerow([_csv_cell(r.get(c)) for c in columns] + [meta_text if i == 0 else ""])
    return buf.getvalue()


def _load_config(path: str) -> dict:
    with open(path, newline="") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        reader = csv.DictReader(io.StringIO(text))
        first = next(reader, None)
        if first is None or not first.get("meta"):
            raise UsageError(f"--config: {path} holds neither JSON nor a CSV with a meta column") from None
        obj = json.loads(first["meta"])
    if "meta" in obj:
        obj = obj["meta"]
    if "run_config" in obj:
        obj = obj["run_config"]
    if "subcommand" not in obj or "params" not in obj:
        raise UsageError(f"--config: {path} is not a run configuration")
    return obj


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.config:
            loaded = _load_config(args.config)
            sub = loaded["subcommand"]
            if args.subcommand not in (None, sub):
                raise UsageError(f"--config: holds a {sub!r} run, not {args.subcommand!r}")
            if sub not in COMMANDS:
                raise UsageError(f"--config: unknown subcommand {sub!r}")
            defaults = vars(parser.parse_args([sub]))
            params = {k: v for k, v in defaults.items() if k not in NON_CONFIG_KEYS}
            unknown = set(loaded["params"]) - set(params)
            if unknown:
                raise UsageError(f"--config: unknown parameters {sorted(unknown)}")
            params.update(loaded["params"])
            seed = int(loaded.get("master_seed", 0))
            fmt = loaded.get("format", "csv")
        else:
            if args.subcommand is None:
                parser.print_usage(sys.stderr)
                print("fracrenew: error: a subcommand (or --config) is required", file=sys.stderr)
                return EXIT_USAGE
            sub = args.subcommand
            params = {k: v for k, v in vars(args).items() if k not in NON_CONFIG_KEYS}
            if args.seed is not None:
                seed = args.seed
            else:
                env = os.environ.get("FRACRENEW_SEED")
                try:
                    seed = int(env) if env else 0
                except ValueError:
                    raise UsageError(f"FRACRENEW_SEED: not an integer: {env!r}") from None
            fmt = args.format or "csv"
        if fmt not in ("csv", "json"):
            raise UsageError(f"--format: unknown format {fmt!r}")
        if args.threads < 1:
            raise UsageError("--threads: must be >= 1")
        run_config = {"subcommand": sub, "params": params, "master_seed": seed, "format": fmt}
        rows, code = COMMANDS[sub](params, seed, args.threads)
    except UsageError as exc:
        print(f"fracrenew: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FracRenewError as exc:
        print(f"fracrenew: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    meta = {"run_config": run_config, "library_version": __version__, "master_seed": seed}
    text = render(rows, meta, fmt)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
