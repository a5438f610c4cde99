"""Command line entry point.

Four subcommands bind the library to files:

* ``fit``       select a sparse linear model from a CSV dataset
* ``simulate``  run a seeded Monte Carlo experiment from a JSON config
* ``diagnose``  identifiability margins and restricted eigenvalues for a
                dataset with known truth
* ``bounds``    evaluate every closed-form error bound on a JSON input

Exit codes: 0 success, 1 domain errors (rank deficiency, enumeration
guards, bad files), 2 usage errors. Diagnostics go to stderr, results to
stdout or the ``--out`` target. Predictor indices are 1-based in all
user-facing input and output; the library is 0-based internally.
"""

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from .bounds import (
    BoundInput,
    corollary_bounds,
    event_a_bound,
    exhaustive_lower_bound,
    theorem1_bounds,
    theorem2_bound,
)
from .design import Dataset, ModelSet, ls_fit, standardize
from .errors import SosSelectError
from .identify import TruthSpec, check_propositions
from .lasso import PenaltyPair, default_penalties
from .selection import exhaustive_gic, run_os, run_sos
from .simlab import ScenarioConfig, persist, run_experiment

log = logging.getLogger("sosselect")

_LEVELS = {"quiet": logging.WARNING, "normal": logging.INFO, "debug": logging.DEBUG}


def _emit(text: str, out: "str | None") -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _json_text(blob) -> str:
    return json.dumps(blob, indent=2, sort_keys=True)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _one_based(indices) -> list:
    return [int(j) + 1 for j in indices]


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    if not isinstance(blob, dict):
        raise ValueError(f"{path}: expected a JSON object at top level")
    return blob


# --------------------------------------------------------------------- fit

def _sigma2_arg(raw: str):
    """Either the literal 'auto' or a float; argparse maps failures to exit 2."""
    if raw == "auto":
        return "auto"
    return float(raw)


def _parse_response(raw: "str | None") -> "str | int | None":
    """1-based column number, or a header name, or None for the last column."""
    if raw is None:
        return None
    if raw.lstrip("+").isdigit():
        idx = int(raw)
        if idx < 1:
            raise ValueError("response column numbers start at 1")
        return idx - 1
    return raw


def _estimate_sigma2(design) -> float:
    """Full-model least squares estimate rss / (n_effective - p)."""
    dof = design.n_effective - design.p
    if dof <= 0:
        raise ValueError(
            "cannot estimate sigma2: p >= effective sample size; pass --sigma2"
        )
    fit = ls_fit(design, ModelSet.full(design.p), allow_degenerate=True)
    return fit.rss / dof


def _resolve_penalties(args, design) -> "tuple[PenaltyPair, float | None]":
    if args.penalty_r is not None:
        r = args.penalty_r
        r_l = args.penalty_rl if args.penalty_rl is not None else 2.0 * np.sqrt(r)
        return PenaltyPair(r=float(r), r_l=float(r_l)), None
    a = 0.5 if args.a is None else args.a
    if args.sigma2 in (None, "auto"):
        sigma2 = _estimate_sigma2(design)
        log.info("estimated sigma2 = %s from the full-model fit", _fmt(sigma2))
    else:
        sigma2 = float(args.sigma2)
        if sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
    return default_penalties(design.n, design.p, sigma2, a), sigma2


def _intercept(dataset: Dataset, model, beta_hat, mode: str) -> "float | None":
    if mode != "practical":
        return None
    idx = list(model.indices)
    return float(np.mean(dataset.y) - np.mean(dataset.x[:, idx], axis=0) @ beta_hat)


def _fit_payload(args, dataset, design, penalties, sigma2_est) -> dict:
    payload = {
        "algorithm": args.algorithm,
        "mode": args.mode,
        "penalties": {"r": penalties.r, "r_l": penalties.r_l},
        "sigma2_estimate": sigma2_est,
        "screen": None,
        "ordering": None,
        "path": None,
        "enumeration": None,
    }
    if args.algorithm == "exhaustive":
        best = exhaustive_gic(design, penalties.r)
        refit = ls_fit(design, best.model, allow_degenerate=True)
        payload["enumeration"] = {
            "value": best.value,
            "rss": best.rss,
            "evaluated": best.evaluated,
            "skipped": best.skipped,
        }
        model = best.model
    else:
        if args.algorithm == "sos":
            outcome = run_sos(
                design, penalties=penalties, tol=args.tol, max_iter=args.max_iter
            )
            scr = outcome.screen
            payload["screen"] = {
                "s0": _one_based(scr.s0.indices),
                "s1": _one_based(scr.s1.indices),
                "a0": scr.a0,
                "a1": scr.a1,
            }
        else:
            outcome = run_os(design, penalties=penalties)
        payload["ordering"] = _one_based(outcome.ordering.sequence)
        path = outcome.path
        payload["path"] = {
            "rss": [float(v) for v in path.rss_path],
            "criterion": [float(v) for v in path.values],
            "selected_size": path.selected_size,
        }
        model = outcome.selected
        refit = outcome.refit
    beta = np.asarray(refit.beta_hat, dtype=float)
    payload["selected"] = _one_based(model.indices)
    payload["coefficients"] = [
        {"predictor": int(j) + 1, "beta": float(b)}
        for j, b in zip(model.indices, beta)
    ]
    payload["intercept"] = _intercept(dataset, model, beta, args.mode)
    return payload


def _fit_table(payload: dict) -> str:
    lines = [f"algorithm: {payload['algorithm']} ({payload['mode']} parametrization)"]
    pen = payload["penalties"]
    lines.append(f"penalties: r={_fmt(pen['r'])} r_l={_fmt(pen['r_l'])}")
    if payload["sigma2_estimate"] is not None:
        lines.append(f"sigma2 (estimated): {_fmt(payload['sigma2_estimate'])}")
    if payload["screen"] is not None:
        scr = payload["screen"]
        lines.append(
            f"screen: |S0|={len(scr['s0'])} {scr['s0']}  "
            f"|S1|={len(scr['s1'])} {scr['s1']}"
        )
    if payload["ordering"] is not None:
        lines.append(f"ordering: {payload['ordering']}")
    sel = payload["selected"]
    lines.append(f"selected ({len(sel)}): {sel if sel else '(empty model)'}")
    if payload["intercept"] is not None:
        lines.append(f"intercept: {_fmt(payload['intercept'])}")
    if payload["coefficients"]:
        lines.append("coefficients:")
        lines.append("  predictor  beta")
        for row in payload["coefficients"]:
            lines.append(f"  {row['predictor']:<9d}  {_fmt(row['beta'])}")
    if payload["path"] is not None:
        lines.append("criterion path:")
        lines.append("  size  rss         criterion")
        for k, (rv, cv) in enumerate(zip(payload["path"]["rss"], payload["path"]["criterion"])):
            mark = " <- selected" if k == payload["path"]["selected_size"] else ""
            lines.append(f"  {k:<4d}  {_fmt(rv):<10s}  {_fmt(cv)}{mark}")
    if payload["enumeration"] is not None:
        e = payload["enumeration"]
        lines.append(
            f"enumeration: value={_fmt(e['value'])} rss={_fmt(e['rss'])} "
            f"evaluated={e['evaluated']} skipped={e['skipped']}"
        )
    return "\n".join(lines)


def _fit_tsv(payload: dict) -> str:
    """Coefficient table; the intercept, when present, is predictor 0."""
    lines = ["predictor\tbeta"]
    if payload["intercept"] is not None:
        lines.append(f"0\t{payload['intercept']!r}")
    for row in payload["coefficients"]:
        lines.append(f"{row['predictor']}\t{row['beta']!r}")
    return "\n".join(lines)


def _cmd_fit(args) -> int:
    dataset = Dataset.from_csv(
        args.data,
        has_header=not args.no_header,
        response=_parse_response(args.response),
    )
    design = standardize(dataset, args.mode)
    penalties, sigma2_est = _resolve_penalties(args, design)
    payload = _fit_payload(args, dataset, design, penalties, sigma2_est)
    if args.format == "json":
        _emit(_json_text(payload), args.out)
    elif args.format == "tsv":
        _emit(_fit_tsv(payload), args.out)
    else:
        _emit(_fit_table(payload), args.out)
    return 0


# ---------------------------------------------------------------- simulate

def _cmd_simulate(args) -> int:
    blob = _load_json(args.config)
    config = ScenarioConfig.from_json_dict(blob)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.fixed_design:
        overrides["fixed_design"] = True
    if args.compare_exhaustive:
        overrides["compare_exhaustive"] = True
    if overrides:
        config = dataclasses.replace(config, **overrides)
    log.info(
        "running %d replicates (n=%d p=%d t=%d, %s, jobs=%d)",
        config.replicates, config.n, config.p, config.t, config.algorithm, args.jobs,
    )
    summary = run_experiment(config, jobs=args.jobs)
    paths = persist(summary, args.out)
    freq = summary.frequencies
    lines = ["event frequencies:"]
    for name in ("screen_fail", "order_fail", "underfit", "overfit", "exact"):
        lines.append(f"  {name:<12s} {freq[name]:.4f}")
    lines.append(f"event A frequency: {summary.event_a_freq:.4f}")
    if summary.exhaustive_error is not None:
        lines.append(
            f"greedy error {summary.greedy_error:.4f} vs "
            f"exhaustive error {summary.exhaustive_error:.4f}"
        )
    lines.append("wrote:")
    for key in sorted(paths):
        lines.append(f"  {paths[key]}")
    _emit("\n".join(lines), None)
    return 0


# ---------------------------------------------------------------- diagnose

def _truth_from_json(blob: dict, design) -> TruthSpec:
    extra = set(blob) - {"support", "beta", "sigma2"}
    if extra:
        raise ValueError(f"unknown truth fields: {sorted(extra)}")
    if "support" not in blob or "beta" not in blob:
        raise ValueError("truth file needs 'support' (1-based) and 'beta' arrays")
    support = [int(j) - 1 for j in blob["support"]]
    if any(j < 0 or j >= design.p for j in support):
        raise ValueError(f"support indices must lie in 1..{design.p}")
    return TruthSpec.from_beta(
        design, support, blob["beta"], sigma2=float(blob.get("sigma2", 1.0))
    )


def _diagnose_view(report) -> dict:
    blob = report.to_json_dict()
    blob["truth"]["support"] = _one_based(blob["truth"]["support"])
    for entry in blob["delta_pairwise"]:
        entry["model"] = _one_based(entry["model"])
    return blob


def _diagnose_table(blob: dict) -> str:
    lines = [f"true support: {blob['truth']['support']}"]
    lines.append(f"margin at true size (delta_t): {_fmt(blob['delta_identifiability'])}")
    lines.append(f"margin at full size (delta_p): {_fmt(blob['delta_full'])}")
    lines.append("scaled margins by model size:")
    for size, val in blob["delta_scaled"].items():
        lines.append(f"  s={size:<3s} {_fmt(val)}")
    for key in ("kappa_support", "kappa_uniform_t"):
        k = blob[key]
        lines.append(
            f"{key}: kappa^2={_fmt(k['value'])} "
            f"certified in [{_fmt(k['lower_cert'])}, {_fmt(k['upper_cert'])}] "
            f"(converged {k['converged_fraction']:.2f})"
        )
    lines.append("consistency flags:")
    for name, ok in blob["flags"].items():
        lines.append(f"  {name:<18s} {'ok' if ok else 'VIOLATED'}")
    return "\n".join(lines)


def _cmd_diagnose(args) -> int:
    dataset = Dataset.from_csv(
        args.data,
        has_header=not args.no_header,
        response=_parse_response(args.response),
    )
    design = standardize(dataset, args.mode)
    truth = _truth_from_json(_load_json(args.truth), design)
    report = check_propositions(design, truth, restarts=args.restarts)
    blob = _diagnose_view(report)
    if args.format == "json":
        _emit(_json_text(blob), args.out)
    else:
        _emit(_diagnose_table(blob), args.out)
    return 0


# ------------------------------------------------------------------ bounds

def _cmd_bounds(args) -> int:
    inp = BoundInput.from_json_dict(_load_json(args.input))
    results = dict(theorem1_bounds(inp))
    full = theorem2_bound(inp)
    results[full.name] = full
    for which in ("C1", "C3"):
        res = corollary_bounds(inp, which)
        results[res.name] = res
    blob = {
        "input": inp.to_json_dict(),
        "bounds": {name: res.to_json_dict() for name, res in results.items()},
        "event_a_bound": event_a_bound(inp.p, inp.r_l, inp.sigma2),
        "exhaustive_lower_bound": exhaustive_lower_bound(inp.r, inp.sigma2),
    }
    if args.format == "json":
        _emit(_json_text(blob), args.out)
        return 0
    lines = ["bound         value       assumptions"]
    for name in sorted(results):
        res = results[name]
        status = "ok" if res.assumptions_ok else "FAIL: " + ",".join(res.failed_assumptions)
        lines.append(f"{name:<12s}  {_fmt(res.value):<10s}  {status}")
    lines.append(f"event A bound: {_fmt(blob['event_a_bound'])}")
    lines.append(f"exhaustive lower bound: {_fmt(blob['exhaustive_lower_bound'])}")
    _emit("\n".join(lines), args.out)
    return 0


# ------------------------------------------------------------------ parser

def _add_csv_flags(sub) -> None:
    sub.add_argument("data", help="CSV file, one row per observation")
    sub.add_argument(
        "--no-header", action="store_true",
        help="the file has no header row (columns are then numbered 1..)",
    )
    sub.add_argument(
        "--response", default=None, metavar="NAME_OR_NUM",
        help="response column as header name or 1-based number (default: last)",
    )
    sub.add_argument(
        "--mode", choices=["practical", "formal"], default="practical",
        help="centered+standardized (practical) or raw unit-norm (formal)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sosselect",
        description="Sparse linear model selection via screening, ordering "
        "and penalized-criterion search, with identifiability diagnostics, "
        "error-bound evaluation and a seeded Monte Carlo lab.",
    )
    parser.add_argument(
        "--verbosity", choices=sorted(_LEVELS), default="normal",
        help="log level for diagnostics on stderr",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="select a model from a CSV dataset")
    _add_csv_flags(fit)
    pen = fit.add_mutually_exclusive_group(required=True)
    pen.add_argument(
        "--penalty-r", type=float, default=None, metavar="R",
        help="per-parameter criterion penalty (screen threshold defaults to 2*sqrt(R))",
    )
    pen.add_argument(
        "--auto-penalty", action="store_true",
        help="derive penalties from p, sigma2 and the tuning fraction a",
    )
    fit.add_argument(
        "--penalty-rl", type=float, default=None, metavar="RL",
        help="override the screening penalty (only with --penalty-r)",
    )
    fit.add_argument(
        "--a", type=float, default=None,
        help="tuning fraction in (0,1) for --auto-penalty (default 0.5)",
    )
    fit.add_argument(
        "--sigma2", type=_sigma2_arg, default=None, metavar="S2_OR_AUTO",
        help="noise variance for --auto-penalty; 'auto' estimates it from "
        "the full-model fit (default)",
    )
    fit.add_argument(
        "--algorithm", choices=["sos", "os", "exhaustive"], default="sos",
        help="screened greedy search, full-design greedy search, or "
        "exhaustive enumeration",
    )
    fit.add_argument("--tol", type=float, default=1e-8, help="solver certificate tolerance")
    fit.add_argument("--max-iter", type=int, default=10_000, help="solver sweep budget")
    fit.add_argument("--format", choices=["table", "json", "tsv"], default="table")
    fit.add_argument("--out", default=None, help="write results here instead of stdout")
    fit.set_defaults(handler=_cmd_fit)

    sim = subs.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--config", required=True, help="scenario JSON file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim.add_argument(
        "--compare-exhaustive", action="store_true",
        help="also run the exhaustive selector per replicate (overrides config)",
    )
    sim.add_argument(
        "--fixed-design", action="store_true",
        help="draw one design and reuse it across replicates (overrides config)",
    )
    sim.add_argument(
        "--seed", type=int, default=None,
        help="override the config's master seed",
    )
    sim.set_defaults(handler=_cmd_simulate)

    dia = subs.add_parser(
        "diagnose", help="identifiability margins for a dataset with known truth"
    )
    _add_csv_flags(dia)
    dia.add_argument(
        "--truth", required=True,
        help="JSON file with 'support' (1-based), 'beta', optional 'sigma2'",
    )
    dia.add_argument(
        "--restarts", type=int, default=64,
        help="restart budget for the restricted-eigenvalue search",
    )
    dia.add_argument("--format", choices=["table", "json"], default="table")
    dia.add_argument("--out", default=None, help="write results here instead of stdout")
    dia.set_defaults(handler=_cmd_diagnose)

    bnd = subs.add_parser("bounds", help="evaluate closed-form error bounds")
    bnd.add_argument("input", help="JSON file with the bound input quantities")
    bnd.add_argument("--format", choices=["table", "json"], default="table")
    bnd.add_argument("--out", default=None, help="write results here instead of stdout")
    bnd.set_defaults(handler=_cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr, format="%(message)s")
    log.setLevel(_LEVELS[args.verbosity])
    if args.command == "fit":
        if args.penalty_rl is not None and args.penalty_r is None:
            print("usage error: --penalty-rl requires --penalty-r", file=sys.stderr)
            return 2
        if args.penalty_r is not None and (args.a is not None or args.sigma2 is not None):
            print(
                "usage error: --a and --sigma2 apply only with --auto-penalty",
                file=sys.stderr,
            )
            return 2
    try:
        return args.handler(args)
    except SosSelectError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
