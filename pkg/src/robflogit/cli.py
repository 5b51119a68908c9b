"""Command-line front end: ``robflogit fit | simulate | diagnose``.

Exit codes: 0 ok, 2 bad input, 3 separated responses, 4 no convergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .diagnostics import flag_outliers, predict_probs
from .fit import FitConfig, FitError, FitResult, SeparationError, fit_fixed_k, select_k
from .funcbasis import CurveSet, Grid, LabeledSample, make_basis
from .loss import LossSpec
from .simlab import SCHEMES, GeneratorSpec, ScenarioSpec, run_study, standard_estimators
from .weights import WeightSpec

log = logging.getLogger("robflogit")

EXIT_OK, EXIT_INPUT, EXIT_SEPARATION, EXIT_NONCONVERGENCE = 0, 2, 3, 4


class InputError(Exception):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_table(path: Path, header, rows, stamp: str, fmt: str):
    if fmt == "json":
        records = [dict(zip(header, r)) for r in rows]
        _write_json(path.with_suffix(".json"), {"stamp": stamp, "rows": records})
        return
    with path.open("w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _data_lines(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def read_curves(path) -> CurveSet:
    """First data row = grid points, each further row = one curve."""
    path = Path(path)
    rows = []
    for lineno, line in _data_lines(path):
        try:
            rows.append((lineno, [float(v) for v in next(csv.reader([line]))]))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
    if len(rows) < 2:
        raise InputError(f"{path}: need a grid row and at least one curve")
    grid_line, pts = rows[0]
    try:
        grid = Grid(np.array(pts))
    except ValueError as exc:
        raise InputError(f"{path}:{grid_line}: invalid grid ({exc})") from exc
    for lineno, vals in rows[1:]:
        if len(vals) != len(pts):
            raise InputError(f"{path}:{lineno}: expected {len(pts)} values, found {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}:{lineno}: non-finite value")
    return CurveSet(grid, np.array([v for _, v in rows[1:]]))


def read_responses(path) -> np.ndarray:
    path = Path(path)
    out = []
    for lineno, line in _data_lines(path):
        field = line.strip().rstrip(",")
        try:
            v = float(field)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: response {field!r} is not a number") from exc
        if v not in (0.0, 1.0):
            raise InputError(f"{path}:{lineno}: response must be 0 or 1, got {field!r}")
        out.append(v)
    return np.array(out)


def read_sample(curves_path, responses_path) -> LabeledSample:
    curves = read_curves(curves_path)
    y = read_responses(responses_path)
    if y.size != curves.n:
        raise InputError(f"{responses_path}: {y.size} responses for {curves.n} curves")
    return LabeledSample(curves, y)


def _fit_config(args) -> FitConfig:
    loss = LossSpec.classical() if args.loss == "classical" else LossSpec.croux_haesbroeck(args.c)
    weights = {
        "unit": WeightSpec.unit(),
        "mahalanobis-hr": WeightSpec.mahalanobis_hr(rng_seed=args.seed),
        "fbplot-hr": WeightSpec.fbplot_hr(),
    }[args.weights]
    k_range = None
    if args.k is not None:
        k_range = (args.k, args.k)
    elif args.k_min is not None or args.k_max is not None:
        if args.k_min is None or args.k_max is None:
            raise InputError("--k-min and --k-max must be given together")
        k_range = (args.k_min, args.k_max)
    try:
        return FitConfig(loss=loss, weights=weights, basis_family=args.basis, order=args.order,
                         k_range=k_range, seed=args.seed, max_iter=args.max_iter)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def fit_to_dict(res: FitResult) -> dict:
    return {
        "alpha": res.alpha,
        "coeffs": [float(v) for v in res.coeffs],
        "k": res.k,
        "objective": res.objective,
        "rbic": res.rbic,
        "rbic_trace": {str(k): v for k, v in sorted(res.rbic_trace.items())},
        "k_at_boundary": res.k_at_boundary,
        "weights": [float(v) for v in res.weights_used],
        "converged": res.converged,
        "gradient_norm": res.gradient_norm,
        "iterations": res.iterations,
        "basis": res.basis.describe(),
        "grid": [float(v) for v in res.basis.grid.points],
    }


def load_fit(path) -> FitResult:
    data = json.loads(Path(path).read_text())
    fit = data["fit"]
    b = fit["basis"]
    grid = Grid(np.array(fit["grid"]))
    basis = make_basis(grid, b["k"], b["family"], b["order"] or 4)
    return FitResult(
        alpha=fit["alpha"], coeffs=np.array(fit["coeffs"]), k=fit["k"],
        objective=fit["objective"], weights_used=np.array(fit["weights"]),
        gradient_norm=fit["gradient_norm"], iterations=fit["iterations"],
        converged=fit["converged"], rbic=fit["rbic"], basis=basis,
        rbic_trace={int(k): v for k, v in fit["rbic_trace"].items()},
        k_at_boundary=fit["k_at_boundary"],
    )


def _stamp(digest: str, seed) -> str:
    return f"config_sha256={digest} seed={seed}"


def cmd_fit(args) -> int:
    cfg = _fit_config(args)
    sample = read_sample(args.curves, args.responses)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_cfg = {"command": "fit", "fit_config": cfg.to_dict(),
               "curves_sha256": hashlib.sha256(Path(args.curves).read_bytes()).hexdigest(),
               "responses_sha256": hashlib.sha256(Path(args.responses).read_bytes()).hexdigest()}
    digest = config_hash(run_cfg)
    try:
        if args.k is not None:
            basis = make_basis(sample.curves.grid, args.k, args.basis, args.order)
            res = fit_fixed_k(sample, basis, cfg)
            res.rbic_trace = {res.k: res.rbic}
        else:
            res = select_k(sample, cfg)
    except SeparationError as exc:
        log.error("separation: %s", exc)
        return EXIT_SEPARATION
    except (FitError, ValueError) as exc:
        log.error("fit failed: %s", exc)
        return EXIT_INPUT
    _write_json(out / "fit.json", {"config": run_cfg, "config_sha256": digest, "seed": args.seed,
                                   "fit": fit_to_dict(res)})
    grid = res.basis.grid.points
    _write_table(out / "beta_hat.csv", ["t", "beta_hat"], list(zip(grid, res.slope())),
                 _stamp(digest, args.seed), args.format)
    if not res.converged:
        log.error("optimiser stopped at gradient norm %.3g (tolerance %.3g)", res.gradient_norm, cfg.grad_tol)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _parse_scenarios(args) -> list[ScenarioSpec]:
    names = [s.strip() for item in args.scenario for s in item.split(",") if s.strip()]
    out = []
    for name in names:
        if name not in SCHEMES:
            raise InputError(f"unknown scenario {name!r}; choose from {', '.join(SCHEMES)}")
        eps = 0.0 if name == "C0" else args.epsilon
        try:
            out.append(ScenarioSpec(name, eps, m=args.m, mu_level=args.mu))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    return out


def cmd_simulate(args) -> int:
    scenarios = _parse_scenarios(args)
    estimators = standard_estimators()
    if args.estimators:
        wanted = [e.strip() for e in args.estimators.split(",")]
        by_name = {e.name: e for e in estimators}
        unknown = [w for w in wanted if w not in by_name]
        if unknown:
            raise InputError(f"unknown estimator(s) {unknown}; choose from {list(by_name)}")
        estimators = [by_name[w] for w in wanted]
    try:
        gen = GeneratorSpec(n=args.n, grid_size=args.grid_size, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    report = run_study(scenarios, estimators, args.n_reps, args.seed, gen, n_jobs=args.jobs)
    for key, secs in report.runtimes.items():
        log.info("%s / %s: %.1f s", key[0], key[1], secs)
    content = report.to_dict()
    run_cfg = {"command": "simulate", **{k: content[k] for k in ("n_R", "seed", "generator", "scenarios", "estimators")}}
    digest = config_hash(run_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(digest, args.seed)
    _write_json(out / "manifest.json", {"config": run_cfg, "config_sha256": digest, "seed": args.seed,
                                        "failures": content["failures"]})
    rows = report.rows
    _write_table(out / "alpha.csv", ["scenario", "estimator", "alpha_bias", "alpha_sd"],
                 [(r.scenario, r.estimator, r.alpha_bias, r.alpha_sd) for r in rows], stamp, args.format)
    _write_table(out / "pmse.csv", ["scenario", "estimator", "pmse"],
                 [(r.scenario, r.estimator, r.pmse) for r in rows], stamp, args.format)
    _write_table(out / "beta_trimmed.csv", ["scenario", "estimator", "bias2_trim", "mise_trim"],
                 [(r.scenario, r.estimator, r.bias2_trim, r.mise_trim) for r in rows], stamp, args.format)
    _write_table(out / "summary.csv",
                 ["scenario", "estimator", "alpha_bias", "alpha_sd", "bias2_trim", "mise_trim", "pmse",
                  "mean_k", "n_ok", "n_failed"],
                 [(r.scenario, r.estimator, r.alpha_bias, r.alpha_sd, r.bias2_trim, r.mise_trim, r.pmse,
                   r.mean_k, r.n_ok, r.n_failed) for r in rows], stamp, args.format)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    try:
        meta = json.loads(Path(args.fit).read_text())
        fit = load_fit(args.fit)
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"{args.fit}: cannot read fit ({exc})") from exc
    sample = read_sample(args.curves, args.responses)
    if sample.curves.grid != fit.basis.grid:
        raise InputError("data grid does not match the grid stored with the fit")
    probs = predict_probs(fit, fit.basis, sample.curves)
    levels = tuple(args.levels)
    rep = flag_outliers(sample.responses, probs, levels)
    run_cfg = {"command": "diagnose", "fit_config_sha256": meta.get("config_sha256"),
               "levels": list(levels),
               "curves_sha256": hashlib.sha256(Path(args.curves).read_bytes()).hexdigest(),
               "responses_sha256": hashlib.sha256(Path(args.responses).read_bytes()).hexdigest()}
    digest = config_hash(run_cfg)
    seed = meta.get("seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(digest, seed)
    _write_table(out / "residuals.csv", ["index", "y", "p_hat", "d", "flag"],
                 [(i, int(y), p, d, int(f)) for i, (y, p, d, f) in
                  enumerate(zip(sample.responses, rep.probs, rep.residuals, rep.outlier_flags))],
                 stamp, args.format)
    _write_table(out / "qq.csv", ["theoretical", "empirical"], [tuple(r) for r in rep.qq_pairs],
                 stamp, args.format)
    _write_json(out / "diagnose.json", {
        "config": run_cfg, "config_sha256": digest, "seed": seed,
        "levels": list(levels), "cutoff_low": rep.cutoff_low, "cutoff_high": rep.cutoff_high,
        "n_flagged": int(rep.outlier_flags.sum()),
        "flagged": [int(i) for i in np.flatnonzero(rep.outlier_flags)],
        "n_clamped": int(rep.clamped.sum()),
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robflogit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a functional logistic model to CSV data")
    f.add_argument("--curves", required=True)
    f.add_argument("--responses", required=True)
    f.add_argument("--loss", choices=["classical", "ch"], default="ch")
    f.add_argument("--c", type=float, default=0.5, help="Croux-Haesbroeck tuning constant")
    f.add_argument("--weights", choices=["unit", "mahalanobis-hr", "fbplot-hr"], default="mahalanobis-hr")
    f.add_argument("--basis", choices=["bspline", "fourier"], default="bspline")
    f.add_argument("--order", type=int, default=4)
    kk = f.add_mutually_exclusive_group()
    kk.add_argument("--k", type=int, help="fixed basis size (skips the RBIC scan)")
    kk.add_argument("--k-min", type=int)
    f.add_argument("--k-max", type=int)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--max-iter", type=int, default=200, help="optimiser iteration cap per start")
    f.add_argument("--out", required=True)
    f.add_argument("--format", choices=["csv", "json"], default="csv")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a contamination study")
    s.add_argument("--scenario", action="append", required=True, help="C0..C5, repeatable or comma separated")
    s.add_argument("--epsilon", type=float, default=0.05)
    s.add_argument("--m", type=float, default=4.0, help="C2 leverage multiplier")
    s.add_argument("--mu", type=float, default=25.0, help="C3-C5 shift level")
    s.add_argument("--n", type=int, default=300)
    s.add_argument("--grid-size", type=int, default=100)
    s.add_argument("--n-reps", type=int, default=100)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--estimators", help="comma separated subset of CL,M,WCL-HR,WM-HR,WCL-FBB,WM-FBB")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("diagnose", help="deviance residuals and outlier flags for a fitted model")
    d.add_argument("--fit", required=True, help="fit.json written by 'robflogit fit'")
    d.add_argument("--curves", required=True)
    d.add_argument("--responses", required=True)
    d.add_argument("--levels", type=float, nargs=2, default=[0.005, 0.995])
    d.add_argument("--out", required=True)
    d.add_argument("--format", choices=["csv", "json"], default="csv")
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
