"""Batch command-line front end.

    zabs fit --config run.toml --data data.csv --out dir/
    zabs diagnose --fit dir/fit.json --out dir/
    zabs refit-without --fit dir/fit.json --drop 2,20,228 --out dir/

Observation indices in files and on the command line are 1-based.
Exit codes: 0 ok, 1 configuration error, 2 data error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plots
from .diagnostics import local_influence, quantile_residuals, simulated_envelope
from .errors import (
    ConvergenceError,
    DataError,
    ModelSpecError,
    QuadratureError,
    RankDeficientError,
    SingularHessianError,
)
from .estimation import FitOptions, FitResult, IterationRecord, fit, wald_inference
from .io import ConfigError, Dataset, RunConfig, config_from_dict, load_config, read_csv

logger = logging.getLogger("zabs")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3
FIT_FORMAT = 1


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------- #
# serialization helpers


def _num(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _trace_rows(trace):
    for rec in trace:
        yield [rec.part, rec.iteration, float(rec.loglik), float(rec.step_scale),
               float(rec.score_max)] + [float(t) for t in rec.theta]


def _write_trace(path: Path, trace, names) -> None:
    _write_csv(path, ["part", "iteration", "loglik", "step_scale", "score_max"] + list(names),
               _trace_rows(trace))


def fit_to_dict(res: FitResult, cfg: RunConfig, data_path: str, level: float) -> dict:
    table = wald_inference(res, level)
    return {
        "format": FIT_FORMAT,
        "config": cfg.raw,
        "data_path": data_path,
        "response": res.model.response,
        "names": res.names,
        "theta": [float(t) for t in res.theta],
        "inv_info": [[float(v) for v in row] for row in res.inv_info],
        "covariance": res.options.covariance,
        "loglik": float(res.loglik),
        "aic": float(res.aic),
        "n": res.n,
        "n0": res.n0,
        "converged": res.converged,
        "iterations": res.iterations,
        "score_max": float(res.score_max),
        "level": level,
        "inference": table.rows(),
        "trace": [
            {"part": r.part, "iteration": r.iteration, "loglik": float(r.loglik),
             "step_scale": float(r.step_scale), "score_max": float(r.score_max),
             "theta": [float(t) for t in r.theta]}
            for r in res.trace
        ],
    }


def fit_from_dict(d: dict) -> tuple[FitResult, RunConfig]:
    if d.get("format") != FIT_FORMAT:
        raise CliError("unsupported fit artifact format", EXIT_CONFIG)
    cfg = config_from_dict(d["config"])
    model = cfg.model
    slices, start = {}, 0
    for name, comp in model.blocks():
        k = comp.predictor.n_params
        slices[name] = slice(start, start + k)
        start += k
    trace = [IterationRecord(r["part"], r["iteration"], np.array(r["theta"]), r["loglik"],
                             r["step_scale"], r["score_max"]) for r in d["trace"]]
    res = FitResult(
        theta=np.array(d["theta"], dtype=float),
        names=list(d["names"]),
        slices=slices,
        inv_info=np.array(d["inv_info"], dtype=float),
        loglik=d["loglik"],
        trace=trace,
        converged=d["converged"],
        n=d["n"],
        n0=d["n0"],
        model=model,
        score_max=d["score_max"],
        options=cfg.fit,
    )
    return res, cfg


def _load_data(cfg: RunConfig, path) -> Dataset:
    if path is None:
        raise CliError("no data file given (use --data or set 'data' in the config)", EXIT_CONFIG)
    return read_csv(path, sorted(cfg.model.columns()), cfg.model.response)


def _load_fit(path) -> tuple[FitResult, RunConfig, Dataset]:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read fit artifact {path}: {exc}", EXIT_CONFIG) from None
    res, cfg = fit_from_dict(d)
    data = _load_data(cfg, d["data_path"])
    return res, cfg, data


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def format_report(res: FitResult, level: float = 0.95, title: str = "ZABS regression fit") -> str:
    table = wald_inference(res, level)
    width = max(len(n) for n in table.names) + 2
    lines = [
        title,
        f"n = {res.n}, zeros = {res.n0}, covariance = {res.options.covariance} information",
        "",
        f"{'Parameter':<{width}}{'Estimate':>10}{'Std. Error':>12}{'z value':>10}{'Pr(>|z|)':>10}",
    ]
    for row in table.rows():
        lines.append(
            f"{row['parameter']:<{width}}{row['estimate']:>10.3f}{row['se']:>12.3f}"
            f"{row['z']:>10.3f}{_fmt_p(row['p_value']):>10}"
        )
    lines += [
        "",
        f"log-likelihood: {res.loglik:.4f}",
        f"AIC: {res.aic:.4f}",
        f"iterations: {res.iterations}",
        f"max |score|: {res.score_max:.3g}",
    ]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- #
# commands


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    data_path = args.data or cfg.data
    data = _load_data(cfg, data_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = fit(cfg.model, data, cfg.fit)
    except ConvergenceError as exc:
        _write_trace(out / "trace.csv", exc.trace, cfg.model.param_names())
        raise
    level = cfg.diagnostics.level
    _write_json(out / "fit.json", fit_to_dict(res, cfg, str(Path(data_path).resolve()), level))
    table = wald_inference(res, level)
    _write_csv(
        out / "inference.csv",
        ["parameter", "estimate", "se", "z", "p_value", "ci_lower", "ci_upper"],
        ([r["parameter"], r["estimate"], r["se"], r["z"], r["p_value"], r["ci_lower"],
          r["ci_upper"]] for r in table.rows()),
    )
    _write_trace(out / "trace.csv", res.trace, res.names)
    report = format_report(res, level)
    (out / "report.txt").write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    res, cfg, data = _load_fit(args.fit)
    opts = cfg.diagnostics
    seed = args.seed if args.seed is not None else opts.seed
    if seed is None:
        raise CliError("diagnostics need an explicit integer seed ([diagnostics] seed or --seed)",
                       EXIT_CONFIG)
    replicates = args.replicates or opts.replicates
    band = args.band or opts.band
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rs = quantile_residuals(res, data, seed)
    env = simulated_envelope(res, data, replicates, band, seed)
    infl = local_influence(res, data, ridge=args.ridge)
    y = data[cfg.model.response]
    fitted_mean = (1 - rs.nu) * rs.mu
    idx = np.arange(1, y.size + 1)

    _write_csv(out / "residuals.csv",
               ["index", "y", "mu", "sigma", "nu", "fitted_mean", "residual"],
               ([int(i), float(a), float(b), float(c), float(d), float(e), float(f)]
                for i, a, b, c, d, e, f in zip(idx, y, rs.mu, rs.sigma, rs.nu, fitted_mean,
                                                rs.residuals)))
    observed = np.sort(rs.residuals)
    _write_csv(out / "envelope.csv",
               ["rank", "theoretical", "lower", "median", "upper", "observed"],
               ([int(k + 1), float(env.theoretical[k]), float(env.lower[k]),
                 float(env.median[k]), float(env.upper[k]), float(observed[k])]
                for k in range(observed.size)))
    blocks = list(infl.blocks)
    _write_csv(out / "influence.csv", ["index"] + [f"C_{b}" for b in blocks],
               ([int(i + 1)] + [float(infl[b].C[i]) for b in blocks] for i in range(y.size)))
    _write_csv(out / "dmax.csv", ["index"] + [f"dmax_{b}" for b in blocks],
               ([int(i + 1)] + [float(infl[b].d_max[i]) for b in blocks] for i in range(y.size)))
    summary = {
        "seed": seed,
        "envelope": {"replicates": env.replicates, "failed": env.failed, "band": band,
                     "coverage": env.coverage(rs.residuals)},
        "ridge": infl.ridge,
        "influence": {
            b: {"threshold": float(infl[b].threshold),
                "flagged": [int(i + 1) for i in infl[b].flagged],
                "max_eigenvalue": float(infl[b].eigenvalue)}
            for b in blocks
        },
    }
    _write_json(out / "diagnostics.json", summary)
    _write_json(out / "flagged.json", {b: summary["influence"][b]["flagged"] for b in blocks})

    plots.qq_envelope(out / "qq_envelope.svg", env.theoretical, rs.residuals, env.lower,
                      env.median, env.upper)
    plots.residuals_vs_fitted(out / "residuals_vs_fitted.svg", fitted_mean, rs.residuals)
    plots.index_plots(out / "ci_index.svg", {b: infl[b].C for b in blocks}, "C_i",
                      {b: infl[b].threshold for b in blocks})
    plots.index_plots(out / "dmax_index.svg", {b: np.abs(infl[b].d_max) for b in blocks},
                      "|d_max|")
    for b in blocks:
        flagged = summary["influence"][b]["flagged"]
        print(f"{b}: C_i > 2*mean(C) = {infl[b].threshold:.4g} at {flagged}")
    print(f"envelope coverage: {summary['envelope']['coverage']:.3f} "
          f"({env.replicates} replicates, {env.failed} failed)")
    return EXIT_OK


def _parse_indices(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise CliError(f"--drop expects comma-separated integers, got {text!r}",
                       EXIT_CONFIG) from None


def refit_without(res: FitResult, cfg: RunConfig, data: Dataset, drop: list[int],
                  level: float = 0.95, alpha: float = 0.05) -> dict:
    """Refit after removing 1-based observation indices and compare inference."""
    n = data.n
    bad = [i for i in drop if not 1 <= i <= n]
    if bad:
        raise CliError(f"indices out of range 1..{n}: {bad}", EXIT_CONFIG)
    keep = np.ones(n, dtype=bool)
    keep[np.array(drop, dtype=int) - 1] = False
    if not keep.any():
        raise CliError("no observations left after removal", EXIT_DATA)
    reduced = data.subset(keep)
    if drop:
        new = fit(cfg.model, reduced, cfg.fit)
    else:
        new = res
    full_t, red_t = wald_inference(res, level), wald_inference(new, level)
    rows = []
    for k, name in enumerate(res.names):
        e0, e1 = full_t.estimate[k], red_t.estimate[k]
        s0, s1 = full_t.p_value[k] < alpha, red_t.p_value[k] < alpha
        rows.append({
            "parameter": name,
            "estimate_full": float(e0), "se_full": float(full_t.se[k]),
            "p_full": float(full_t.p_value[k]),
            "estimate_reduced": float(e1), "se_reduced": float(red_t.se[k]),
            "p_reduced": float(red_t.p_value[k]),
            "relative_change": float((e1 - e0) / abs(e0)) if e0 != 0 else float("nan"),
            "significant_full": bool(s0), "significant_reduced": bool(s1),
            "flip": bool(s0 != s1),
        })
    return {
        "dropped": drop,
        "n_full": res.n,
        "n_reduced": int(keep.sum()),
        "inferential_change": any(r["flip"] for r in rows),
        "parameters": rows,
    }


def cmd_refit_without(args) -> int:
    res, cfg, data = _load_fit(args.fit)
    drop = _parse_indices(args.drop)
    comp = refit_without(res, cfg, data, drop, cfg.diagnostics.level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "comparison.json", comp)
    keys = list(comp["parameters"][0]) if comp["parameters"] else []
    _write_csv(out / "comparison.csv", keys, ([r[k] for k in keys] for r in comp["parameters"]))
    lines = [f"removed observations: {drop or 'none'}",
             f"{'Parameter':<22}{'full':>10}{'reduced':>10}{'rel.chg':>10}  flip"]
    for r in comp["parameters"]:
        lines.append(f"{r['parameter']:<22}{r['estimate_full']:>10.3f}"
                     f"{r['estimate_reduced']:>10.3f}{r['relative_change']:>10.3f}  "
                     f"{'yes' if r['flip'] else 'no'}")
    lines.append(f"inferential change: {'yes' if comp['inferential_change'] else 'no'}")
    text = "\n".join(lines) + "\n"
    (out / "comparison.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zabs", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and write the inference report")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="residuals, envelopes and local influence")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--band", type=float)
    p.add_argument("--ridge", action="store_true", help="ridge the Hessian if near singular")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("refit-without", help="refit without some observations")
    p.add_argument("--fit", required=True)
    p.add_argument("--drop", required=True, help="comma-separated 1-based indices")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refit_without)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ModelSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, RankDeficientError, SingularHessianError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, QuadratureError) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
