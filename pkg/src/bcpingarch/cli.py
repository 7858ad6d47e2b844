"""Command-line interface.

Subcommands ``simulate``, ``fit``, ``se``, ``test``, ``forecast`` and
``montecarlo`` write JSON documents (and CSV tables) into ``--out``.
Exit status is 0 on success, 2 for usage or data errors and 3 for
numerical failures.
"""
import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import __version__, bcp_dist, process
from .estimation import FitConfig, FitResult, filter_lambda, fit, result_at
from .exceptions import (BcpError, ConvergenceError, DataError, DomainError,
                         NonStationaryError, NumericalError, SamplingError)
from .forecast import conditional_one_step, forecast_pmf, one_step, rolling_eval
from .inference import (competitor_phi_bound, conditional_correlation_path, lrt_phi,
                        model_select, score_test_phi, se_asymptotic, se_bootstrap)
from .montecarlo import point_study, power_study, se_study
from .process import ModelParams, SeriesPair, param_names

logger = logging.getLogger("bcpingarch")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


class UsageError(BcpError):
    pass


# ---------------------------------------------------------------- ingest

@dataclass(frozen=True)
class Dataset:
    """Ingested series with its component assignment.

    ``columns`` names the input columns in component order and
    ``assignment`` is ``"keep"`` or ``"swap"`` relative to the file.
    ``dispersion`` is per input column (file order).
    """

    series: SeriesPair
    labels: Optional[List[str]]
    source: str
    columns: tuple
    assignment: str
    dispersion: tuple


def dispersion_index(x) -> float:
    """Sample variance over sample mean; 0 for a constant column."""
    x = np.asarray(x, dtype=np.float64)
    var = x.var(ddof=1) if x.size > 1 else 0.0
    mean = x.mean()
    if var == 0.0:
        return 0.0
    return float(var / mean)


def _parse_count(cell, row, col):
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        try:
            f = float(text)
        except ValueError:
            raise DataError(f"row {row}, column {col}: {cell!r} is not an integer") from None
        if not math.isfinite(f) or f != int(f):
            raise DataError(f"row {row}, column {col}: {cell!r} is not an integer") from None
        value = int(f)
    if value < 0:
        raise DataError(f"row {row}, column {col}: negative count {value}")
    return value


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def ingest(path: str, delimiter: str = ",", assign: str = "auto") -> Dataset:
    """Read a two-column count CSV (optional header and leading date column).

    With ``assign="auto"`` the column with the larger dispersion index
    becomes component 2 (ties keep file order); ``"keep"`` and ``"swap"``
    force the assignment.
    """
    if assign not in ("auto", "keep", "swap"):
        raise UsageError(f"unknown assignment {assign!r}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty dataset")
    width = len(rows[0])
    if width not in (2, 3):
        raise DataError(f"{path}: expected 2 count columns plus an optional date column, "
                        f"found {width} columns")
    header = None
    if not all(_is_number(c) for c in rows[0][width - 2:]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: empty dataset")
    labels = [] if width == 3 else None
    counts = []
    for i, r in enumerate(rows, start=2 if header else 1):
        if len(r) != width:
            raise DataError(f"{path}: row {i} has {len(r)} cells, expected {width} "
                            "(unequal column lengths)")
        if labels is not None:
            labels.append(r[0].strip())
        counts.append([_parse_count(r[width - 2 + j], i, width - 1 + j) for j in range(2)])
    values = np.array(counts, dtype=np.int64)
    names = tuple(header[width - 2:]) if header else ("y1", "y2")
    disp = (dispersion_index(values[:, 0]), dispersion_index(values[:, 1]))
    if assign == "auto":
        assign_used = "swap" if disp[0] > disp[1] else "keep"
        logger.info("dispersion %s=%.4g, %s=%.4g; %s assigned to component 2",
                    names[0], disp[0], names[1], disp[1],
                    names[0] if assign_used == "swap" else names[1])
    else:
        assign_used = assign
        logger.info("component assignment forced to %s", assign)
    if assign_used == "swap":
        values = values[:, ::-1]
        names = names[::-1]
    if values.shape[0] < 2:
        raise DataError(f"{path}: need at least two observations")
    series = SeriesPair.from_array(values, labels)
    return Dataset(series, labels, str(path), names, assign_used, disp)


# ---------------------------------------------------------------- output helpers

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, doc):
    doc = dict(doc)
    doc["schema_version"] = SCHEMA_VERSION
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def fit_document(res: FitResult) -> dict:
    return {
        "b_diagonal": res.config.b_diagonal,
        "phi_fixed": res.config.phi_fixed,
        "estimates": res.estimates,
        "params": res.theta_hat.as_dict(),
        "loglik": res.loglik,
        "aic": res.aic,
        "bic": res.bic,
        "k": res.k,
        "n_used": res.n_used,
        "converged": res.converged,
        "gradient_norm": res.gradient_norm,
        "stationarity_margin": res.stationarity_margin,
        "lambda_init": list(res.lambda_init),
    }


def params_from_document(doc: dict) -> ModelParams:
    """Inverse of the ``params`` block of :func:`fit_document`."""
    if "fits" in doc:
        doc = doc["fits"][0]
    b_diag = bool(doc["b_diagonal"])
    names = param_names(b_diag)
    return ModelParams.from_vector([doc["params"][k] for k in names], b_diagonal=b_diag)


def dataset_document(ds: Dataset) -> dict:
    return {"source": ds.source, "n": len(ds.series), "components": list(ds.columns),
            "assignment": ds.assignment, "dispersion_by_input_column": list(ds.dispersion)}


# ---------------------------------------------------------------- argument parsing

def _parse_params(text: str, phi: Optional[float]) -> ModelParams:
    if os.path.exists(text):
        with open(text) as fh:
            p = params_from_document(json.load(fh))
    else:
        try:
            vals = [float(v) for v in text.split(",")]
        except ValueError:
            raise UsageError(f"--params: cannot parse {text!r}") from None
        if len(vals) == 9:
            p = ModelParams.from_vector(vals)
        elif len(vals) == 7:
            p = ModelParams.from_vector(vals, b_diagonal=True)
        else:
            raise UsageError("--params needs 9 values (full B) or 7 (diagonal B) ordered "
                             "as " + ",".join(param_names(False)))
    return p if phi is None else p.replace(phi=phi)


def _model(args) -> ModelParams:
    if args.params:
        return _parse_params(args.params, args.phi)
    factory = process.PRESETS[args.scenario]
    p = factory()
    return p if args.phi is None else p.replace(phi=args.phi)


def _fit_config(args, b_diagonal=None) -> FitConfig:
    return FitConfig(b_diagonal=args.b_diagonal if b_diagonal is None else b_diagonal,
                     n_starts=args.n_starts)


def _need_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} requires --seed")


def _load(args) -> Dataset:
    if not args.input:
        raise UsageError(f"{args.command} requires --input")
    return ingest(args.input, args.delimiter, args.assign)


def _add_common(p, data=False, model=False):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="format of the main result table")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=process.DEFAULT_BURN_IN)
    p.add_argument("-v", "--verbose", action="store_true")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--b-diagonal", dest="b_diagonal", action="store_true", default=False)
    g.add_argument("--b-full", dest="b_diagonal", action="store_false")
    p.add_argument("--n-starts", type=int, default=3)
    if data:
        p.add_argument("--input", help="CSV with two count columns")
        p.add_argument("--delimiter", default=",")
        p.add_argument("--assign", choices=("auto", "keep", "swap"), default="auto")
    if model:
        p.add_argument("--scenario", choices=sorted(process.PRESETS), default="a")
        p.add_argument("--params", help="comma-separated parameter vector or fit JSON path")
        p.add_argument("--phi", type=float, default=None, help="override phi")
        p.add_argument("--n", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcpingarch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a series")
    _add_common(p, model=True)

    p = sub.add_parser("fit", help="fit the model to a CSV series")
    _add_common(p, data=True)
    p.add_argument("--both", action="store_true", help="fit diagonal and full B and compare")

    p = sub.add_parser("se", help="standard errors")
    _add_common(p, data=True)
    p.add_argument("--se-method", choices=("outer", "hessian", "bootstrap"), default="hessian")
    p.add_argument("--bootstrap-B", type=int, default=500)

    p = sub.add_parser("test", help="tests of phi = 0")
    _add_common(p, data=True)

    p = sub.add_parser("forecast", help="one-step and rolling forecasts")
    _add_common(p, data=True)
    p.add_argument("--n0", type=int, default=None, help="start of rolling evaluation")
    p.add_argument("--conditional", action="store_true",
                   help="also predict component 2 given component 1")
    p.add_argument("--y1-next", type=int, default=None,
                   help="observed next value of component 1 for a conditional forecast")
    p.add_argument("--fit", dest="fit_path", default=None,
                   help="use parameters from a fit JSON for the one-step forecast")

    p = sub.add_parser("montecarlo", help="simulation studies")
    _add_common(p, model=True)
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--study", choices=("point", "se", "power"), default="point")
    p.add_argument("--se-method", choices=("outer", "hessian", "bootstrap"), action="append")
    p.add_argument("--bootstrap-B", type=int, default=500)
    p.add_argument("--phi-grid", default="-1:1:0.1",
                   help="power grid as start:stop:step or comma list")
    return parser


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    _need_seed(args)
    p = _model(args)
    s, lam = process.simulate(p, args.n, burn_in=args.burn_in, seed=args.seed)
    check = process.stationarity_check(p)
    write_csv(os.path.join(args.out, "series.csv"), ["t", "y1", "y2"],
              [(t, int(a), int(b)) for t, (a, b) in enumerate(s.values)])
    write_csv(os.path.join(args.out, "lambda.csv"), ["t", "lambda1", "lambda2"],
              [(t, float(a), float(b)) for t, (a, b) in enumerate(lam.values)])
    write_json(os.path.join(args.out, "manifest.json"), {
        "command": "simulate", "b_diagonal": p.b_diagonal, "params": p.as_dict(),
        "seed": args.seed, "n": args.n, "burn_in": args.burn_in,
        "stationarity_margin": check.margin, "stationary": check.satisfied,
    })


def _corr_rows(res, ds):
    corr = conditional_correlation_path(res, ds.series)
    lam = filter_lambda(res.theta_hat, ds.series, res.lambda_init).values
    labels = ds.labels or [""] * len(ds.series)
    return [(t, labels[t], float(lam[t, 0]), float(lam[t, 1]), float(corr[t]))
            for t in range(len(ds.series))]


def cmd_fit(args):
    ds = _load(args)
    variants = [True, False] if args.both else [args.b_diagonal]
    fits = [fit(ds.series, _fit_config(args, d)) for d in variants]
    doc = {"command": "fit", "dataset": dataset_document(ds),
           "fits": [fit_document(f) for f in fits]}
    if len(fits) > 1:
        r = model_select(fits)
        doc["selection"] = {"labels": ["diagonal_B" if d else "full_B" for d in variants],
                            "aic_order": r.aic_order, "bic_order": r.bic_order}
    write_json(os.path.join(args.out, "fit.json"), doc)
    if args.format == "csv":
        rows = []
        for d, f in zip(variants, fits):
            for k, v in f.estimates.items():
                rows.append(("diagonal" if d else "full", k, v))
        write_csv(os.path.join(args.out, "fit.csv"), ["b", "parameter", "estimate"], rows)
    write_csv(os.path.join(args.out, "correlation.csv"),
              ["t", "label", "lambda1", "lambda2", "correlation"], _corr_rows(fits[0], ds))


def cmd_se(args):
    ds = _load(args)
    res = fit(ds.series, _fit_config(args))
    if args.se_method == "bootstrap":
        _need_seed(args)
        se = se_bootstrap(res, ds.series, B=args.bootstrap_B, seed=args.seed,
                          burn_in=args.burn_in)
    else:
        se = se_asymptotic(res, ds.series, args.se_method)
    doc = {"command": "se", "dataset": dataset_document(ds), "fit": fit_document(res),
           "method": se.method, "se": se.as_dict(),
           "bootstrap": {"B": args.bootstrap_B, "kept": se.n_replicas, "failed": se.n_failed}
           if se.method == "bootstrap" else None}
    write_json(os.path.join(args.out, "se.json"), doc)
    if args.format == "csv":
        write_csv(os.path.join(args.out, "se.csv"), ["parameter", "estimate", "se"],
                  [(k, res.estimates[k], v) for k, v in se.as_dict().items()])


def cmd_test(args):
    ds = _load(args)
    cfg = _fit_config(args)
    lrt = lrt_phi(ds.series, cfg)
    doc = {"command": "test", "dataset": dataset_document(ds),
           "lrt": {"statistic": lrt.statistic, "p_value": lrt.p_value, "df": 1},
           "null_fit": fit_document(lrt.null_fit), "alt_fit": fit_document(lrt.alt_fit)}
    try:
        sc = score_test_phi(ds.series, cfg, null_fit=lrt.null_fit)
        doc["score"] = {"statistic": sc.statistic, "p_value": sc.p_value, "df": 1}
    except NumericalError as exc:
        doc["score"] = {"error": str(exc)}
    bound = competitor_phi_bound(lrt.alt_fit, ds.series)
    doc["competitor_bound"] = {"phi_max": bound.phi_max, "max_correlation": bound.max_corr}
    doc["max_correlation_fitted"] = float(np.max(np.abs(
        conditional_correlation_path(lrt.alt_fit, ds.series))))
    write_json(os.path.join(args.out, "test.json"), doc)
    if args.format == "csv":
        rows = [("lrt", lrt.statistic, lrt.p_value)]
        if "statistic" in doc["score"]:
            rows.append(("score", doc["score"]["statistic"], doc["score"]["p_value"]))
        write_csv(os.path.join(args.out, "test.csv"), ["test", "statistic", "p_value"], rows)


def cmd_forecast(args):
    ds = _load(args)
    s = ds.series
    if args.fit_path:
        with open(args.fit_path) as fh:
            fdoc = json.load(fh)
        p = params_from_document(fdoc)
        entry = fdoc["fits"][0] if "fits" in fdoc else fdoc
        cfg = FitConfig(b_diagonal=p.b_diagonal, lambda_init=tuple(entry["lambda_init"]))
        res = result_at(p, s, cfg)
    else:
        res = fit(s, _fit_config(args))
    rec = one_step(res, s)
    pmf = forecast_pmf(res, s)
    doc = {"command": "forecast", "dataset": dataset_document(ds), "fit": fit_document(res),
           "next": rec.as_dict(),
           "pmf_shape": list(pmf.shape), "pmf_mass": float(pmf.sum())}
    if args.y1_next is not None:
        doc["next"]["y1_next"] = args.y1_next
        doc["next"]["point_conditional"] = conditional_one_step(res, s, args.y1_next)
    if args.n0 is not None:
        rr = rolling_eval(s, args.n0, _fit_config(args), conditional_on_first=args.conditional)
        doc["rolling"] = {
            "n0": args.n0, "count": len(rr.records),
            "rmse": rr.rmse, "mae": rr.mae,
            "rmse_conditional": rr.rmse_conditional, "mae_conditional": rr.mae_conditional,
            "records": [r.as_dict() for r in rr.records],
        }
        header = ["t", "label", "actual1", "actual2", "pred1", "pred2", "rmsfe1", "rmsfe2"]
        rows = []
        for i, r in enumerate(rr.records):
            label = ds.labels[r.t] if ds.labels else ""
            row = [r.t, label, r.actual[0], r.actual[1], r.point_joint[0], r.point_joint[1],
                   float(rr.rmsfe[i, 0]), float(rr.rmsfe[i, 1])]
            if args.conditional:
                row += [r.point_conditional, float(rr.rmsfe_conditional[i])]
            rows.append(row)
        if args.conditional:
            header += ["pred2_conditional", "rmsfe2_conditional"]
        write_csv(os.path.join(args.out, "rolling.csv"), header, rows)
    write_json(os.path.join(args.out, "forecast.json"), doc)
    grid = [(i, j, float(pmf[i, j])) for i in range(pmf.shape[0]) for j in range(pmf.shape[1])
            if pmf[i, j] > 1e-12]
    write_csv(os.path.join(args.out, "forecast_pmf.csv"), ["y1", "y2", "probability"], grid)


def _phi_grid(text: str) -> List[float]:
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [float(v) for v in text.split(",")]


def cmd_montecarlo(args):
    _need_seed(args)
    p = _model(args)
    cfg = _fit_config(args)
    doc = {"command": "montecarlo", "study": args.study, "params": p.as_dict(),
           "b_diagonal_true": p.b_diagonal, "b_diagonal_fit": cfg.b_diagonal,
           "n": args.n, "replicas": args.replicas, "seed": args.seed, "burn_in": args.burn_in}
    if args.study == "point":
        st = point_study(p, args.n, args.replicas, seed=args.seed, cfg=cfg, burn_in=args.burn_in)
        sm = st.summary
        doc["summary"] = [{"parameter": n, "true": float(t), "mean": m, "sd": s, "mse": e}
                          for (n, m, s, e), t in zip(sm.rows(), sm.true)]
        doc["dropped"] = sm.n_failed
        doc["not_converged"] = int((~st.converged).sum())
        doc["estimates"] = st.estimates
        write_csv(os.path.join(args.out, "summary.csv"), ["parameter", "mean", "sd", "mse"],
                  list(sm.rows()))
    elif args.study == "se":
        methods = args.se_method or ["outer", "hessian"]
        st = se_study(p, args.n, args.replicas, seed=args.seed, cfg=cfg, methods=methods,
                      B=args.bootstrap_B, burn_in=args.burn_in)
        doc["mc_sd"] = dict(zip(st.names, st.mc_sd.tolist()))
        doc["mean_se"] = {m: dict(zip(st.names, st.mean_se(m).tolist())) for m in methods}
        rows = [(name, float(st.mc_sd[i])) + tuple(float(st.mean_se(m)[i]) for m in methods)
                for i, name in enumerate(st.names)]
        write_csv(os.path.join(args.out, "se_summary.csv"),
                  ["parameter", "mc_sd"] + [f"se_{m}" for m in methods], rows)
    else:
        phis = _phi_grid(args.phi_grid)
        st = power_study(p, phis, args.n, args.replicas, seed=args.seed, cfg=cfg,
                         burn_in=args.burn_in)
        doc["phi"] = phis
        doc["rejection_rate"] = st.rates
        doc["replicas_ok"] = st.n_ok
        write_csv(os.path.join(args.out, "power.csv"), ["phi", "lrt", "score"],
                  [(phi, float(st.rates["lrt"][i]), float(st.rates["score"][i]))
                   for i, phi in enumerate(phis)])
    write_json(os.path.join(args.out, "montecarlo.json"), doc)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "se": cmd_se, "test": cmd_test,
            "forecast": cmd_forecast, "montecarlo": cmd_montecarlo}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](args)
    except (UsageError, DataError, DomainError) as exc:
        print(f"bcpingarch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bcpingarch {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, NumericalError, SamplingError, NonStationaryError) as exc:
        print(f"bcpingarch {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
