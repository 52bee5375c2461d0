"""Command-line entry point: ``vebelief <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import default_estimators, load_config
from .dataset import read_csv
from .diagnostics import blinding_test, format_report, positivity_audit
from .estimands import REFERENCE_VE_MINUS1, estimand_report, ve_curve
from .estimators import EstimateResult, bootstrap, estimand_estimator, parse_mean_label
from .exceptions import (
    ConfigError,
    DataSchemaError,
    EstimationError,
    NotAssessableError,
    ParameterDomainError,
    PositivityError,
    UndefinedEstimandError,
)
from .rng import check_seed
from .simulate import run_mc, sample_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_POSITIVITY = 4
EXIT_ESTIMATION = 5

_EPILOG = """\
exit status:
  0  success
  2  configuration or usage error (bad JSON, unknown key, missing seed)
  3  data-schema error, or a quantity not assessable from the data
  4  positivity violation (an empty stratum required by a formula)
  5  estimation failure (zero denominator, unstable bootstrap)
"""

_KNOWN_ESTIMANDS = (
    "VE(-1)", "VE(0)", "VE(1)", "VE_t", "VE_m(0)", "VE_m(1)", "VE(-1,S=0)", "VE(-1,S=1)",
)


def fmt(x):
    """Full-precision number for machine-readable output."""
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return format(x, ".17g")


def _csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _json_text(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _mirror_path(out):
    out = Path(out)
    mirror = out.with_suffix(".json")
    return mirror if mirror != out else out.with_name(out.name + ".meta.json")


def _emit(args, csv_text, doc, human=None):
    """Write CSV to --out (plus a JSON mirror) or print to stdout."""
    if args.out:
        Path(args.out).write_text(csv_text)
        _mirror_path(args.out).write_text(_json_text(doc))
        if human:
            print(human)
    elif args.json:
        sys.stdout.write(_json_text(doc))
    else:
        sys.stdout.write(csv_text)


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        try:
            cfg.seed = check_seed(args.seed)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"--seed: {err}") from None
    if cfg.estimators:
        bad = [e for e in cfg.estimators
               if e not in _KNOWN_ESTIMANDS and parse_mean_label(e) is None]
        if bad:
            raise ConfigError(f"key 'estimators': unknown estimand(s) {bad}")
    return cfg


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_truth(args):
    cfg = _config(args)
    scm = cfg.build_scm()
    report = estimand_report(scm)
    rows = report.rows()
    doc = {
        "config": cfg.to_dict(),
        "scm_fingerprint": scm.fingerprint(),
        "quantities": {name: value for name, value in rows},
    }
    human = "\n".join(f"{name:<40} {value:.3f}" for name, value in rows)
    _emit(args, _csv(["quantity", "value"], rows), doc, human)
    return EXIT_OK


def cmd_simulate(args):
    cfg = _config(args)
    seed = cfg.require_seed()
    scm = cfg.build_scm()
    reps = range(cfg.replications)

    def one(r):
        return sample_dataset(scm, cfg.n0, cfg.n1, seed, r)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            datasets = list(pool.map(one, reps))
    else:
        datasets = [one(r) for r in reps]

    doc = {
        "config": cfg.to_dict(),
        "scm_fingerprint": scm.fingerprint(),
        "rows_per_replicate": cfg.n0 + cfg.n1,
    }
    if cfg.replications == 1:
        text = datasets[0].to_csv()
    else:
        header, *_ = datasets[0].to_csv(replicate_column=0).split("\n", 1)
        text = header + "\n" + "".join(
            ds.to_csv(replicate_column=r).split("\n", 1)[1] for r, ds in enumerate(datasets)
        )
    if args.out and not cfg.stacked and cfg.replications > 1:
        out = Path(args.out)
        files = []
        for r, ds in enumerate(datasets):
            path = out.with_name(f"{out.stem}_rep{r}{out.suffix}")
            ds.to_csv(path)
            files.append(path.name)
        doc["files"] = files
        _mirror_path(out).write_text(_json_text(doc))
        return EXIT_OK
    _emit(args, text, doc)
    return EXIT_OK


def cmd_estimate(args):
    cfg = _config(args)
    ds = read_csv(args.dataset)
    labels = default_estimators(cfg, ds.has_s)
    n_boot = cfg.bootstrap.n_boot
    seed = cfg.require_seed() if n_boot > 0 else None
    results = []
    for label in labels:
        fn = estimand_estimator(label, method=cfg.method, adjust_for_s=cfg.adjust_for_s)
        if n_boot > 0:
            res = bootstrap(ds, fn, n_boot=n_boot, seed=seed, alpha=cfg.bootstrap.alpha,
                            label=label, threads=args.threads)
        else:
            res = EstimateResult(label, float(fn(ds)))
        results.append(res)
    header = ["estimand", "point", "se", "ci_lo", "ci_hi", "n_boot", "n_failed"]
    rows = [
        [r.estimand, r.point, r.boot_se,
         None if r.ci is None else r.ci[0], None if r.ci is None else r.ci[1],
         str(r.n_boot), str(r.n_failed_boot)]
        for r in results
    ]
    doc = {
        "config": cfg.to_dict(),
        "dataset": str(args.dataset),
        "n0": ds.n0,
        "n1": ds.n1,
        "estimates": [dict(zip(header, [r[0], r[1], r[2], r[3], r[4], int(r[5]), int(r[6])]))
                      for r in rows],
    }
    human = "\n".join(
        f"{r.estimand:<12} {r.point:7.3f}"
        + ("" if r.ci is None else f"  ({r.ci[0]:.3f}, {r.ci[1]:.3f})")
        for r in results
    )
    _emit(args, _csv(header, rows), doc, human)
    return EXIT_OK


def cmd_mc(args):
    cfg = _config(args)
    seed = cfg.require_seed()
    scm = cfg.build_scm()
    labels = default_estimators(cfg, scm.has_s)
    summary = run_mc(scm, cfg.n0, cfg.n1, cfg.replications, labels, seed,
                     method=cfg.method, adjust_for_s=cfg.adjust_for_s, threads=args.threads)
    header = ["n0", "n1", "estimand", "truth", "mean", "sd", "bias", "n_ok", "n_failed"]
    rows = [
        [str(cfg.n0), str(cfg.n1), e.label, e.truth, e.mean, e.sd, e.bias, str(e.n_ok), str(e.n_failed)]
        for e in summary.entries
    ]
    doc = {
        "config": cfg.to_dict(),
        "scm_fingerprint": scm.fingerprint(),
        "summary": [
            {"estimand": e.label, "truth": e.truth, "mean": e.mean, "sd": e.sd,
             "bias": e.bias, "n_ok": e.n_ok, "n_failed": e.n_failed}
            for e in summary.entries
        ],
    }
    width = max(len(e.label) for e in summary.entries) + 2

    def cell(v):
        return f"{v:>{width}.3f}" if v is not None else " " * (width - 1) + "-"

    human = "\n".join([
        " " * 12 + "".join(f"{e.label:>{width}}" for e in summary.entries),
        f"{'True value':<12}" + "".join(cell(e.truth) for e in summary.entries),
        f"{'n = ' + str(cfg.n0 + cfg.n1):<12}" + "".join(cell(e.mean) for e in summary.entries),
    ])
    _emit(args, _csv(header, rows), doc, human)
    return EXIT_OK


def cmd_curve(args):
    cfg = _config(args)
    grid = np.linspace(cfg.grid.rr_b_min, cfg.grid.rr_b_max, cfg.grid.n_points)
    try:
        rows = ve_curve([float(v) for v in cfg.grid.ve_t], grid)
    except ParameterDomainError as err:
        raise ConfigError(f"key 'grid': {err}") from None
    header = ["rr_b", "ve_t", "ve_minus1", "ve_0", "ve_1", "ve_total",
              "ve_minus1_enumerated", "abs_diff"]
    doc = {
        "config": cfg.to_dict(),
        "max_abs_diff": max(r["abs_diff"] for r in rows),
        "reference_lines": dict(REFERENCE_VE_MINUS1),
    }
    _emit(args, _csv(header, [[r[k] for k in header] for r in rows]), doc)
    return EXIT_OK


def cmd_diagnose(args):
    cfg = _config(args)
    ds = read_csv(args.dataset)
    test = blinding_test(ds, alpha=cfg.alpha, exact=cfg.exact)
    audit = positivity_audit(ds)
    doc = {
        "config": cfg.to_dict(),
        "blinding": {
            "p1": test.p1, "p0": test.p0, "difference": test.difference, "z": test.z,
            "p_value": test.p_value, "alpha": test.alpha, "reject": test.reject,
            "method": test.method,
        },
        "positivity": {
            "lab": {",".join(map(str, k)): v for k, v in audit.lab.items()},
            "lasb": None if audit.lasb is None
            else {",".join(map(str, k)): v for k, v in audit.lasb.items()},
            "s_assessable": audit.s_assessable,
            "violations": [{"cell": c, "requirement": req} for c, req in audit.violations],
        },
    }
    text = _json_text(doc) if args.json else format_report(test, audit) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output path; a .json mirror is written alongside")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--json", action="store_true", help="print JSON instead of CSV")

    parser = argparse.ArgumentParser(
        prog="vebelief",
        description="Vaccine efficacy under broken blinding: truths, simulation, estimation.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("truth", cmd_truth, "exact estimands of the configured model", False),
        ("simulate", cmd_simulate, "sample blinded trial datasets", False),
        ("estimate", cmd_estimate, "estimate VE contrasts from a dataset CSV", True),
        ("mc", cmd_mc, "Monte Carlo study of the estimators", False),
        ("curve", cmd_curve, "VE(-1) against VE_t across RR_B", False),
        ("diagnose", cmd_diagnose, "blinding test and positivity audit of a dataset", True),
    ]
    for name, fn, help_text, takes_dataset in specs:
        p = sub.add_parser(name, parents=[common], help=help_text, epilog=_EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        if takes_dataset:
            p.add_argument("dataset", help="dataset CSV (id,a[,s],b,y[,l])")
        p.set_defaults(func=fn)
    return parser


def _classify(exc):
    """Map an exception to (exit code, label, message); code None re-raises."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG, "config error", str(exc)
    if isinstance(exc, (DataSchemaError, NotAssessableError)):
        return EXIT_DATA, "data error", str(exc)
    if isinstance(exc, OSError):
        return EXIT_DATA, "data error", f"{exc.filename}: {exc.strerror}"
    if isinstance(exc, PositivityError):
        return EXIT_POSITIVITY, "positivity error", str(exc)
    if isinstance(exc, (EstimationError, UndefinedEstimandError)):
        return EXIT_ESTIMATION, "estimation error", str(exc)
    return None, None, None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except Exception as exc:
        code, kind, message = _classify(exc)
        if code is None:
            raise
    print(f"vebelief: {kind}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
