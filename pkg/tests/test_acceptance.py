"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are collected into the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import contextlib
import csv
import io
import json
import time
from pathlib import Path

import numpy as np

from vebelief import (
    IPWMean,
    OutcomeRegressionMean,
    PluginMean,
    blinding_test,
    build_dgm1,
    build_dgm2,
    decompose_total,
    identification_formula,
    potential_outcome_mean,
    sample_dataset,
)
from vebelief.cli import main as _cli_main
from vebelief.scm import random_confounded_belief_scm, random_scm, random_side_effect_scm

RESULTS = []

MC_SEED = 20240101          # fixed before any run; never searched
PUBLISHED_MEANS = {
    # (a, m): published value, control arm is the 0.170 column
    (0, -1): 0.170, (1, -1): 0.090,
    (0, 0): 0.140, (1, 0): 0.084,
    (0, 1): 0.244, (1, 1): 0.098,
}
PUBLISHED_VE = {-1: 0.470, 0: 0.400, 1: 0.600}
PUBLISHED_MC_MEANS = {
    (317, 479): ((0.463, 0.380, 0.575, 0.273, 0.446, 0.526), 0.015),
    (3170, 4790): ((0.470, 0.398, 0.597, 0.294, 0.456, 0.555), 0.010),
}
MC_LABELS = ("VE(-1)", "VE(0)", "VE(1)", "VE_t", "VE(-1,S=0)", "VE(-1,S=1)")
# the published table rounds to three decimals; an exact half-unit gap sits on
# the boundary, so allow for the binary representation of the decimals only
ROUNDING_TOL = 5e-4 + 1e-12


def report(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def main(argv):
    # the human-readable tables printed next to --out files are not needed here
    with contextlib.redirect_stdout(io.StringIO()):
        return _cli_main(argv)


def _config(tmp, doc):
    path = Path(tmp) / f"cfg_{len(list(Path(tmp).glob('cfg_*')))}.json"
    path.write_text(json.dumps(doc))
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------

def check_exact_values(tmp):
    out = Path(tmp) / "truth.csv"
    start = time.perf_counter()
    code = main(["truth", "--out", str(out)])
    elapsed = time.perf_counter() - start
    values = {r["quantity"]: float(r["value"]) for r in _rows(out)}
    oks = []
    for (a, m), published in PUBLISHED_MEANS.items():
        got = values[f"E(Y^(a={a},m={m}))"]
        ok = abs(got - published) <= ROUNDING_TOL
        oks.append(report("1", ok, f"E(Y^({a},{m})) = {got:.6f} vs {published:.3f} "
                                   f"(|diff| {abs(got - published):.2e}, tol 5e-4)"))
    for m, published in PUBLISHED_VE.items():
        got = values[f"VE({m})"]
        ok = abs(got - published) <= ROUNDING_TOL
        oks.append(report("1", ok, f"VE({m}) = {got:.6f} vs {published:.3f} "
                                   f"(|diff| {abs(got - published):.2e}, tol 5e-4)"))
    ok = abs(values["VE_t"] - 0.3) <= 1e-12
    oks.append(report("1", ok, f"VE_t = {values['VE_t']!r} vs 0.3 (tol 1e-12)"))
    oks.append(report("1", code == 0 and elapsed < 1.0, f"truth runtime {elapsed:.3f} s (< 1 s)"))
    return all(oks)


def check_monte_carlo(tmp):
    oks = []
    for (n0, n1), (expected, tol) in PUBLISHED_MC_MEANS.items():
        cfg = _config(tmp, {"n0": n0, "n1": n1, "replications": 1000, "seed": MC_SEED})
        out = Path(tmp) / f"mc_{n0 + n1}.csv"
        start = time.perf_counter()
        code = main(["mc", "--config", cfg, "--out", str(out)])
        elapsed = time.perf_counter() - start
        rows = {r["estimand"]: r for r in _rows(out)}
        for label, target in zip(MC_LABELS, expected):
            mean = float(rows[label]["mean"])
            ok = code == 0 and abs(mean - target) <= tol
            oks.append(report("2", ok, f"n={n0 + n1} {label} mean {mean:.4f} vs {target:.3f} "
                                       f"(|diff| {abs(mean - target):.4f}, tol {tol})"))
        oks.append(report("2", elapsed < 300, f"n={n0 + n1} mc runtime {elapsed:.1f} s (< 300 s)"))
    return all(oks)


def check_curve(tmp):
    cfg = _config(tmp, {"grid": {"n_points": 101, "ve_t": [0.3, 0.5, 0.7, 0.9]}})
    out = Path(tmp) / "curve.csv"
    code = main(["curve", "--config", cfg, "--out", str(out)])
    rows = _rows(out)
    worst = max(float(r["abs_diff"]) for r in rows)
    ok1 = report("3", code == 0 and len(rows) == 404 and worst < 1e-12,
                 f"{len(rows)} grid points, max |closed form - enumeration| = {worst:.2e} (< 1e-12)")
    exact = []
    for r in rows:
        if float(r["rr_b"]) == 1.0:
            target = 0.5 * (1.0 + float(r["ve_t"]))
            exact.append(float(r["ve_minus1"]) == float(r["ve_0"]) == float(r["ve_1"]) == target)
    ok2 = report("3", len(exact) == 4 and all(exact),
                 f"rr_b=1: VE(-1)=VE(0)=VE(1)=0.5(1+ve_t) exactly on {sum(exact)}/4 curves")
    return ok1 and ok2


def check_identification():
    worst = 0.0
    for k in range(100):
        scm = random_side_effect_scm(np.random.default_rng([4, k]))
        for a in (0, 1):
            for m in (0, 1):
                gap = abs(identification_formula(scm, a, m, adjust_for_s=True)
                          - potential_outcome_mean(scm, a, m))
                worst = max(worst, gap)
    ok1 = report("4", worst <= 1e-12,
                 f"S-adjusted formula on 100 side-effect models: max |formula - truth| = {worst:.2e}")

    min_bias, worst_est, z_max, n_over = np.inf, 0.0, 0.0, 0
    for k in range(100):
        scm = random_confounded_belief_scm(np.random.default_rng([7, k]))
        ds = sample_dataset(scm, 500_000, 500_000, master_seed=MC_SEED, replicate=k)
        bias = 0.0
        for a in (0, 1):
            for m in (0, 1):
                formula = identification_formula(scm, a, m)
                bias = max(bias, abs(formula - potential_outcome_mean(scm, a, m)))
                est = PluginMean(a=a, m=m, adjust_for_s=False).fit(ds).estimate_
                n_cell = int(np.sum((ds.a == a) & (ds.b == m)))
                se = np.sqrt(formula * (1 - formula) / n_cell)
                worst_est = max(worst_est, abs(est - formula))
                z_max = max(z_max, abs(est - formula) / se)
                n_over += abs(est - formula) > 0.002
        min_bias = min(min_bias, bias)
    ok2 = report("4", min_bias > 0,
                 f"unadjusted formula on 100 confounded models: min over models of "
                 f"max |formula - truth| = {min_bias:.4f} (nonzero)")
    ok3 = report("4", worst_est <= 0.002,
                 f"n=1e6 estimator vs formula: max |diff| = {worst_est:.4f} (tol 0.002), "
                 f"{n_over}/400 means beyond tol, max |z| = {z_max:.2f}")
    return ok1 and ok2 and ok3


def check_decompositions():
    worst = {}
    for k in range(1000):
        scm = random_scm(np.random.default_rng([5, k]))
        for scale in ("ve", "additive"):
            for pivot in (0, 1):
                r = abs(decompose_total(scm, scale, pivot).residual)
                worst[scale, pivot] = max(worst.get((scale, pivot), 0.0), r)
    oks = [report("5", v <= 1e-12, f"{scale} scale, pivot arm {pivot}: max residual {v:.2e} "
                                   "over 1000 models (tol 1e-12)")
           for (scale, pivot), v in sorted(worst.items())]
    return all(oks)


def agreement_corpus():
    corpus = [sample_dataset(build_dgm2(), 317, 479, master_seed=MC_SEED, replicate=r)
              for r in range(10)]
    for k in range(10):
        scm = random_scm(np.random.default_rng([6, k]), n_l=1 + k % 3)
        corpus.append(sample_dataset(scm, 2000, 2000, master_seed=MC_SEED, replicate=k))
    return corpus


def check_agreement():
    worst, n_checks = 0.0, 0
    for ds in agreement_corpus():
        for adjust in (False, True):
            for a in (0, 1):
                for m in (0, 1):
                    ref = PluginMean(a=a, m=m, adjust_for_s=adjust).fit(ds).estimate_
                    for est in (IPWMean(a=a, m=m, adjust_for_s=adjust),
                                OutcomeRegressionMean(a=a, m=m, adjust_for_s=adjust)):
                        worst = max(worst, abs(est.fit(ds).estimate_ - ref))
                        n_checks += 1
    return report("6", worst <= 1e-10,
                  f"plug-in vs saturated IPW and OR on 20 datasets ({n_checks} comparisons): "
                  f"max |diff| = {worst:.2e} (tol 1e-10)")


def check_blinding_calibration():
    null = build_dgm1(1.0, 0.3)
    rejections = sum(
        blinding_test(sample_dataset(null, 317, 479, master_seed=MC_SEED, replicate=r)).reject
        for r in range(2000)
    )
    size = rejections / 2000
    ok1 = report("7", 0.035 <= size <= 0.065, f"size under rr_b=1: {size:.4f} (in [0.035, 0.065])")
    alt = build_dgm2()
    rejections = sum(
        blinding_test(sample_dataset(alt, 317, 479, master_seed=MC_SEED + 1, replicate=r)).reject
        for r in range(2000)
    )
    power = rejections / 2000
    ok2 = report("7", power > 0.99, f"power under the side-effect model: {power:.4f} (> 0.99)")
    return ok1 and ok2


def check_determinism(tmp):
    tmp = Path(tmp)
    data = tmp / "det_data.csv"
    main(["simulate", "--seed", "3", "--out", str(data)])
    cfg = _config(tmp, {"replications": 50, "seed": 17, "bootstrap": {"n_boot": 200}})
    commands = {
        "truth": ["truth"],
        "simulate": ["simulate"],
        "estimate": ["estimate", str(data)],
        "mc": ["mc"],
        "curve": ["curve"],
        "diagnose": ["diagnose", str(data), "--json"],
    }
    oks = []
    for name, argv in commands.items():
        blobs = []
        for k, threads in enumerate(("1", "1", "4")):
            out = tmp / f"det_{name}_{k}.csv"
            main(argv + ["--config", cfg, "--threads", threads, "--out", str(out)])
            mirror = out.with_suffix(".json")
            blobs.append(out.read_bytes() + (mirror.read_bytes() if mirror.exists() else b""))
        oks.append(report("8", blobs[0] == blobs[1] == blobs[2],
                          f"{name}: rerun and --threads 4 byte-identical"))
    return all(oks)


# --------------------------------------------------------------------------

def test_criterion_1_exact_values(tmp_path):
    assert check_exact_values(tmp_path)


def test_criterion_2_monte_carlo(tmp_path):
    assert check_monte_carlo(tmp_path)


def test_criterion_3_curve(tmp_path):
    assert check_curve(tmp_path)


def test_criterion_4_identification():
    assert check_identification()


def test_criterion_5_decompositions():
    assert check_decompositions()


def test_criterion_6_estimator_agreement():
    assert check_agreement()


def test_criterion_7_blinding_calibration():
    assert check_blinding_calibration()


def test_criterion_8_determinism(tmp_path):
    assert check_determinism(tmp_path)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        checks = [lambda: check_exact_values(tmp), lambda: check_monte_carlo(tmp), lambda: check_curve(tmp),
                  check_identification, check_decompositions, check_agreement,
                  check_blinding_calibration, lambda: check_determinism(tmp)]
        verdicts = [check() for check in checks]
    print(f"{sum(verdicts)}/{len(verdicts)} criteria pass")
