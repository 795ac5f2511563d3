"""Exit criteria. Each test prints one PASS/FAIL line."""
import math
import time

import pytest

from tempering_lab import tempering as T
from tempering_lab.harness import DEFAULT_SEED, ExperimentConfig, bound_audit, regime_summary, run_sweep
from tempering_lab.instances import SeededRng, mixture_error, qstar_formula_pacbayes, qstar_formula_profile
from tempering_lab.verify import (closed_form_vs_grid, crossing_errors, equivalence_trends, gibbs_oracle_battery,
                                  ladder_battery, lemma9_grid, random_t_pairs, tempering_round_trip)

pytestmark = pytest.mark.acceptance

SEED = DEFAULT_SEED


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n:>2} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ------------------------------------------------ experiment reports (5-9)

def underfit_configs():
    base = {"instance": {"spec": {"lstar": 0.1, "lprime": 0.3, "regime": "two_hypothesis"}},
            "schedule": {"kind": "linear", "c": 100.0}, "m_grid": [10_000], "trials": 1000, "master_seed": SEED}
    return (ExperimentConfig.from_dict({**base, "rule": {"name": "profile"}, "name": "underfit_profile"}),
            ExperimentConfig.from_dict({**base, "rule": {"name": "empirical_bayes"}, "name": "underfit_eb"}))


def overfit_config():
    return ExperimentConfig.from_dict({
        "name": "overfit_trend",
        "instance": {"spec": {"lstar": 0.1, "lprime": 0.45, "regime": "sub_one", "check_premise": False}},
        "rule": {"name": "empirical_bayes"}, "schedule": {"kind": "constant", "value": 1.0},
        "m_grid": [10, 15, 20], "trials": 500, "master_seed": SEED})


def audit_configs():
    two = {"name": "audit_two_hypothesis",
           "instance": {"spec": {"lstar": 0.1, "lprime": 0.3, "regime": "two_hypothesis"}},
           "rule": {"name": "empirical_bayes"}, "schedule": {"kind": "constant", "value": 2.0},
           "m_grid": [1000], "trials": 2000, "master_seed": SEED}
    fixed = {"name": "audit_fixed_100",
             "instance": {"spec": {"lstar": 0.1, "lprime": 0.25, "regime": "fixed", "truncation": 100}},
             "rule": {"name": "empirical_bayes"}, "schedule": {"kind": "constant", "value": 0.5},
             "m_grid": [200], "trials": 2000, "master_seed": SEED}
    return ExperimentConfig.from_dict(two), ExperimentConfig.from_dict(fixed)


def run_reports(threads):
    """All reports behind criteria 5-9, with per-criterion wall time."""
    out, times = {}, {}
    (a, b), times[5] = timed(lambda: equivalence_trends(SEED, trials=200, threads=threads))
    out[5] = [a, b]
    out[6], times[6] = timed(lambda: [run_sweep(c, threads=threads) for c in underfit_configs()])
    out[7], times[7] = timed(lambda: [run_sweep(overfit_config(), threads=threads)])
    out[8], times[8] = timed(lambda: [bound_audit(c, 0.05, threads=threads) for c in audit_configs()])
    out[9], times[9] = timed(lambda: [regime_summary(seed=SEED, threads=threads)])
    return out, times


@pytest.fixture(scope="session")
def reports():
    return run_reports(threads=1)


# -------------------------------------------------------------- criteria

def test_criterion_1_tempering_calculus(capsys):
    (worst, below), dt = timed(tempering_round_trip)
    cross = crossing_errors()
    ok = worst <= 1e-9 and below <= 0.0 and cross <= 1e-6 and dt < 5.0
    report(capsys, 1, ok, f"round trip {worst:.2e} <= 1e-9, min(ell - L*) = {-below:.2e} >= 0, "
                          f"crossing error {cross:.2e} <= 1e-6, {dt:.2f}s < 5s")


def test_criterion_2_closed_form_vs_brute_force(capsys):
    t0 = time.perf_counter()
    worst = closed_form_vs_grid(random_t_pairs(SeededRng(SEED).stream("verify", "tempering")))
    gap = lemma9_grid(50)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and gap > 0 and dt < 30.0
    report(capsys, 2, ok, f"max |closed - grid| {worst:.2e} <= 1e-8, min gap {gap:.3e} > 0, {dt:.1f}s < 30s")


def test_criterion_3_gibbs_oracle(capsys):
    r, dt = timed(lambda: gibbs_oracle_battery(SEED, cases=100))
    ok = (r["eb_tv"] <= 2e-3 and r["pp_tv"] <= 2e-3 and r["eb_gap"] <= 1e-4 and r["pp_gap"] <= 1e-4
          and r["residual"] <= 1e-9 and dt < 120.0)
    report(capsys, 3, ok, f"TV eb {r['eb_tv']:.2e} pp {r['pp_tv']:.2e} <= 2e-3, gap eb {r['eb_gap']:.2e} "
                          f"pp {r['pp_gap']:.2e} <= 1e-4, residual {r['residual']:.2e} <= 1e-9, {dt:.1f}s < 120s")


def test_criterion_4_bayesian_ladder(capsys):
    r, dt = timed(lambda: ladder_battery(SEED, cases=100))
    ok = (r["plugin_tv_1"] <= 1e-8 and r["plugin_tv_2"] <= 1e-8 and r["profile_log2"] <= 1e-10
          and r["beta_vs_quad"] <= 1e-8 and dt < 60.0)
    report(capsys, 4, ok, f"plug-in TV {r['plugin_tv_1']:.2e}/{r['plugin_tv_2']:.2e} <= 1e-8, profile log2 "
                          f"{r['profile_log2']:.2e} <= 1e-10, Beta vs quad {r['beta_vs_quad']:.2e} <= 1e-8, "
                          f"{dt:.1f}s < 60s")


def test_criterion_5_equivalence_trends(capsys, reports):
    reps, times = reports
    trails = [[row["mean_tv"] for row in rep.rows] for rep in reps[5]]
    dec = all(rep.meta["strictly_decreasing"] for rep in reps[5])
    ok = dec and times[5] < 300
    shown = "; ".join(" > ".join(f"{v:.2e}" for v in t) for t in trails)
    report(capsys, 5, ok, f"mean TV {shown}, {times[5]:.1f}s < 300s")


def test_criterion_6_underfitting(capsys, reports):
    reps, times = reports
    m, lam = 10_000, 100.0 * 10_000
    lines, ok = [], times[6] < 180
    for rep, formula in zip(reps[6], (qstar_formula_profile, qstar_formula_pacbayes)):
        row = rep.rows[0]
        pred = mixture_error(formula(0.1, 0.3, m, lam), 0.1, 0.3)
        tol = 2 * row["std_error"] + 0.005
        ok &= abs(row["mean_pop_error"] - pred) <= tol
        lines.append(f"{rep.meta['config']['name']} {row['mean_pop_error']:.6f} vs {pred:.6f}")
    big = 1e9 * m
    drift = max(abs(f(0.1, 0.3, m, big) - 0.1) for f in (qstar_formula_profile, qstar_formula_pacbayes))
    ok &= drift <= 1e-4
    report(capsys, 6, ok, f"{'; '.join(lines)} (tol 2SE + 0.005), q* drift at 1e9 m {drift:.1e} <= 1e-4, "
                          f"{times[6]:.1f}s < 180s")


def test_criterion_7_overfitting_trend(capsys, reports):
    reps, times = reports
    rows = reps[7][0].rows
    assert [r["class_size"] for r in rows] == [
        math.ceil(2 * math.sqrt(m) / (1 - 0.45) ** m) + 1 for m in (10, 15, 20)]
    mass = [(r["mean_mass_h0"], r["std_error_mass"]) for r in rows]
    err = [(r["mean_pop_error"], r["std_error"]) for r in rows]

    def trend(pairs, sign):
        # every step in the predicted direction, end-to-end change beyond 3 combined SE
        steps = all(sign * (b[0] - a[0]) > 0 for a, b in zip(pairs, pairs[1:]))
        first, last = pairs[0], pairs[-1]
        return steps and sign * (last[0] - first[0]) > 3 * math.hypot(first[1], last[1])

    ok = trend(mass, -1) and trend(err, +1) and times[7] < 600
    report(capsys, 7, ok, "mass on h0 " + " -> ".join(f"{v:.3f}" for v, _ in mass)
           + " (want decreasing), error " + " -> ".join(f"{v:.3f}" for v, _ in err)
           + f" (want increasing), {times[7]:.1f}s < 600s")


def test_criterion_8_bound_audit(capsys, reports):
    reps, times = reports
    rates = [rep.meta["violation_rate"] for rep in reps[8]]
    ok = all(r <= 0.05 for r in rates) and len(rates) == 2 and times[8] < 180
    report(capsys, 8, ok, f"violation rates {rates} <= 0.05 over 2000 trials each, {times[8]:.1f}s < 180s")


def test_criterion_9_regimes(capsys, reports):
    reps, times = reports
    rows = reps[9][0].rows
    tags = {r["case"]: (r["tag"], r["expected"]) for r in rows}
    ok = len(rows) == 4 and all(r["match"] for r in rows) and times[9] < 600
    shown = ", ".join(f"{c}={t}" for c, (t, _) in tags.items())
    report(capsys, 9, ok, f"{shown}, {times[9]:.1f}s < 600s")


def test_criterion_10_determinism(capsys, reports):
    base, _ = reports

    def hashes(reps):
        return {(n, i): rep.csv_sha256() for n, lst in reps.items() for i, rep in enumerate(lst)}

    ref = hashes(base)
    mismatched = []
    for threads in (4, 8):
        other, _ = run_reports(threads)
        got = hashes(other)
        mismatched += [f"{k}@{threads}" for k in ref if got[k] != ref[k]]
    report(capsys, 10, not mismatched, f"{len(ref)} CSVs hash-identical at 1/4/8 threads"
           if not mismatched else f"hash mismatch: {mismatched}")


def test_overfit_construction_respects_upper_bound(reports):
    # L' = 0.45 lies above ell_1(0.1), so the upper bound caps the limiting error
    # below L'; the observed errors should sit under that cap at every m.
    reps, _ = reports
    cap = T.ell_lambda(1.0, 0.1)
    for row in reps[7][0].rows:
        assert row["mean_pop_error"] < cap
        assert 0.45 > cap
