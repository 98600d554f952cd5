"""End-to-end checks at their stated tolerances and time budgets.

Each test records one pass/fail line, printed together at the end of the run.
"""
import statistics
import time

import numpy as np

from regime_stop.calibration import calibrate, fits_within, round_trip_zscores, synthetic_series
from regime_stop.closed_form import compute_roots, k0_limit, k1_limit, solve, threshold_k
from regime_stop.model import PRINTED_LABEL_PARAMS, REFERENCE_PARAMS, derive_coeffs
from regime_stop.montecarlo import SimConfig, monitor_convergence, policy_dominance, truncation_bound
from regime_stop.studies import table_comparison
from regime_stop.verification import positivity_sweep, qvi_residuals, qvi_sweep

GOLDEN_K = 0.7036


def _timed(fn, repeat=1):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def test_golden_threshold(record_criterion):
    # parameters exactly as listed: mu1=0.2459, mu2=0.2059, sigma11=0.2943, sigma22=0.3112
    solve(PRINTED_LABEL_PARAMS)
    sol, secs = _timed(lambda: solve(PRINTED_LABEL_PARAMS), repeat=101)
    gap = abs(sol.k - GOLDEN_K)
    ok = gap <= 5e-5 and secs < 1e-3
    swapped = solve(REFERENCE_PARAMS).k
    record_criterion(
        1, ok,
        f"k={sol.k:.6f} |k-0.7036|={gap:.2e} (tol 5e-5) in {secs * 1e3:.3f} ms; "
        f"with the two stock labels exchanged k={swapped:.6f}",
    )
    assert gap <= 5e-5
    assert secs < 1e-3


def test_sensitivity_tables(record_criterion):
    rows, secs = _timed(table_comparison)
    bad = [r for r in rows if not r["ok"]]
    worst = max(abs(r["diff"]) for r in rows)
    ok = not bad and secs < 1.0
    detail = f"{len(rows) - len(bad)}/{len(rows)} cells within 5e-5, worst {worst:.2e}, {secs:.3f} s"
    if bad:
        detail += "; misses: " + ", ".join(f"{r['parameter']}={r['value']:g}" for r in bad)
    record_criterion(2, ok, detail)
    assert not bad
    assert secs < 1.0


def test_qvi_certificate(record_criterion):
    def run():
        ref = qvi_residuals(solve(REFERENCE_PARAMS), points=4096)
        return ref, qvi_sweep(1000, 42, points=4096)

    (ref, sweep), secs = _timed(run)
    failed = [i for i, rep in sweep if not rep.passed]
    worst_ode = max(rep.ode_residual_max for _, rep in sweep)
    worst_fit = max(rep.smoothfit_gap for _, rep in sweep)
    ok = ref.passed and not failed and secs < 30.0
    record_criterion(
        3, ok,
        f"reference passed={ref.passed}, {1000 - len(failed)}/1000 draws pass; "
        f"worst ODE residual {worst_ode:.1e}, worst smooth-fit gap {worst_fit:.1e}, {secs:.1f} s",
    )
    assert ref.passed and failed == []
    assert secs < 30.0


def test_positivity_property_suite(record_criterion):
    summary, secs = _timed(lambda: positivity_sweep(10_000, 42))
    ok = (summary.passed and summary.mu1_gt_mu2 >= 100
          and summary.sigma_mu1_le_mu2 >= 100 and secs < 10.0)
    record_criterion(
        4, ok,
        f"{len(summary.counterexamples)} counterexamples in 10000 draws; "
        f"mu1>mu2: {summary.mu1_gt_mu2}, sigma+mu1<=mu2: {summary.sigma_mu1_le_mu2}; {secs:.2f} s",
    )
    assert summary.counterexamples == []
    assert summary.mu1_gt_mu2 >= 100 and summary.sigma_mu1_le_mu2 >= 100
    assert secs < 10.0


def _k_unchecked(params):
    c = derive_coeffs(params)
    return threshold_k(compute_roots(c, params), c)


def test_switching_rate_limits(record_criterion):
    base = REFERENCE_PARAMS
    _k_unchecked(base)

    def run():
        return (
            _k_unchecked(base.replace(lambda0=1e8, lambda1=10.0)),
            _k_unchecked(base.replace(lambda0=10.0, lambda1=1e8)),
            k0_limit(base),
            k1_limit(base),
        )

    (ka, kb, k0, k1), secs = _timed(run, repeat=21)
    ok = abs(ka - k0) < 1e-3 and abs(kb - k1) < 1e-3 and k1 > k0 and secs < 1e-2
    record_criterion(
        5, ok,
        f"|k(1e8,10)-k0|={abs(ka - k0):.1e}, |k(10,1e8)-k1|={abs(kb - k1):.1e}, "
        f"k0={k0:.5f} < k1={k1:.5f}, {secs * 1e3:.2f} ms",
    )
    assert abs(ka - k0) < 1e-3 and abs(kb - k1) < 1e-3
    assert k1 > k0
    assert secs < 1e-2


def test_monte_carlo_matches_value(record_criterion):
    t0 = time.perf_counter()
    lines, ok = [], True
    for alpha in (1, 0):
        cfg = SimConfig(REFERENCE_PARAMS, 1.0, 1.0, alpha, paths=1_000_000, horizon=20.0,
                        seed=2024 + alpha, monitor_step=1e-4)
        chk = monitor_convergence(cfg)
        for rep in (chk.coarse, chk.fine):
            budget = 3 * rep.std_error + rep.truncation_bound + chk.shift
            ok &= rep.error <= budget
            lines.append(
                f"alpha={alpha} h={rep.monitor_step:g}: est={rep.estimate:.5f} "
                f"v={rep.closed_form_value:.5f} err={rep.error:.1e} budget={budget:.1e}"
            )
    secs = time.perf_counter() - t0
    ok &= secs < 120.0
    record_criterion(6, ok, "; ".join(lines) + f"; {secs:.0f} s")
    assert ok


def test_policy_dominance(record_criterion):
    t0 = time.perf_counter()
    cfg = SimConfig(REFERENCE_PARAMS, paths=1_000_000, horizon=20.0, seed=11)
    rows = policy_dominance(cfg, [1.0, 0.6, 0.8, 1.25, 1.6, 1e-6])
    secs = time.perf_counter() - t0
    by = {r.multiplier: r for r in rows}
    base_est = by[1.0].estimate
    others = [(m, r) for m, r in by.items() if m not in (1.0, 1e-6)]
    dominated = all(r.diff_vs_optimal >= -2 * r.paired_std_error for _, r in others)
    never = by[1e-6]
    never_budget = 3 * never.std_error + truncation_bound(REFERENCE_PARAMS, 1.0, 20.0)
    never_ok = abs(never.estimate) <= never_budget
    ok = dominated and never_ok and secs < 180.0
    diffs = ", ".join(f"m={m:g}: {r.diff_vs_optimal:+.1e}±{r.paired_std_error:.0e}"
                      for m, r in others)
    record_criterion(
        7, ok,
        f"optimal est={base_est:.5f}; {diffs}; never-stop est={never.estimate:.1e} "
        f"(budget {never_budget:.1e}); {secs:.0f} s",
    )
    assert dominated and never_ok
    assert secs < 180.0


def test_calibration_round_trip(record_criterion):
    series = synthetic_series(REFERENCE_PARAMS, years=15, seed=7)
    res = calibrate(series)
    z = round_trip_zscores(res, REFERENCE_PARAMS)
    p = REFERENCE_PARAMS
    k = solve(res.to_params(p.rho, p.lambda0, p.lambda1, p.K)).k
    ok = fits_within(z, 3.0) and abs(k - GOLDEN_K) < 0.05
    zs = ", ".join(f"{n}={v:+.2f}" for n, v in z.items())
    record_criterion(8, ok, f"z-scores {zs}; recovered k={k:.4f} (|k-0.7036|={abs(k - GOLDEN_K):.3f})")
    assert fits_within(z, 3.0)
    assert abs(k - GOLDEN_K) < 0.05
    assert np.isfinite(k)
