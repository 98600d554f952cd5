import math

import numpy as np
import pytest

from regime_stop.closed_form import solve
from regime_stop.model import PRINTED_LABEL_PARAMS, REFERENCE_PARAMS, derive_coeffs
from regime_stop.montecarlo import (
    BLOCK_SIZE,
    InvalidHorizon,
    InvalidThreshold,
    SimConfig,
    monitor_convergence,
    open_time_fractions,
    policy_dominance,
    sample_log_increments,
    simulate_paths,
    simulate_policy,
    truncation_bound,
)

P = REFERENCE_PARAMS
K = solve(P).k


def test_immediate_stop_is_exact():
    r = simulate_policy(SimConfig(P, x1_0=1.0, x2_0=0.5, alpha_0=1, paths=500, seed=1))
    assert r.estimate == 0.999 - 1.001 * 0.5
    assert r.std_error == 0.0
    assert r.stopped_fraction == 1.0


def test_log_increments_match_moments():
    dt, n = 0.01, 100_000
    x = sample_log_increments(P, dt, n, seed=3)
    c = derive_coeffs(P)
    mean = np.array([P.mu1 - c.a11 / 2, P.mu2 - c.a22 / 2]) * dt
    a = np.array([[c.a11, c.a12], [c.a12, c.a22]]) * dt
    se_mean = np.sqrt(np.diag(a) / n)
    assert np.all(np.abs(x.mean(axis=0) - mean) <= 4 * se_mean)
    cov = np.cov(x, rowvar=False)
    se_cov = np.sqrt((a**2 + np.outer(np.diag(a), np.diag(a))) / n)
    assert np.all(np.abs(cov - a) <= 4 * se_cov)


def test_open_fraction_matches_stationary_law():
    lam0, lam1 = 3.0, 1.0
    f = open_time_fractions(lam0, lam1, horizon=2000.0, n=1000, seed=4)
    se = f.std(ddof=1) / math.sqrt(f.size)
    assert abs(f.mean() - lam0 / (lam0 + lam1)) <= 4 * se


def test_payoff_bounds_per_path():
    rec = simulate_paths(SimConfig(P, paths=5000, seed=2, monitor_step=1e-3), [K])
    stopped = np.isfinite(rec.tau[:, 0])
    assert stopped.any() and not stopped.all()
    tau = rec.tau[stopped, 0]
    undiscounted = rec.payoff[stopped, 0] * np.exp(P.rho * tau)
    x1, x2 = rec.x1[stopped, 0], rec.x2[stopped, 0]
    c = derive_coeffs(P)
    assert np.all(undiscounted >= -c.beta_b * x2 - 1e-12)
    assert np.all(undiscounted <= c.beta_s * x1 + 1e-12)
    assert np.all(x2 / x1 <= K * (1 + 1e-12))
    assert np.all(rec.payoff[~stopped, 0] == 0.0)


def test_closed_regime_start_waits_for_opening():
    rec = simulate_paths(SimConfig(P, x2_0=0.5, alpha_0=0, paths=2000, seed=5), [K])
    assert np.all(rec.tau[:, 0] > 0)
    first = rec.tau[np.isfinite(rec.tau[:, 0]), 0]
    assert first.size > 1900
    # time to the first opening is exponential with rate lambda0
    assert abs(np.mean(first) - 1 / P.lambda0) < 4 * np.std(first) / math.sqrt(first.size) + 1e-3


def test_report_is_deterministic():
    cfg = SimConfig(P, paths=3000, seed=9)
    assert simulate_policy(cfg) == simulate_policy(cfg)
    assert simulate_policy(cfg) != simulate_policy(SimConfig(P, paths=3000, seed=10))


def test_thread_count_does_not_change_output(monkeypatch):
    cfg = SimConfig(P, paths=BLOCK_SIZE + 500, seed=12, monitor_step=1e-3)
    monkeypatch.setenv("REGIME_STOP_THREADS", "1")
    one = simulate_policy(cfg)
    monkeypatch.setenv("REGIME_STOP_THREADS", "3")
    three = simulate_policy(cfg)
    assert one == three


def test_skipping_agrees_with_full_inspection():
    base = dict(params=P, paths=40_000, horizon=5.0, monitor_step=1e-3)
    fast = simulate_policy(SimConfig(**base, seed=11))
    full = simulate_policy(SimConfig(**base, seed=12, skip_eps=0.0))
    assert full.skip_probability_bound == 0.0
    assert fast.skip_probability_bound < 1e-8
    assert abs(fast.estimate - full.estimate) <= 4 * math.hypot(fast.std_error, full.std_error)


def test_estimate_close_to_closed_form():
    r = simulate_policy(SimConfig(P, paths=100_000, seed=21))
    assert r.closed_form_value == pytest.approx(float(solve(P).value(1.0, 1.0, 1)), rel=1e-15)
    # monitoring on a grid only delays the sale; allow a small extra margin for that
    assert r.error <= 4 * r.std_error + r.truncation_bound + 1e-3


def test_truncation_bound_values():
    assert truncation_bound(PRINTED_LABEL_PARAMS, 1.0, 20.0) == pytest.approx(0.999 * math.exp(-5.082), rel=1e-12)
    assert truncation_bound(PRINTED_LABEL_PARAMS, 1.0, 20.0) == pytest.approx(6.2e-3, abs=5e-5)
    assert truncation_bound(P, 1.0, 1e6) == 0.0
    assert truncation_bound(P, 0.0, 20.0) == 0.0


@pytest.mark.parametrize("horizon", [0.0, -1.0, math.inf, math.nan])
def test_invalid_horizon(horizon):
    with pytest.raises(InvalidHorizon):
        SimConfig(P, horizon=horizon)


@pytest.mark.parametrize("thr", [0.0, -0.5])
def test_invalid_threshold(thr):
    with pytest.raises(InvalidThreshold):
        SimConfig(P, threshold_override=thr)
    with pytest.raises(InvalidThreshold):
        simulate_paths(SimConfig(P, paths=10), [thr])


def test_other_config_errors():
    for bad in (dict(paths=0), dict(x1_0=0.0), dict(alpha_0=2), dict(monitor_step=0.0), dict(skip_eps=1.0)):
        with pytest.raises(ValueError):
            SimConfig(P, **bad)


def test_dominance_extremes():
    rows = policy_dominance(SimConfig(P, x2_0=0.9, paths=20_000, seed=6), [1e3, 1.0, 1e-6])
    by = {r.multiplier: r for r in rows}
    assert by[1e3].estimate == pytest.approx(0.999 - 0.9 * 1.001, abs=1e-15)
    assert by[1e3].std_error == 0.0
    assert by[1.0].estimate > by[1e3].estimate + 2 * by[1e3].paired_std_error
    assert by[1e-6].estimate == 0.0
    assert by[1.0].diff_vs_optimal == 0.0


def test_dominance_uses_common_paths():
    cfg = SimConfig(P, paths=20_000, seed=7, monitor_step=1e-3)
    rows = {r.multiplier: r for r in policy_dominance(cfg, [0.8, 1.0, 1.25])}
    assert rows[0.8].paired_std_error < rows[0.8].std_error
    for m in (0.8, 1.25):
        assert rows[m].diff_vs_optimal >= -2 * rows[m].paired_std_error


def test_dominance_rejects_bad_multiplier():
    with pytest.raises(InvalidThreshold):
        policy_dominance(SimConfig(P, paths=10), [0.0])


def test_convergence_check_fields():
    chk = monitor_convergence(SimConfig(P, paths=5000, seed=8, monitor_step=2e-3))
    assert chk.fine.monitor_step == 1e-3
    assert chk.shift == abs(chk.coarse.estimate - chk.fine.estimate)
    assert chk.shift_std_error > 0
    assert set(chk.as_dict()) == {"coarse", "fine", "shift", "shift_std_error"}
