import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings

from regime_stop.closed_form import Solution, scaled_coefficients, solve
from regime_stop.model import REFERENCE_PARAMS
from regime_stop.verification import (
    apply_generator,
    branch_terms,
    log_grids,
    phi,
    positivity_sweep,
    psi,
    psi_second_derivative,
    qvi_residuals,
    qvi_sweep,
    sample_params,
    smooth_fit_check,
)

from conftest import valid_params

REF = solve(REFERENCE_PARAMS)
BRANCHES = ("w0_below", "w0_above", "w1_below", "w1_above")


def test_reference_certificate_passes():
    rep = qvi_residuals(REF)
    assert rep.passed
    assert rep.psi_min >= 0 and rep.phi_min >= 0
    assert rep.ode_residual_max <= 1e-12
    assert rep.grid.size == 2 * 4096
    d = rep.as_dict()
    assert d["passed"] is True and len(d["grid"]) == 8192


def test_psi_near_zero():
    c = REF.coeffs
    expected = (c.rho + (1 - c.a0) * c.lambda1 - c.mu1) * c.beta_s
    assert float(psi(REF, 1e-12)) == pytest.approx(expected, rel=1e-9)
    assert expected > 0


def test_phi_vanishes_to_first_order_at_k():
    assert abs(float(phi(REF, REF.k))) < 1e-9
    assert abs(float(phi(REF, REF.k, deriv=1))) < 1e-9


def test_smooth_fit_gaps():
    gaps = smooth_fit_check(REF)
    scale = max(1.0, REF.coeffs.beta_b * REF.k)
    for key in ("w0_value", "w0_slope", "w1_value", "w1_slope"):
        assert gaps[key] < 1e-10 * scale
    assert gaps["w1_curvature_above"] > 0
    assert gaps["w1_curvature_below"] == 0.0


def test_curvature_above_matches_formula():
    r, s, k = REF.roots, REF.scaled, REF.k
    expected = (s.c1k * r.delta1 * (r.delta1 - 1) + s.c3k * r.delta3 * (r.delta3 - 1)) / k**2
    assert smooth_fit_check(REF)["w1_curvature_above"] == pytest.approx(expected, rel=1e-12)


def test_detector_flags_a_wrong_threshold():
    k = REF.k * 1.01
    wrong = Solution(k=k, scaled=scaled_coefficients(REF.roots, REF.coeffs, k), roots=REF.roots, coeffs=REF.coeffs)
    gaps = smooth_fit_check(wrong)
    assert gaps["w0_slope"] > 1e-4
    assert not qvi_residuals(wrong).passed


def _mp_branch(terms, k):
    def f(y):
        return mpmath.fsum(mpmath.mpf(c) * (y / k) ** mpmath.mpf(p) for c, p in terms)
    return f


@pytest.mark.parametrize("name", BRANCHES)
def test_generator_against_finite_differences(name):
    mpmath.mp.dps = 50
    rng = np.random.default_rng(0)
    terms = branch_terms(REF, name)
    c = REF.coeffs
    f = _mp_branch(terms, mpmath.mpf(REF.k))
    lo, hi = (REF.k * 1e-2, REF.k) if name.endswith("below") else (REF.k, REF.k * 1e2)
    ys = np.exp(rng.uniform(math.log(lo), math.log(hi), 100))
    analytic = apply_generator(REF, terms, ys)
    for y, want in zip(ys, analytic):
        ym = mpmath.mpf(y)
        h = ym * mpmath.mpf("1e-6")
        d1 = (f(ym + h) - f(ym - h)) / (2 * h)
        d2 = (f(ym + h) - 2 * f(ym) + f(ym - h)) / h**2
        got = float(c.sigma * ym**2 * d2 + (c.mu2 - c.mu1) * ym * d1 + c.mu1 * f(ym))
        scale = sum(abs(c.char_poly(p) * cc * (y / REF.k) ** p) for cc, p in terms)
        assert abs(got - want) <= 1e-5 * scale


def test_psi_concave_and_phi_convex_increasing():
    below, above = log_grids(REF.k)
    assert np.all(psi_second_derivative(REF, below) < 0)
    assert np.all(phi(REF, above, deriv=2) > 0)
    assert np.all(phi(REF, above, deriv=1) >= 0)


@settings(max_examples=60)
@given(valid_params())
def test_certificate_on_random_parameters(p):
    sol = solve(p)
    rep = qvi_residuals(sol, points=512)
    assert rep.passed, rep
    below, above = log_grids(sol.k, 512)
    assert np.all(psi_second_derivative(sol, below) <= 0)
    assert np.all(phi(sol, above, deriv=2) >= 0)


def test_sample_params_is_keyed_by_seed_and_index():
    assert sample_params(42, 7) == sample_params(42, 7)
    assert sample_params(42, 7) != sample_params(42, 8)
    assert sample_params(42, 7) != sample_params(43, 7)


def test_sample_params_ranges():
    for i in range(300):
        p = sample_params(1, i)
        for lam in (p.rho, p.lambda0, p.lambda1):
            assert 1e-2 <= lam <= 1e3
        assert -0.3 <= p.mu1 <= p.rho - 0.01 and -0.3 <= p.mu2 <= p.rho - 0.01
        assert all(-0.5 <= s <= 0.5 for s in (p.sigma11, p.sigma12, p.sigma21, p.sigma22))
        assert 0 <= p.K <= 0.01


def test_positivity_sweep_small():
    s = positivity_sweep(300, seed=5)
    assert s.passed and s.draws == 300
    assert s.mu1_gt_mu2 > 0 and s.sigma_mu1_le_mu2 > 0
    with pytest.raises(ValueError):
        positivity_sweep(0, seed=5)


def test_qvi_sweep_small_is_deterministic():
    a = qvi_sweep(20, seed=3, points=256)
    b = qvi_sweep(20, seed=3, points=256)
    assert all(r.passed for _, r in a)
    assert [r.psi_min for _, r in a] == [r.psi_min for _, r in b]


def test_psi_matches_direct_evaluation():
    y = np.linspace(0.05, 0.95, 19) * REF.k
    c = REF.coeffs
    lw1 = apply_generator(REF, branch_terms(REF, "w1_below"), y)
    direct = (c.rho + c.lambda1) * REF.w1(y) - lw1 - c.lambda1 * REF.w0(y)
    assert np.allclose(psi(REF, y), direct, rtol=1e-12, atol=1e-14)
