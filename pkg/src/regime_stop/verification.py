"""Numerical certificates that the closed form solves the variational inequalities.

Every branch of ``w0`` and ``w1`` is a short sum of monomials
``c * (y / k) ** p``. The reduced generator maps such a monomial to
``char_poly(p) * c * (y / k) ** p``, so all residuals below are evaluated
exactly, with no finite differences.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .closed_form import NonpositiveCoefficient, Solution, bracket, solve
from .model import ModelParams, ValidationError, combined_sigma, validate

Terms = list[tuple[float, float]]  # (coefficient, power) of c * (y/k)**p


def branch_terms(solution: Solution, name: str) -> Terms:
    """Monomial expansion of ``w0_below``, ``w0_above``, ``w1_below`` or ``w1_above``."""
    c, r, s, k = solution.coeffs, solution.roots, solution.scaled, solution.k
    if name == "w1_below":
        return [(c.beta_s, 0.0), (-c.beta_b * k, 1.0)]
    if name == "w0_below":
        return [(s.c2k, r.gamma2), (c.a0 * c.beta_s, 0.0), (-c.a1 * c.beta_b * k, 1.0)]
    if name == "w1_above":
        return [(s.c1k, r.delta1), (s.c3k, r.delta3)]
    if name == "w0_above":
        return [(s.c1k, r.delta1), (-c.eta * s.c3k, r.delta3)]
    raise KeyError(name)


def _powers(y: np.ndarray, k: float, p: float) -> np.ndarray:
    if p == 0.0:
        return np.ones_like(y)
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(p * (np.log(y) - math.log(k)))


def eval_terms(terms: Terms, y, k: float, deriv: int = 0) -> np.ndarray:
    """Value or ``deriv``-th derivative (0, 1, 2) in ``y``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for c, p in terms:
        fac = {0: 1.0, 1: p, 2: p * (p - 1.0)}[deriv]
        if fac == 0.0:
            continue
        out += c * fac * _powers(y, k, p) / y**deriv
    return out


def apply_generator(solution: Solution, terms: Terms, y) -> np.ndarray:
    """``L w`` for ``w`` given by ``terms``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for c, p in terms:
        out += solution.coeffs.char_poly(p) * c * _powers(y, solution.k, p)
    return out


def _resolvent_residual(solution: Solution, rate: float, w: Terms, coupling: float, u: Terms, y):
    """``(rate - L) w - coupling * u`` and the magnitude it is measured against."""
    y = np.asarray(y, dtype=float)
    k = solution.k
    val = np.zeros_like(y)
    mag = np.zeros_like(y)
    for c, p in w:
        t = c * _powers(y, k, p)
        lp = solution.coeffs.char_poly(p)
        val += (rate - lp) * t
        mag += (abs(rate) + abs(lp)) * np.abs(t)
    for c, p in u:
        t = c * _powers(y, k, p)
        val -= coupling * t
        mag += abs(coupling) * np.abs(t)
    return val, mag


def psi(solution: Solution, y) -> np.ndarray:
    """Continuation slack on ``(0, k)``: ``(rho + lambda1 - L) w1 - lambda1 w0``."""
    c = solution.coeffs
    val, _ = _resolvent_residual(
        solution, c.rho + c.lambda1, branch_terms(solution, "w1_below"),
        c.lambda1, branch_terms(solution, "w0_below"), y,
    )
    return val


def psi_second_derivative(solution: Solution, y) -> np.ndarray:
    c = solution.coeffs
    # only the y**gamma2 term of w0 is nonlinear
    z = solution.scaled.c2k
    g = solution.roots.gamma2
    y = np.asarray(y, dtype=float)
    return -c.lambda1 * z * g * (g - 1.0) * _powers(y, solution.k, g) / y**2


def phi(solution: Solution, y, deriv: int = 0) -> np.ndarray:
    """Obstacle slack on ``(k, inf)``: ``w1 - (beta_s - beta_b y)``."""
    terms = branch_terms(solution, "w1_above")
    payoff = [(-t, p) for t, p in branch_terms(solution, "w1_below")]
    return eval_terms(terms + payoff, y, solution.k, deriv)


@dataclass
class ResidualReport:
    grid: np.ndarray = field(repr=False)
    psi_min: float
    phi_min: float
    ode_residual_max: float
    smoothfit_gap: float
    tol_qvi: float
    tol_ode: float
    tol_fit: float

    @property
    def passed(self) -> bool:
        return (
            self.psi_min >= -self.tol_qvi
            and self.phi_min >= -self.tol_qvi
            and self.ode_residual_max <= self.tol_ode
            and self.smoothfit_gap <= self.tol_fit
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.tolist()
        d["passed"] = self.passed
        return d


def log_grids(k: float, points: int = 4096, decades: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Log-spaced points in ``(k 10**-decades, k)`` and ``(k, k 10**decades)``."""
    below = k * np.logspace(-decades, 0.0, points, endpoint=False)
    above = k * np.logspace(0.0, decades, points + 1)[1:]
    return below, above


def smooth_fit_check(solution: Solution) -> dict[str, float]:
    """Value and slope mismatches of both value functions at ``k``."""
    k = np.array([solution.k])
    out = {}
    for j in (0, 1):
        lo = branch_terms(solution, f"w{j}_below")
        hi = branch_terms(solution, f"w{j}_above")
        for deriv, tag in ((0, "value"), (1, "slope")):
            gap = eval_terms(lo, k, solution.k, deriv) - eval_terms(hi, k, solution.k, deriv)
            out[f"w{j}_{tag}"] = float(abs(gap[0]))
    out["w1_curvature_above"] = float(eval_terms(branch_terms(solution, "w1_above"), k, solution.k, 2)[0])
    out["w1_curvature_below"] = 0.0
    return out


def qvi_residuals(
    solution: Solution,
    points: int = 4096,
    decades: float = 3.0,
    tol_qvi_rel: float = 1e-9,
    tol_ode: float = 1e-9,
    tol_fit_rel: float = 1e-10,
) -> ResidualReport:
    c = solution.coeffs
    below, above = log_grids(solution.k, points, decades)

    psi_min = float(np.min(psi(solution, below)))
    phi_min = float(np.min(phi(solution, above)))

    terms = {n: branch_terms(solution, n) for n in ("w0_below", "w0_above", "w1_below", "w1_above")}
    rel = []
    for region, y in (("below", below), ("above", above)):
        val, mag = _resolvent_residual(
            solution, c.rho + c.lambda0, terms[f"w0_{region}"], c.lambda0, terms[f"w1_{region}"], y
        )
        rel.append(_relative(val, mag))
    val, mag = _resolvent_residual(
        solution, c.rho + c.lambda1, terms["w1_above"], c.lambda1, terms["w0_above"], above
    )
    rel.append(_relative(val, mag))

    gaps = smooth_fit_check(solution)
    fit_scale = max(1.0, c.beta_b * solution.k)
    fit = max(gaps[f"w{j}_{t}"] for j in (0, 1) for t in ("value", "slope")) / fit_scale

    return ResidualReport(
        grid=np.concatenate([below, above]),
        psi_min=psi_min,
        phi_min=phi_min,
        ode_residual_max=float(max(r.max() for r in rel)),
        smoothfit_gap=fit,
        tol_qvi=tol_qvi_rel * c.beta_s,
        tol_ode=tol_ode,
        tol_fit=tol_fit_rel,
    )


# Below this the terms are subnormal or nearly so and carry no relative
# precision; residuals there are measured against the floor instead.
_MAGNITUDE_FLOOR = 1e-250


def _relative(val: np.ndarray, mag: np.ndarray) -> np.ndarray:
    return np.abs(val) / np.maximum(mag, _MAGNITUDE_FLOOR)


# -- randomized positivity sweep -------------------------------------------

def sample_params(seed: int, index: int) -> ModelParams:
    """Draw ``index`` of the sweep keyed by ``seed``; independent of other draws.

    Rates (rho, lambda0, lambda1) are log-uniform on [1e-2, 1e3], drifts
    uniform on [-0.3, rho - 0.01], volatility entries uniform on
    [-0.5, 0.5] and K uniform on [0, 0.01]. Volatility draws with combined
    sigma <= 1e-6 are redrawn.
    """
    rng = np.random.default_rng([seed, index])
    rho, lam0, lam1 = 10.0 ** rng.uniform(-2.0, 3.0, size=3)
    mu1, mu2 = rng.uniform(-0.3, rho - 0.01, size=2)
    while True:
        s = rng.uniform(-0.5, 0.5, size=4)
        if combined_sigma(*s) > 1e-6:
            break
    K = rng.uniform(0.0, 0.01)
    return validate(dict(
        mu1=mu1, mu2=mu2, sigma11=s[0], sigma12=s[1], sigma21=s[2], sigma22=s[3],
        rho=rho, lambda0=lam0, lambda1=lam1, K=K,
    ))


@dataclass
class SweepSummary:
    draws: int
    seed: int
    counterexamples: list[dict]
    mu1_gt_mu2: int
    sigma_mu1_le_mu2: int

    @property
    def passed(self) -> bool:
        return not self.counterexamples


def check_positivity(params: ModelParams) -> list[str]:
    """Reasons ``params`` violates positivity; empty when it does not."""
    try:
        sol = solve(params)
    except (NonpositiveCoefficient, ValidationError, AssertionError) as exc:
        return [f"{type(exc).__name__}: {exc}"]
    problems = []
    if not sol.k > 0:
        problems.append(f"k={sol.k!r} <= 0")
    lo, hi = bracket(sol)
    if not lo < sol.k < hi:
        problems.append(f"k={sol.k!r} outside ({lo!r}, {hi!r})")
    return problems


def positivity_sweep(draw_count: int, seed: int) -> SweepSummary:
    if draw_count < 1:
        raise ValueError("draw_count must be >= 1")
    bad, case2, branch = [], 0, 0
    for i in range(draw_count):
        p = sample_params(seed, i)
        sig = combined_sigma(p.sigma11, p.sigma12, p.sigma21, p.sigma22)
        case2 += p.mu1 > p.mu2
        branch += sig + p.mu1 <= p.mu2
        problems = check_positivity(p)
        if problems:
            bad.append({"index": i, "params": p.as_dict(), "problems": problems})
    return SweepSummary(draw_count, seed, bad, case2, branch)


def qvi_sweep(draw_count: int, seed: int, points: int = 4096) -> list[tuple[int, ResidualReport]]:
    """QVI reports for each draw of :func:`sample_params`."""
    return [(i, qvi_residuals(solve(sample_params(seed, i)), points=points)) for i in range(draw_count)]
