"""Closed-form threshold policy and value functions.

With ``y = x2 / x1`` and ``v_i(x1, x2) = x1 * w_i(y)`` the problem reduces to
Cauchy-Euler equations in ``y``. The position is closed in the open regime
as soon as ``y <= k``.

Coefficients are stored pre-multiplied by the matching power of ``k``
(``C1 k**delta1``, ``C2 k**gamma2``, ``C3 k**delta3``) because ``gamma2``
grows like ``sqrt(lambda0 / sigma)`` and the raw constants overflow long
before the value functions do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, ReducedCoeffs, derive_coeffs, validate


class NonpositiveCoefficient(ArithmeticError):
    """A coefficient that is provably positive came out <= 0."""


class NonpositiveRatio(ValueError):
    pass


class NonpositivePrice(ValueError):
    pass


@dataclass(frozen=True)
class Roots:
    delta1: float
    delta2: float
    delta3: float
    delta4: float
    gamma1: float
    gamma2: float


def _quadratic_roots(b: float, c: float) -> tuple[float, float]:
    """Roots (negative, positive) of ``x**2 - b x - c = 0`` for ``c > 0``.

    The root that would suffer cancellation is recovered from the product
    ``-c``.
    """
    disc = b * b + 4.0 * c
    assert disc > 0.0, f"non-positive discriminant {disc}"
    sq = math.sqrt(disc)
    if b >= 0.0:
        pos = 0.5 * (b + sq)
        neg = -c / pos
    else:
        neg = 0.5 * (b - sq)
        pos = -c / neg
    return neg, pos


def compute_roots(coeffs: ReducedCoeffs, params: ModelParams) -> Roots:
    sig = coeffs.sigma
    b = 1.0 + (params.mu1 - params.mu2) / sig
    base = params.rho - params.mu1
    d1, d2 = _quadratic_roots(b, base / sig)
    d3, d4 = _quadratic_roots(b, (base + params.lambda0 + params.lambda1) / sig)
    g1, g2 = _quadratic_roots(b, (base + params.lambda0) / sig)
    return Roots(d1, d2, d3, d4, g1, g2)


def _b0_b1(coeffs: ReducedCoeffs) -> tuple[float, float]:
    # 1 - a0 and 1 - a1 without the cancellation of subtracting from 1
    c = coeffs
    return (
        (c.rho - c.mu1) / (c.rho + c.lambda0 - c.mu1),
        (c.rho - c.mu2) / (c.rho + c.lambda0 - c.mu2),
    )


def threshold_k(roots: Roots, coeffs: ReducedCoeffs) -> float:
    """Smooth-fit threshold, regrouped so numerator and denominator are
    sums of positive terms."""
    d1, d3, g2 = roots.delta1, roots.delta3, roots.gamma2
    eta = coeffs.eta
    b0, b1 = _b0_b1(coeffs)
    num = (1.0 + eta) * (-d1) * (g2 - d3) + b0 * (d1 - d3) * g2
    den = (1.0 + eta) * (g2 - d3) * (1.0 - d1) + b1 * (g2 - 1.0) * (d1 - d3)
    return num / den * coeffs.beta_s / coeffs.beta_b


def threshold_k_expanded(roots: Roots, coeffs: ReducedCoeffs) -> float:
    """Same threshold in its expanded (unregrouped) form; cross-check only."""
    d1, d3, g2 = roots.delta1, roots.delta3, roots.gamma2
    eta, a0, a1 = coeffs.eta, coeffs.a0, coeffs.a1
    num = d1 * d3 * (1 + eta) - (d3 + eta * d1) * g2 - a0 * (d1 - d3) * g2
    den = (
        (1 + eta) * (d1 * d3 + g2)
        - (d3 + eta * d1) * g2
        - (d1 + eta * d3)
        - a1 * (g2 - 1) * (d1 - d3)
    )
    return num / den * coeffs.beta_s / coeffs.beta_b


@dataclass(frozen=True)
class ScaledCoefficients:
    """``C1 k**delta1``, ``C2 k**gamma2``, ``C3 k**delta3``."""

    c1k: float
    c2k: float
    c3k: float


def coefficients(roots: Roots, coeffs: ReducedCoeffs, k: float) -> tuple[float, float, float]:
    """Raw ``(C1, C2, C3)``; entries may be ``inf`` when ``k**-gamma2`` overflows.

    At the smooth-fit threshold the cancellation-free forms are used.
    """
    if math.isclose(k, threshold_k(roots, coeffs), rel_tol=1e-13):
        sc = fitted_coefficients(roots, coeffs)
    else:
        sc = scaled_coefficients(roots, coeffs, k)
    return _unscale(sc, roots, k)


def _unscale(sc: ScaledCoefficients, roots: Roots, k: float) -> tuple[float, float, float]:
    lk = math.log(k)
    with np.errstate(over="ignore"):
        c1 = sc.c1k * float(np.exp(-roots.delta1 * lk))
        c2 = sc.c2k * float(np.exp(-roots.gamma2 * lk))
        c3 = sc.c3k * float(np.exp(-roots.delta3 * lk))
    return c1, c2, c3


def _require_positive(c1k: float, c2k: float, c3k: float) -> ScaledCoefficients:
    for name, val in (("C1", c1k), ("C2", c2k), ("C3", c3k)):
        if not val > 0.0:
            raise NonpositiveCoefficient(f"{name} * k^p = {val!r} is not positive")
    return ScaledCoefficients(c1k, c2k, c3k)


def fitted_coefficients(roots: Roots, coeffs: ReducedCoeffs) -> ScaledCoefficients:
    """Coefficients at the smooth-fit threshold.

    Written over the denominator of ``k`` so that neither
    ``delta1 - delta3`` nor ``k`` minus a bracket end is formed; both cancel
    badly once ``|delta|`` reaches the hundreds.
    """
    d1, d3, g2 = roots.delta1, roots.delta3, roots.gamma2
    bs = coeffs.beta_s
    eta, a0, a1 = coeffs.eta, coeffs.a0, coeffs.a1
    b0, b1 = _b0_b1(coeffs)

    den_k = (1.0 + eta) * (g2 - d3) * (1.0 - d1) + b1 * (g2 - 1.0) * (d1 - d3)
    e1 = b0 * g2 * (1.0 - d1) - b1 * (g2 - 1.0) * (-d1)
    e3 = (eta + a0) * (1.0 - d3) * g2 - (eta + a1) * (-d3) * (g2 - 1.0)

    # The w0 fit is linear in (C2 k**gamma2, k):
    #   (g2 - d3) Z + b1 (1 - d3) bb k = b0 (-d3) bs
    #   (g2 - d1) Z - (eta + a1)(1 - d1) bb k = (a0 + eta) d1 bs
    # Cramer's rule for Z.
    num_z = (b0 * (eta + a1) * (1.0 - d1) * (-d3) - b1 * (eta + a0) * (1.0 - d3) * (-d1)) * bs
    den_z = (g2 - d3) * (eta + a1) * (1.0 - d1) + (g2 - d1) * b1 * (1.0 - d3)

    return _require_positive(bs * e3 / den_k, num_z / den_z, bs * e1 / den_k)


def scaled_coefficients(roots: Roots, coeffs: ReducedCoeffs, k: float) -> ScaledCoefficients:
    """Coefficients for an arbitrary boundary ``k``.

    ``C1``, ``C3`` match value and slope of ``w1`` at ``k``; ``C2`` matches the
    value of ``w0`` only, so away from the true threshold the slope of ``w0``
    jumps.
    """
    d1, d3 = roots.delta1, roots.delta3
    bs, bb = coeffs.beta_s, coeffs.beta_b
    c1k = (-d3 * bs + (d3 - 1.0) * bb * k) / (d1 - d3)
    c3k = (d1 * bs - (d1 - 1.0) * bb * k) / (d1 - d3)
    c2k = c1k - coeffs.eta * c3k - coeffs.a0 * bs + coeffs.a1 * bb * k
    return _require_positive(c1k, c2k, c3k)


def c2_printed_form(roots: Roots, coeffs: ReducedCoeffs, k: float) -> float:
    """``C2`` from the single-fraction expression, ``k**gamma2`` dividing the
    whole denominator. Cross-check for :func:`scaled_coefficients`."""
    d1, d3, g2 = roots.delta1, roots.delta3, roots.gamma2
    eta, a0, a1 = coeffs.eta, coeffs.a0, coeffs.a1
    num = ((1 - a0) * (eta + a1) * (1 - d1) * (-d3) + (1 - a1) * (eta + a0) * (1 - d3) * d1) * coeffs.beta_s
    bracket = (
        (1 + eta) * (d1 * d3 + g2)
        - d1 * ((a1 + eta) * g2 + (1 - a1))
        - d3 * ((a1 + eta) + g2 * (1 - a1))
    )
    return num / (bracket * k**g2)


def _pow_ratio(y, k: float, p: float):
    """``(y / k) ** p`` through the log, safe for large ``|p|``."""
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(p * (np.log(y) - math.log(k)))


@dataclass(frozen=True)
class Solution:
    k: float
    scaled: ScaledCoefficients
    roots: Roots
    coeffs: ReducedCoeffs

    @property
    def C1(self) -> float:
        return _unscale(self.scaled, self.roots, self.k)[0]

    @property
    def C2(self) -> float:
        return _unscale(self.scaled, self.roots, self.k)[1]

    @property
    def C3(self) -> float:
        return _unscale(self.scaled, self.roots, self.k)[2]

    def payoff(self, y):
        return self.coeffs.beta_s - self.coeffs.beta_b * np.asarray(y, dtype=float)

    # branch formulas, valid for any y > 0; used by the verification module
    def w0_below(self, y):
        c = self.coeffs
        y = np.asarray(y, dtype=float)
        return self.scaled.c2k * _pow_ratio(y, self.k, self.roots.gamma2) + c.a0 * c.beta_s - c.a1 * c.beta_b * y

    def w0_above(self, y):
        r, s = self.roots, self.scaled
        return s.c1k * _pow_ratio(y, self.k, r.delta1) - self.coeffs.eta * s.c3k * _pow_ratio(y, self.k, r.delta3)

    def w1_below(self, y):
        return self.payoff(y)

    def w1_above(self, y):
        r, s = self.roots, self.scaled
        return s.c1k * _pow_ratio(y, self.k, r.delta1) + s.c3k * _pow_ratio(y, self.k, r.delta3)

    def w0(self, y):
        y = _check_ratio(y)
        return _piecewise(y, y < self.k, self.w0_below, self.w0_above)

    def w1(self, y):
        y = _check_ratio(y)
        # stopping region is the closed set y <= k
        return _piecewise(y, y <= self.k, self.w1_below, self.w1_above)

    def w(self, alpha: int, y):
        if alpha == 0:
            return self.w0(y)
        if alpha == 1:
            return self.w1(y)
        raise ValueError(f"regime must be 0 or 1, got {alpha!r}")

    def value(self, x1, x2, alpha: int):
        return value(self, x1, x2, alpha)


def _piecewise(y: np.ndarray, below: np.ndarray, f_below, f_above):
    # each branch only sees its own points; the other one may overflow there
    out = np.empty(y.shape)
    out[below] = f_below(y[below])
    out[~below] = f_above(y[~below])
    return out[()] if out.ndim == 0 else out


def _check_ratio(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise NonpositiveRatio("price ratio y must be > 0")
    return y


def w0(solution: Solution, y):
    return solution.w0(y)


def w1(solution: Solution, y):
    return solution.w1(y)


def value(solution: Solution, x1, x2, alpha: int):
    """Discounted value ``x1 * w_alpha(x2 / x1)`` of holding the pair."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(~(x1 > 0)) or np.any(~(x2 > 0)):
        raise NonpositivePrice("prices must be > 0")
    out = x1 * solution.w(alpha, x2 / x1)
    return out[()] if np.ndim(out) == 0 else out


def solve(params: ModelParams, *, check: bool = True) -> Solution:
    """Threshold and coefficients for ``params``.

    ``check=False`` skips validation, for limit studies outside the
    admissible set.
    """
    if check:
        params = validate(params)
    coeffs = derive_coeffs(params)
    roots = compute_roots(coeffs, params)
    k = threshold_k(roots, coeffs)
    return Solution(k=k, scaled=fitted_coefficients(roots, coeffs), roots=roots, coeffs=coeffs)


def k0_limit(params: ModelParams) -> float:
    """Threshold as ``lambda0 -> inf``, i.e. without trading constraints."""
    coeffs = derive_coeffs(params)
    d1 = compute_roots(coeffs, params).delta1
    return -d1 / (1.0 - d1) * coeffs.beta_s / coeffs.beta_b


def k1_limit(params: ModelParams) -> float:
    """Threshold as ``lambda1 -> inf`` with ``lambda0`` held fixed."""
    coeffs = derive_coeffs(params)
    r = compute_roots(coeffs, params)
    b0, b1 = _b0_b1(coeffs)
    d1, g2 = r.delta1, r.gamma2
    return (-d1 + g2 * b0) / (1.0 - d1 + (g2 - 1.0) * b1) * coeffs.beta_s / coeffs.beta_b


def bracket(solution: Solution) -> tuple[float, float]:
    """Open interval that must contain ``k`` for ``C1, C3 > 0``."""
    r, c = solution.roots, solution.coeffs
    scale = c.beta_s / c.beta_b
    return -r.delta1 / (1.0 - r.delta1) * scale, -r.delta3 / (1.0 - r.delta3) * scale


def solution_record(solution: Solution, params: ModelParams) -> dict:
    r = solution.roots
    c1, c2, c3 = solution.C1, solution.C2, solution.C3
    return {
        "k": solution.k,
        "C1": c1,
        "C2": c2 if math.isfinite(c2) else None,
        "C3": c3,
        "C1_k_delta1": solution.scaled.c1k,
        "C2_k_gamma2": solution.scaled.c2k,
        "C3_k_delta3": solution.scaled.c3k,
        "roots": {
            "delta1": r.delta1, "delta2": r.delta2, "delta3": r.delta3,
            "delta4": r.delta4, "gamma1": r.gamma1, "gamma2": r.gamma2,
        },
        "k0": k0_limit(params),
        "k1": k1_limit(params),
    }
