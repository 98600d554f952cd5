"""Drift and volatility estimates from a pair of daily close series.

Moment matching on log returns: with per-period mean ``m`` and sample
covariance ``C``, the annualized covariance is ``A = C * N`` and the drift
is ``mu_i = m_i * N + A_ii / 2`` (``N`` periods per year). The volatility
matrix reported is the symmetric square root of ``A``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np
from scipy.linalg import eigh

from .model import ModelParams


class CalibrationError(ValueError):
    pass


class TooFewObservations(CalibrationError):
    pass


class NonpositivePrice(CalibrationError):
    pass


class LengthMismatch(CalibrationError):
    pass


class UnorderedDates(CalibrationError):
    pass


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple
    p1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        p1 = np.asarray(self.p1, dtype=float)
        p2 = np.asarray(self.p2, dtype=float)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)
        object.__setattr__(self, "dates", tuple(self.dates))
        if not (len(self.dates) == p1.size == p2.size):
            raise LengthMismatch(f"lengths differ: dates={len(self.dates)}, p1={p1.size}, p2={p2.size}")
        if p1.size < 2:
            raise TooFewObservations("need at least 2 prices")
        bad = np.flatnonzero(~((p1 > 0) & (p2 > 0) & np.isfinite(p1) & np.isfinite(p2)))
        if bad.size:
            raise NonpositivePrice(f"nonpositive or non-finite price at row {int(bad[0])}")
        for i in range(1, len(self.dates)):
            if not self.dates[i - 1] < self.dates[i]:
                raise UnorderedDates(f"dates not strictly increasing at row {i}")

    def __len__(self) -> int:
        return self.p1.size

    def scaled(self, c1: float = 1.0, c2: float = 1.0) -> "PriceSeries":
        return PriceSeries(self.dates, self.p1 * c1, self.p2 * c2)


@dataclass(frozen=True)
class CalibrationResult:
    mu1: float
    mu2: float
    sigma_matrix: np.ndarray
    covariance: np.ndarray
    samples: int
    periods_per_year: float
    mu_std_error: np.ndarray
    covariance_std_error: np.ndarray

    def to_params(self, rho: float, lambda0: float, lambda1: float, K: float) -> ModelParams:
        s = self.sigma_matrix
        return ModelParams(
            mu1=self.mu1, mu2=self.mu2,
            sigma11=float(s[0, 0]), sigma12=float(s[0, 1]),
            sigma21=float(s[1, 0]), sigma22=float(s[1, 1]),
            rho=rho, lambda0=lambda0, lambda1=lambda1, K=K,
        )

    def as_dict(self) -> dict:
        s = self.sigma_matrix
        return {
            "mu1": self.mu1,
            "mu2": self.mu2,
            "sigma11": float(s[0, 0]),
            "sigma12": float(s[0, 1]),
            "sigma21": float(s[1, 0]),
            "sigma22": float(s[1, 1]),
            "covariance": self.covariance.tolist(),
            "samples": self.samples,
            "periods_per_year": self.periods_per_year,
            "mu_std_error": self.mu_std_error.tolist(),
            "covariance_std_error": self.covariance_std_error.tolist(),
        }


def symmetric_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; tiny negative eigenvalues from rounding are clipped."""
    w, v = eigh(a)
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (s + s.T)


def calibrate(series: PriceSeries, periods_per_year: float = 252, min_obs: int = 30) -> CalibrationResult:
    n_prices = len(series)
    if n_prices < min_obs:
        raise TooFewObservations(f"{n_prices} observations, need at least {min_obs}")
    r = np.diff(np.log(np.column_stack([series.p1, series.p2])), axis=0)
    n = r.shape[0]
    m = r.mean(axis=0)
    c = np.cov(r, rowvar=False, ddof=1)
    a = c * periods_per_year
    a = 0.5 * (a + a.T)
    mu = m * periods_per_year + 0.5 * np.diag(a)

    # delta-method errors for Gaussian returns
    mu_se = np.sqrt(np.diag(a) * periods_per_year / n + 0.5 * np.diag(a) ** 2 / (n - 1))
    d = np.diag(a)
    cov_se = np.sqrt((a**2 + np.outer(d, d)) / (n - 1))

    return CalibrationResult(
        mu1=float(mu[0]),
        mu2=float(mu[1]),
        sigma_matrix=symmetric_sqrt(a),
        covariance=a,
        samples=n,
        periods_per_year=float(periods_per_year),
        mu_std_error=mu_se,
        covariance_std_error=cov_se,
    )


def read_csv(source: str | Path | io.TextIOBase) -> PriceSeries:
    """Read ``date,p1,p2`` rows with ISO-8601 dates."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_csv(fh)
    reader = csv.DictReader(source)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["date", "p1", "p2"]:
        raise CalibrationError(f"expected header 'date,p1,p2', got {reader.fieldnames!r}")
    dates, p1, p2 = [], [], []
    for lineno, row in enumerate(reader, 2):
        try:
            dates.append(date.fromisoformat(row["date"].strip()))
            p1.append(float(row["p1"]))
            p2.append(float(row["p2"]))
        except (ValueError, AttributeError) as exc:
            raise CalibrationError(f"line {lineno}: {exc}") from None
    return PriceSeries(tuple(dates), np.array(p1), np.array(p2))


def write_csv(series: PriceSeries, fh: io.TextIOBase) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["date", "p1", "p2"])
    for d, a, b in zip(series.dates, series.p1, series.p2):
        w.writerow([d.isoformat() if hasattr(d, "isoformat") else d, repr(float(a)), repr(float(b))])


def trading_days(start: date, count: int) -> tuple[date, ...]:
    """``count`` consecutive weekdays from ``start``."""
    out = []
    d = start.toordinal()
    while len(out) < count:
        day = date.fromordinal(d)
        if day.weekday() < 5:
            out.append(day)
        d += 1
    return tuple(out)


def synthetic_series(params: ModelParams, years: float, seed: int,
                     periods_per_year: int = 252, start: date = date(1985, 1, 2)) -> PriceSeries:
    """Daily closes of both stocks simulated exactly from ``params``, starting at 1."""
    from .montecarlo import simulate_prices

    steps = int(round(years * periods_per_year))
    prices = simulate_prices(params, steps, 1.0 / periods_per_year, seed)
    return PriceSeries(trading_days(start, steps + 1), prices[:, 0], prices[:, 1])


def round_trip_zscores(result: CalibrationResult, truth: ModelParams) -> dict[str, float]:
    """Estimation error of each drift and covariance entry in standard errors."""
    s = truth.sigma_matrix
    a = s @ s.T
    mu = np.array([truth.mu1, truth.mu2])
    z = {f"mu{i + 1}": float((np.array([result.mu1, result.mu2])[i] - mu[i]) / result.mu_std_error[i]) for i in range(2)}
    for i, j in ((0, 0), (0, 1), (1, 1)):
        z[f"a{i + 1}{j + 1}"] = float((result.covariance[i, j] - a[i, j]) / result.covariance_std_error[i, j])
    return z


def fits_within(zscores: dict[str, float], limit: float = 3.0) -> bool:
    return all(math.isfinite(v) and abs(v) <= limit for v in zscores.values())
