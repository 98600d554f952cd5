"""Monte Carlo check of the threshold policy.

Each path carries the log-prices of both stocks and the liquidity regime.
Regime sojourns are exponential; between events the log-prices move by
exact Gaussian increments. While trading is open the ratio ``y = x2 / x1``
is inspected on a grid of step ``h`` that restarts at every opening, and
the position is closed at the first inspected instant with ``y <= k``.
Paths still open at the horizon score zero.

Stepping one grid cell at a time costs ~10^5 draws per path, so the
sampler jumps several cells at once whenever the chance that the
continuous path reaches the barrier inside the jump is below
``skip_eps`` (default ``SKIP_EPS``). The endpoint of a jump is still drawn exactly; only the skipped interior
inspections are assumed not to trigger. The expected number of such jumps
per path times ``skip_eps`` is reported as ``skip_probability_bound``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numba
import numpy as np

from .closed_form import solve
from .model import ModelParams, derive_coeffs, validate

SKIP_EPS = 1e-12
BLOCK_SIZE = 1 << 15


class InvalidHorizon(ValueError):
    pass


class InvalidThreshold(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    x1_0: float = 1.0
    x2_0: float = 1.0
    alpha_0: int = 1
    paths: int = 100_000
    horizon: float = 20.0
    seed: int = 0
    monitor_step: float = 1e-4
    threshold_override: float | None = None
    skip_eps: float = SKIP_EPS  # 0 inspects every grid point

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidHorizon(f"horizon must be positive and finite, got {self.horizon!r}")
        if not (self.x1_0 > 0 and self.x2_0 > 0):
            raise ValueError("initial prices must be > 0")
        if self.alpha_0 not in (0, 1):
            raise ValueError("alpha_0 must be 0 or 1")
        if not self.monitor_step > 0:
            raise ValueError("monitor_step must be > 0")
        if not 0.0 <= self.skip_eps < 1.0:
            raise ValueError("skip_eps must lie in [0, 1)")
        if self.threshold_override is not None and not self.threshold_override > 0:
            raise InvalidThreshold(f"threshold must be > 0, got {self.threshold_override!r}")


@dataclass
class SimReport:
    estimate: float
    std_error: float
    stopped_fraction: float
    truncation_bound: float
    closed_form_value: float
    threshold: float
    paths: int
    monitor_step: float
    skip_probability_bound: float

    @property
    def error(self) -> float:
        return abs(self.estimate - self.closed_form_value)

    @property
    def error_budget(self) -> float:
        return 3.0 * self.std_error + self.truncation_bound

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PathRecords:
    """Per-path outcomes, one column per threshold (largest threshold first)."""

    thresholds: np.ndarray
    payoff: np.ndarray
    tau: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    skips: np.ndarray = field(repr=False)


def truncation_bound(params: ModelParams, x1_0: float, horizon: float) -> float:
    """Bound on the discounted payoff forfeited by scoring unstopped paths as 0."""
    return (1.0 - params.K) * x1_0 * math.exp(-(params.rho - params.mu1) * horizon)


def _worker_count() -> int:
    raw = os.environ.get("REGIME_STOP_THREADS", "0")
    n = int(raw) if raw.strip() else 0
    return n if n > 0 else (os.cpu_count() or 1)


@numba.njit(cache=True, nogil=True)
def _log_step(lx1, lx2, dt, m1, m2, s11, s12, s21, s22, z1, z2):
    sq = math.sqrt(dt)
    return (
        lx1 + m1 * dt + sq * (s11 * z1 + s12 * z2),
        lx2 + m2 * dt + sq * (s21 * z1 + s22 * z2),
    )


@numba.njit(cache=True, nogil=True)
def _max_skip(dist, nu_minus, vol, z):
    """Longest duration over which P(min of ratio log drops by dist) <= eps.

    Uses P(min_{s<=t} (nu s + vol W_s) <= -d) <= 2 Phi(-(d - nu_minus t) / (vol sqrt t)).
    """
    if nu_minus > 0.0:
        u = (-vol * z + math.sqrt(vol * vol * z * z + 4.0 * nu_minus * dist)) / (2.0 * nu_minus)
    else:
        u = dist / (vol * z)
    return u * u


@numba.njit(cache=True, nogil=True)
def _simulate_block(
    rng, n, lx1_0, lx2_0, alpha_0, log_k, horizon, h,
    m1, m2, s11, s12, s21, s22, lam0, lam1, rho, beta_s, beta_b,
    nu_minus, vol, z_eps,
    payoff, tau, x1_out, x2_out, skips,
):
    n_thr = log_k.shape[0]
    for i in range(n):
        for j in range(n_thr):
            payoff[i, j] = 0.0
            tau[i, j] = np.inf
            x1_out[i, j] = 0.0
            x2_out[i, j] = 0.0
        lx1 = lx1_0
        lx2 = lx2_0
        alpha = alpha_0
        t_entry = 0.0
        rate = lam1 if alpha == 1 else lam0
        end = min(rng.exponential(1.0 / rate), horizon)
        step = 0  # inspections since t_entry
        nxt = 0  # first threshold not yet triggered
        n_skip = 0
        while True:
            if alpha == 1:
                t = t_entry + step * h
                ly = lx2 - lx1
                while nxt < n_thr and ly <= log_k[nxt]:
                    disc = math.exp(-rho * t)
                    x1 = math.exp(lx1)
                    x2 = math.exp(lx2)
                    payoff[i, nxt] = disc * (beta_s * x1 - beta_b * x2)
                    tau[i, nxt] = t
                    x1_out[i, nxt] = x1
                    x2_out[i, nxt] = x2
                    nxt += 1
                if nxt == n_thr:
                    break
                remaining = int(math.ceil((end - t_entry) / h)) - 1 - step
                cells = 0
                if z_eps > 0.0:
                    cells = int(_max_skip(ly - log_k[nxt], nu_minus, vol, z_eps) / h)
                if cells >= remaining:
                    # no inspection left in this sojourn can fire
                    if remaining > 0:
                        n_skip += 1
                    lx1, lx2 = _log_step(lx1, lx2, end - t, m1, m2, s11, s12, s21, s22,
                                         rng.standard_normal(), rng.standard_normal())
                    if end >= horizon:
                        break
                    alpha = 0
                    t_entry = end
                    end = min(end + rng.exponential(1.0 / lam0), horizon)
                else:
                    if cells < 1:
                        cells = 1
                    elif cells > 1:
                        n_skip += 1
                    lx1, lx2 = _log_step(lx1, lx2, cells * h, m1, m2, s11, s12, s21, s22,
                                         rng.standard_normal(), rng.standard_normal())
                    step += cells
            else:
                lx1, lx2 = _log_step(lx1, lx2, end - t_entry, m1, m2, s11, s12, s21, s22,
                                     rng.standard_normal(), rng.standard_normal())
                if end >= horizon:
                    break
                alpha = 1
                t_entry = end
                step = 0
                end = min(end + rng.exponential(1.0 / lam1), horizon)
        skips[i] = n_skip


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def simulate_paths(config: SimConfig, thresholds) -> PathRecords:
    """Run ``config.paths`` paths, recording the outcome for every threshold.

    All thresholds see the same paths. Output does not depend on the
    number of worker threads.
    """
    params = validate(config.params)
    thr = np.sort(np.asarray(thresholds, dtype=float).ravel())[::-1].copy()
    if thr.size == 0 or np.any(~(thr > 0)) or np.any(~np.isfinite(thr)):
        raise InvalidThreshold(f"thresholds must be positive and finite, got {thresholds!r}")
    c = derive_coeffs(params)
    m1 = params.mu1 - 0.5 * c.a11
    m2 = params.mu2 - 0.5 * c.a22
    vol = math.sqrt(2.0 * c.sigma)
    nu_minus = max(-(m2 - m1), 0.0)
    z_eps = -NormalDist().inv_cdf(config.skip_eps / 2.0) if config.skip_eps > 0 else -1.0
    log_k = np.log(thr)

    n = config.paths
    n_thr = thr.size
    payoff = np.empty((n, n_thr))
    tau = np.empty((n, n_thr))
    x1 = np.empty((n, n_thr))
    x2 = np.empty((n, n_thr))
    skips = np.empty(n, dtype=np.int64)

    def run(block: int) -> None:
        lo = block * BLOCK_SIZE
        hi = min(lo + BLOCK_SIZE, n)
        _simulate_block(
            _block_rng(config.seed, block), hi - lo,
            math.log(config.x1_0), math.log(config.x2_0), config.alpha_0, log_k,
            config.horizon, config.monitor_step,
            m1, m2, params.sigma11, params.sigma12, params.sigma21, params.sigma22,
            params.lambda0, params.lambda1, params.rho, c.beta_s, c.beta_b,
            nu_minus, vol, z_eps,
            payoff[lo:hi], tau[lo:hi], x1[lo:hi], x2[lo:hi], skips[lo:hi],
        )

    blocks = range((n + BLOCK_SIZE - 1) // BLOCK_SIZE)
    workers = min(_worker_count(), len(blocks))
    if workers <= 1:
        for b in blocks:
            run(b)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, blocks))
    return PathRecords(thr, payoff, tau, x1, x2, skips)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    # fsum is exactly rounded, so the result does not depend on summation
    # order; shifting by x[0] makes a constant sample come out exact
    n = x.size
    mean = float(x[0]) + math.fsum(x - x[0]) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def simulate_policy(config: SimConfig) -> SimReport:
    params = validate(config.params)
    sol = solve(params)
    k = sol.k if config.threshold_override is None else config.threshold_override
    rec = simulate_paths(config, [k])
    est, se = _mean_se(rec.payoff[:, 0])
    return SimReport(
        estimate=est,
        std_error=se,
        stopped_fraction=float(np.mean(np.isfinite(rec.tau[:, 0]))),
        truncation_bound=truncation_bound(params, config.x1_0, config.horizon),
        closed_form_value=float(sol.value(config.x1_0, config.x2_0, config.alpha_0)),
        threshold=k,
        paths=config.paths,
        monitor_step=config.monitor_step,
        skip_probability_bound=float(np.mean(rec.skips)) * config.skip_eps,
    )


@dataclass
class ConvergenceCheck:
    coarse: SimReport
    fine: SimReport

    @property
    def shift(self) -> float:
        return abs(self.coarse.estimate - self.fine.estimate)

    @property
    def shift_std_error(self) -> float:
        """Standard error of the shift; the two runs draw independent paths."""
        return math.hypot(self.coarse.std_error, self.fine.std_error)

    @property
    def within_one_se(self) -> bool:
        return self.shift <= self.shift_std_error

    def as_dict(self) -> dict:
        return {
            "coarse": self.coarse.as_dict(),
            "fine": self.fine.as_dict(),
            "shift": self.shift,
            "shift_std_error": self.shift_std_error,
        }


def monitor_convergence(config: SimConfig) -> ConvergenceCheck:
    """Estimate at step ``h`` and ``h / 2`` from the same seed."""
    fine = SimConfig(**{**_config_fields(config), "monitor_step": config.monitor_step / 2.0})
    return ConvergenceCheck(simulate_policy(config), simulate_policy(fine))


def _config_fields(config: SimConfig) -> dict:
    return {f: getattr(config, f) for f in SimConfig.__dataclass_fields__}


@dataclass
class DominanceRow:
    multiplier: float
    threshold: float
    estimate: float
    std_error: float
    diff_vs_optimal: float
    paired_std_error: float


def policy_dominance(config: SimConfig, multipliers) -> list[DominanceRow]:
    """Estimates for thresholds ``m * k`` on common paths, with differences
    against ``m = 1`` and their paired standard errors."""
    params = validate(config.params)
    k = solve(params).k if config.threshold_override is None else config.threshold_override
    mults = [float(m) for m in multipliers]
    if any(not m > 0 for m in mults):
        raise InvalidThreshold("multipliers must be > 0")
    grid = sorted(set(mults) | {1.0}, reverse=True)
    rec = simulate_paths(config, [m * k for m in grid])
    col = {m: j for j, m in enumerate(grid)}
    base = rec.payoff[:, col[1.0]]
    rows = []
    for m in mults:
        x = rec.payoff[:, col[m]]
        est, se = _mean_se(x)
        d, dse = _mean_se(base - x)
        rows.append(DominanceRow(m, m * k, est, se, d, dse))
    return rows


# -- samplers exposed for statistical checks -------------------------------

@numba.njit(cache=True, nogil=True)
def _increments(rng, n, dt, m1, m2, s11, s12, s21, s22, out):
    for i in range(n):
        out[i, 0], out[i, 1] = _log_step(0.0, 0.0, dt, m1, m2, s11, s12, s21, s22,
                                         rng.standard_normal(), rng.standard_normal())


def sample_log_increments(params: ModelParams, dt: float, n: int, seed: int) -> np.ndarray:
    """``n`` draws of the log-price increment over ``dt``, shape ``(n, 2)``."""
    c = derive_coeffs(params)
    out = np.empty((n, 2))
    _increments(_block_rng(seed, 0), n, dt,
                params.mu1 - 0.5 * c.a11, params.mu2 - 0.5 * c.a22,
                params.sigma11, params.sigma12, params.sigma21, params.sigma22, out)
    return out


@numba.njit(cache=True, nogil=True)
def _open_time(rng, alpha_0, lam0, lam1, horizon):
    t = 0.0
    alpha = alpha_0
    acc = 0.0
    while t < horizon:
        rate = lam1 if alpha == 1 else lam0
        end = min(t + rng.exponential(1.0 / rate), horizon)
        if alpha == 1:
            acc += end - t
        t = end
        alpha = 1 - alpha
    return acc


def open_time_fractions(lambda0: float, lambda1: float, horizon: float, n: int, seed: int,
                        alpha_0: int = 0) -> np.ndarray:
    """Fraction of ``[0, horizon]`` spent in the open regime, per path."""
    rng = _block_rng(seed, 0)
    return np.array([_open_time(rng, alpha_0, lambda0, lambda1, horizon) / horizon for _ in range(n)])


def simulate_prices(params: ModelParams, n_steps: int, dt: float, seed: int,
                    x1_0: float = 1.0, x2_0: float = 1.0) -> np.ndarray:
    """Price pair on an equally spaced grid, shape ``(n_steps + 1, 2)``."""
    inc = sample_log_increments(params, dt, n_steps, seed)
    logp = np.vstack([[math.log(x1_0), math.log(x2_0)], np.cumsum(inc, axis=0) + [math.log(x1_0), math.log(x2_0)]])
    return np.exp(logp)
