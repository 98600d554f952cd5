"""Simulate daily closes from the reference parameters, fit them back and re-solve."""
import argparse

from regime_stop.calibration import calibrate, fits_within, round_trip_zscores, synthetic_series
from regime_stop.closed_form import solve
from regime_stop.model import REFERENCE_PARAMS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--years", type=float, default=15)
    ap.add_argument("--seeds", type=int, nargs="+", default=[7])
    args = ap.parse_args()

    p = REFERENCE_PARAMS
    k_true = solve(p).k
    for seed in args.seeds:
        res = calibrate(synthetic_series(p, args.years, seed))
        z = round_trip_zscores(res, p)
        k = solve(res.to_params(p.rho, p.lambda0, p.lambda1, p.K)).k
        zs = " ".join(f"{n}={v:+.2f}" for n, v in z.items())
        print(f"seed={seed:<4d} {zs}  within3={fits_within(z)}  k={k:.4f} (true {k_true:.4f})")


if __name__ == "__main__":
    main()
