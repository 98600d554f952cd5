"""Simulated value of the threshold rule against the closed-form value.

Runs both starting regimes at monitoring step h and h/2, then the
threshold-multiplier comparison on common paths. A million paths take
well under a minute per run on a laptop; use --paths to go lighter.
"""
import argparse
import json

from regime_stop.model import REFERENCE_PARAMS
from regime_stop.montecarlo import SimConfig, monitor_convergence, policy_dominance


def main():
    ap = argparse.ArgumentParser(description="Monte Carlo check of the closed-form value")
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--horizon", type=float, default=20.0)
    ap.add_argument("--step", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--json", action="store_true", help="dump full reports as JSON")
    args = ap.parse_args()

    out = {"convergence": {}, "dominance": []}
    for alpha in (1, 0):
        cfg = SimConfig(REFERENCE_PARAMS, 1.0, 1.0, alpha, paths=args.paths, horizon=args.horizon,
                        seed=args.seed + alpha, monitor_step=args.step)
        chk = monitor_convergence(cfg)
        out["convergence"][alpha] = chk.as_dict()
        for rep in (chk.coarse, chk.fine):
            budget = 3 * rep.std_error + rep.truncation_bound + chk.shift
            print(f"alpha={alpha} h={rep.monitor_step:g}  est={rep.estimate:.5f} +- {rep.std_error:.1e}"
                  f"  v={rep.closed_form_value:.5f}  |err|={rep.error:.1e}  budget={budget:.1e}"
                  f"  {'ok' if rep.error <= budget else 'OUTSIDE'}")

    cfg = SimConfig(REFERENCE_PARAMS, paths=args.paths, horizon=args.horizon, seed=args.seed + 10)
    print("\nmultiplier  threshold  estimate   diff vs k   paired se")
    for row in policy_dominance(cfg, [1e-6, 0.6, 0.8, 1.0, 1.25, 1.6]):
        out["dominance"].append(vars(row))
        print(f"{row.multiplier:>10g}  {row.threshold:9.5f}  {row.estimate:8.5f}  "
              f"{row.diff_vs_optimal:+10.2e}  {row.paired_std_error:9.1e}")
    if args.json:
        print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
