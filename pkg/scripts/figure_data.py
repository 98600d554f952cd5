"""Write the data behind the value-function, limit-curve and surface plots.

    python scripts/figure_data.py OUTDIR
"""
import argparse
from pathlib import Path

from regime_stop.closed_form import solve
from regime_stop.model import REFERENCE_PARAMS
from regime_stop.studies import asymptotic_curves, function_profiles, rows_to_csv, surface


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)

    sol = solve(REFERENCE_PARAMS)
    files = {
        "value_profiles.csv": rows_to_csv(function_profiles(sol)),
        "rate_limits.csv": rows_to_csv(asymptotic_curves(REFERENCE_PARAMS)),
        "threshold_surface.csv": surface(REFERENCE_PARAMS).to_csv(),
    }
    for name, text in files.items():
        (args.outdir / name).write_text(text)
        print(f"wrote {args.outdir / name} ({text.count(chr(10)) - 1} rows)")


if __name__ == "__main__":
    main()
