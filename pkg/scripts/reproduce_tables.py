"""Print computed thresholds next to the reference sensitivity tables.

    python scripts/reproduce_tables.py [--csv out.csv]
"""
import argparse
import sys

from regime_stop.studies import rows_to_csv, table_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--csv", help="also write the rows to this file")
    args = ap.parse_args()

    rows = table_comparison()
    print(f"{'table':>5} {'parameter':>11} {'value':>8} {'printed':>8} {'computed':>10} {'diff':>10}")
    for r in rows:
        flag = "" if r["ok"] else "  <-- off"
        print(f"{r['table']:>5} {r['parameter']:>11} {r['value']:>8g} {r['printed']:>8} "
              f"{r['computed']:>10.6f} {r['diff']:>+10.2e}{flag}")
    bad = sum(not r["ok"] for r in rows)
    print(f"\n{len(rows) - bad}/{len(rows)} entries within 5e-5")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rows_to_csv(rows))
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
