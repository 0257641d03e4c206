"""Run a verdict-matrix suite and print the table.

    python scripts/verdict_matrix.py [--suite FILE] [--threads N] [--out report.json]

Without ``--suite`` the shipped default suite is used.  Exit status is 1 if
any row differs from its declared expectation.
"""
import argparse
import sys
from pathlib import Path

from relbohm.scenario import default_suite_path, load_suite
from relbohm.symmetry import format_matrix, report_json, verdict_matrix


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--suite", type=Path)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("verdict_report.json"))
    args = ap.parse_args()
    rows = load_suite(str(args.suite or default_suite_path()))
    report = verdict_matrix(rows, args.threads)
    print(format_matrix(report))
    args.out.write_text(report_json(report) + "\n")
    print(f"\nreport written to {args.out}")
    return 0 if report["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
