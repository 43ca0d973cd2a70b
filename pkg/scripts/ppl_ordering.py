"""Fit LN and SM state-space models (AR and RW) plus the separate Dirichlet
fits to simulated SM data and rank them by posterior predictive loss.

    python scripts/ppl_ordering.py --out runs/ppl [--T 100] [--families sm,ln]
"""
import argparse
from pathlib import Path

from _common import cli, simulate


def run(out, T, seed, families):
    out = Path(out)
    data, _ = simulate(out, T, seed)
    cli("fit", "--data", data, "--family", families, "--process", "ar,rw", "--out", out / "ss")
    cli("fit-separate", "--data", data, "--family", families, "--out", out / "dir")
    fams = families.split(",")
    runs = [out / "ss" / f"{f}_{k}" for f in fams for k in ("ar", "rw")]
    runs += [out / "dir" / f"{f}_dir" for f in fams] if len(fams) > 1 else [out / "dir"]
    cli("compare", "--runs", *runs, "--out", out / "ppl.csv")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/ppl")
    ap.add_argument("--T", type=int, default=100)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--families", default="sm,ln")
    a = ap.parse_args()
    run(a.out, a.T, a.seed, a.families)
