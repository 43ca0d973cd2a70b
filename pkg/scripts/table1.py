"""Simulate the five-class Singh-Maddala series and fit the AR state-space
model, printing posterior summaries next to the true values.

    python scripts/table1.py --out runs/table1 [--T 500] [--burnin 2000] [--draws 10000]
"""
import argparse
import time
from pathlib import Path

from _common import cli, simulate
from lorenz_ssm.io_cli import read_table


def run(out, T, burnin, draws, seed):
    out = Path(out)
    data, truth = simulate(out, T, seed)
    t0 = time.perf_counter()
    cli("fit", "--data", data, "--family", "sm", "--process", "ar", "--truth", truth,
        "--burnin", burnin, "--draws", draws, "--seed", seed, "--out", out / "fit")
    secs = time.perf_counter() - t0
    tab = read_table(out / "fit" / "summary.csv")
    print(f"{'param':<6}{'true':>9}{'mean':>10}{'ci_lo':>10}{'ci_hi':>10}{'IF':>8}  covered")
    for i, p in enumerate(tab["parameter"]):
        print(f"{p:<6}{tab['true'][i]:>9}{float(tab['mean'][i]):>10.4f}{float(tab['ci_lo'][i]):>10.4f}"
              f"{float(tab['ci_hi'][i]):>10.4f}{float(tab['if'][i]):>8.1f}  {tab['covered'][i]}")
    print(f"fit time {secs:.1f}s")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/table1")
    ap.add_argument("--T", type=int, default=500)
    ap.add_argument("--burnin", type=int, default=2000)
    ap.add_argument("--draws", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    run(a.out, a.T, a.burnin, a.draws, a.seed)
