"""Compare per-period Gini interval lengths of the state-space fit with the
period-by-period Dirichlet fit, under both prior settings for mu.

    python scripts/ci_narrowing.py --out runs/ci [--T 100]
"""
import argparse
from pathlib import Path

import numpy as np

from _common import cli, gini_table, simulate


def run(out, T, seed):
    out = Path(out)
    data, _ = simulate(out, T, seed)
    res = {}
    for prior in ("default", "diffuse"):
        cli("fit", "--data", data, "--family", "sm", "--process", "ar", "--prior", prior, "--out", out / f"ss_{prior}")
        cli("fit-separate", "--data", data, "--family", "sm", "--prior", prior, "--out", out / f"dir_{prior}")
        res[prior] = gini_table(out / f"ss_{prior}"), gini_table(out / f"dir_{prior}")
    for prior, ((_, ss), (_, sep)) in res.items():
        print(f"{prior:<8} median CI length: state-space {np.median(ss):.5f}  separate {np.median(sep):.5f}"
              f"  ratio {np.median(sep) / np.median(ss):.1f}")
    shift = np.abs(res["diffuse"][0][0] - res["default"][0][0])
    print(f"state-space Gini mean shift between priors: median {np.median(shift):.5f}, max {shift.max():.5f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/ci")
    ap.add_argument("--T", type=int, default=100)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()
    run(a.out, a.T, a.seed)
