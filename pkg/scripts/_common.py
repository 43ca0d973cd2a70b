"""Shared helpers for the experiment scripts."""
from pathlib import Path

import numpy as np

from lorenz_ssm.io_cli import main, read_table


def cli(*args):
    code = main([str(a) for a in args])
    if code != 0:
        raise SystemExit(f"{args[0]} failed with exit code {code}")


def simulate(root, T, seed=0):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / f"sim_{T}.txt"
    cfg.write_text(f"T={T}\nseed={seed}\n")
    cli("simulate", "--config", cfg, "--out", root / f"sim_{T}")
    return root / f"sim_{T}" / "data.csv", root / f"sim_{T}" / "truth.csv"


def gini_table(run):
    tab = read_table(Path(run) / "gini.csv")
    return np.array(tab["mean"], dtype=float), np.array(tab["ci_len"], dtype=float)
