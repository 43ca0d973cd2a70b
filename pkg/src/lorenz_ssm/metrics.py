"""Summaries of posterior draws: functionals, relative bias, credible
intervals and summary tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .lorenz import get_family

__all__ = [
    "Gini",
    "LorenzAt",
    "NaturalParam",
    "functional_draws",
    "relative_bias",
    "credible_interval",
    "parameter_summary",
    "period_summary",
    "write_rows",
]


@dataclass(frozen=True)
class Gini:
    pass


@dataclass(frozen=True)
class LorenzAt:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass(frozen=True)
class NaturalParam:
    j: int


def functional_draws(draws, family=None, what=Gini()) -> np.ndarray:
    """Per-draw, per-period values of a functional, shape (N, T)."""
    fam = get_family(family if family is not None else draws.family)
    theta = fam.from_latent(np.asarray(draws.u, dtype=float))
    if isinstance(what, Gini):
        return fam.gini(theta)
    if isinstance(what, LorenzAt):
        return fam.curve(theta, what.p)
    if isinstance(what, NaturalParam):
        if not 0 <= what.j < fam.dim:
            raise ValueError(f"{fam.tag} has {fam.dim} parameters")
        return theta[..., what.j]
    raise TypeError(f"unknown functional {what!r}")


def relative_bias(estimate, truth):
    est = np.asarray(estimate, dtype=float)
    tr = np.asarray(truth, dtype=float)
    if np.any(tr == 0):
        raise ZeroDivisionError("relative bias is undefined for a zero true value")
    out = (est - tr) / tr
    return float(out) if out.ndim == 0 else out


def credible_interval(draws, level: float = 0.95, axis: int = 0):
    """Equal-tailed interval from linearly interpolated empirical quantiles."""
    x = np.asarray(draws, dtype=float)
    if x.shape[axis] < 100:
        raise ValueError("credible intervals need at least 100 draws")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [a, 1.0 - a], axis=axis, method="linear")
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def parameter_summary(named: dict, truth: dict | None = None, level: float = 0.95) -> list[dict]:
    """One row per scalar chain: mean, sd, CI bounds and inefficiency factor."""
    from .mcmc import inefficiency_factor

    rows = []
    for name, x in named.items():
        x = np.asarray(x, dtype=float)
        lo, hi = credible_interval(x, level)
        try:
            ineff = inefficiency_factor(x)
        except ValueError:
            ineff = float("nan")
        row = {"parameter": name, "mean": x.mean(), "sd": x.std(ddof=1), "ci_lo": lo, "ci_hi": hi,
               "if": ineff}
        if truth is not None and name in truth:
            row["true"] = truth[name]
            row["covered"] = int(lo <= truth[name] <= hi)
        rows.append(row)
    return rows


def period_summary(values, labels, level: float = 0.95, truth=None) -> list[dict]:
    """Posterior mean and CI of a per-period functional (draws in rows)."""
    v = np.asarray(values, dtype=float)
    lo, hi = credible_interval(v, level)
    mean = v.mean(axis=0)
    rows = []
    for t, lab in enumerate(labels):
        row = {"period": lab, "mean": mean[t], "ci_lo": lo[t], "ci_hi": hi[t], "ci_len": hi[t] - lo[t]}
        if truth is not None:
            row["true"] = truth[t]
            row["rel_bias"] = relative_bias(mean[t], truth[t])
        rows.append(row)
    return rows


def write_rows(path, rows: list[dict]):
    if not rows:
        raise ValueError("nothing to write")
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
