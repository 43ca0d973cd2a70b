"""Data files, run directories and the command-line interface.

Subcommands: ``simulate``, ``fit``, ``fit-separate``, ``compare`` and
``report``. Every output is a CSV or a flat ``key=value`` text file.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import SeparateConfig, crude_gini, fit_separate_series
from .lorenz import FAMILIES, get_family
from .mcmc import ChainAbort, SamplerConfig, run_chain
from .metrics import Gini, LorenzAt, credible_interval, functional_draws, parameter_summary, period_summary, write_rows
from .model import DataError, GroupedSeries, PriorSpec, equal_grid
from .ppl import evaluate_ppl, ppl_score
from .simulation import SimConfig, generate_dataset

__all__ = [
    "ParseError",
    "RunConfig",
    "load_grouped_csv",
    "write_grouped_csv",
    "read_keyvalue",
    "write_keyvalue",
    "sim_config_from_file",
    "fit_run",
    "fit_separate_run",
    "compare_runs",
    "report_run",
    "main",
]

log = logging.getLogger("lorenz_ssm")

LORENZ_POINTS = (0.2, 0.4, 0.6, 0.8)


class ParseError(ValueError):
    def __init__(self, path, row, col, message):
        loc = f"{path}: row {row}" + (f", column {col}" if col is not None else "")
        super().__init__(f"{loc}: {message}")
        self.row, self.col = row, col


# ---------------------------------------------------------------------------
# grouped data files

def _parse_float(text, path, row, col):
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, row, col, f"cannot parse {text!r} as a number") from None


def load_grouped_csv(path) -> GroupedSeries:
    """Read ``period,n,q1..qK`` (shares) or ``period,n,y1..yK`` (cumulative).

    Lines starting with ``#`` are comments; ``#p=p0,...,pK`` sets the
    population grid (default: equal groups). Cumulative rows are recognised
    by a ``y`` column prefix, or by every row being nondecreasing and ending
    at 1.
    """
    path = Path(path)
    p_grid = None
    header = None
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                body = s[1:].strip()
                if body.lower().startswith("p="):
                    vals = [v for v in body[2:].split(",") if v.strip()]
                    p_grid = np.array([_parse_float(v, path, lineno, i + 1) for i, v in enumerate(vals)])
                continue
            cells = next(csv.reader([s]))
            if header is None:
                header = [c.strip().lower() for c in cells]
                if len(header) < 3 or header[0] != "period" or header[1] != "n":
                    raise ParseError(path, lineno, None, "header must be period,n,q1,...,qK or period,n,y1,...,yK")
                continue
            if len(cells) != len(header):
                raise ParseError(path, lineno, None, f"expected {len(header)} fields, found {len(cells)}")
            rows.append((lineno, cells))
    if header is None or not rows:
        raise ParseError(path, 1, None, "no data rows")
    K = len(header) - 2
    prefixes = {h[0] for h in header[2:]}
    labels, n, vals = [], [], np.empty((len(rows), K))
    for i, (lineno, cells) in enumerate(rows):
        labels.append(cells[0].strip())
        nv = _parse_float(cells[1], path, lineno, 2)
        if nv != int(nv) or nv < 1:
            raise ParseError(path, lineno, 2, f"sample size must be a positive integer, got {cells[1]!r}")
        n.append(int(nv))
        for k in range(K):
            vals[i, k] = _parse_float(cells[k + 2], path, lineno, k + 3)

    if prefixes == {"y"}:
        cumulative = True
    elif prefixes == {"q"}:
        cumulative = False
    else:
        cumulative = K > 1 and bool(np.all(np.diff(vals, axis=1) >= 0) and np.allclose(vals[:, -1], 1.0, atol=1e-9))
    q = np.diff(vals, axis=1, prepend=0.0) if cumulative else vals
    if p_grid is None:
        p_grid = equal_grid(K)
    return GroupedSeries(q, np.array(n), p_grid, labels)


def write_grouped_csv(path, data: GroupedSeries, cumulative: bool = False, with_grid: bool = True):
    with open(path, "w", newline="") as fh:
        if with_grid:
            fh.write("#p=" + ",".join(repr(float(p)) for p in data.p_grid) + "\n")
        w = csv.writer(fh)
        pref = "y" if cumulative else "q"
        w.writerow(["period", "n"] + [f"{pref}{k + 1}" for k in range(data.K)])
        body = data.cumulative if cumulative else data.q
        for lab, nt, row in zip(data.labels, data.n, body):
            w.writerow([lab, int(nt)] + [repr(float(v)) for v in row])


def read_table(path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    out: dict[str, list[str]] = {k: [] for k in reader.fieldnames or []}
    for row in reader:
        for k, v in row.items():
            out[k].append(v)
    return out


# ---------------------------------------------------------------------------
# key=value files

def read_keyvalue(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise ParseError(path, lineno, None, f"expected key=value, got {s!r}")
            k, v = s.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_keyvalue(path, values: dict):
    with open(path, "w") as fh:
        for k, v in values.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                v = ",".join(str(x) for x in v)
            fh.write(f"{k}={v}\n")


def _coerce(value: str, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        if ":" in value and "," not in value:
            a, b, *st = (int(x) for x in value.split(":"))
            return tuple(range(a, b + 1, st[0] if st else 1))
        return tuple(type(current[0])(x) if current else float(x) for x in value.split(","))
    if current is None:
        return None if value.lower() == "none" else int(value)
    return value


def _apply(obj, values: dict, path="config"):
    names = {f.name: f for f in fields(obj)}
    changes = {}
    for k, v in values.items():
        if k not in names:
            raise ValueError(f"{path}: unknown setting {k!r} (known: {', '.join(names)})")
        try:
            changes[k] = _coerce(v, getattr(obj, k))
        except ValueError as e:
            raise ValueError(f"{path}: bad value for {k}: {e}") from None
    return replace(obj, **changes)


def sim_config_from_file(path) -> SimConfig:
    """``key=value`` simulation settings; ``preset=table1`` or ``preset=text``
    selects a base configuration."""
    kv = read_keyvalue(path)
    preset = kv.pop("preset", "table1").lower()
    if preset not in ("table1", "text"):
        raise ValueError(f"{path}: unknown preset {preset!r}")
    base = SimConfig.table1() if preset == "table1" else SimConfig.text_preset()
    return _apply(base, kv, str(path))


# ---------------------------------------------------------------------------
# runs

@dataclass
class RunConfig:
    data: str
    family: str = "SM"
    kind: str = "AR"
    prior: str = "default"
    out: str = "run"
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    truth: str | None = None
    u_thin: int = 10

    def __post_init__(self):
        self.family = get_family(self.family).tag
        self.kind = self.kind.upper()
        if self.kind not in ("AR", "RW"):
            raise ValueError(f"process must be ar or rw, got {self.kind!r}")
        if self.prior not in ("default", "diffuse"):
            raise ValueError(f"prior must be default or diffuse, got {self.prior!r}")
        if not Path(self.data).exists():
            raise FileNotFoundError(f"data file {self.data} does not exist")

    def priors(self, d: int) -> PriorSpec:
        return PriorSpec.default(d) if self.prior == "default" else PriorSpec.diffuse(d)


def _load_truth(path, T):
    if path is None:
        return None
    tab = read_table(path)
    if len(tab.get("period", [])) != T:
        raise DataError(f"truth file {path} has {len(tab.get('period', []))} periods, data have {T}")
    return {k: np.array(v, dtype=float) for k, v in tab.items() if k != "period"}


def _functional_summaries(fit, data, out: Path, truth):
    g = functional_draws(fit, what=Gini())
    write_rows(out / "gini.csv", period_summary(g, data.labels, truth=None if truth is None else truth.get("gini")))
    rows = []
    for p in LORENZ_POINTS:
        v = functional_draws(fit, what=LorenzAt(p))
        tr = None if truth is None else truth.get(f"L{p}")
        for r in period_summary(v, data.labels, truth=tr):
            rows.append({"p": p, **r})
    write_rows(out / "lorenz.csv", rows)
    write_rows(out / "lambda.csv", period_summary(np.asarray(fit.log_lambda), data.labels))


def _write_predictive(path, data, E, V):
    rows = []
    for t, lab in enumerate(data.labels):
        for k in range(data.K):
            rows.append({"period": lab, "k": k + 1, "q": data.q[t, k], "E": E[t, k], "V": V[t, k]})
    write_rows(path, rows)


def _write_u_snapshots(path, u, log_lam, labels, thin):
    d = u.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "period"] + [f"u{j + 1}" for j in range(d)] + ["log_lambda"])
        for i in range(0, u.shape[0], thin):
            for t, lab in enumerate(labels):
                w.writerow([i, lab] + [repr(float(x)) for x in u[i, t]] + [repr(float(log_lam[i, t]))])


def fit_run(rc: RunConfig) -> Path:
    """State-space fit; writes draws, summaries and predictive moments."""
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_grouped_csv(rc.data)
    fam = get_family(rc.family)
    cfg = replace(rc.sampler, rng_seed=rc.seed)
    priors = rc.priors(fam.dim)
    truth = _load_truth(rc.truth, data.T)
    t0 = time.perf_counter()
    draws = run_chain(data, fam, rc.kind, priors, cfg)
    elapsed = time.perf_counter() - t0

    d = fam.dim
    cols = {}
    if rc.kind == "AR":
        cols.update({f"mu{j + 1}": draws.mu[:, j] for j in range(d)})
        cols.update({f"rho{j + 1}": draws.rho[:, j] for j in range(d)})
    cols.update({f"tau2_{j + 1}": draws.tau2[:, j] for j in range(d)})
    cols["psi"] = draws.psi
    with open(out / "draws.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw"] + list(cols))
        for i in range(draws.n_draws):
            w.writerow([i] + [repr(float(c[i])) for c in cols.values()])
    _write_u_snapshots(out / "u_draws.csv", draws.u, draws.log_lambda, data.labels, rc.u_thin)

    named = {}
    if rc.kind == "AR":
        named.update({f"mu{j + 1}": draws.mu[:, j] for j in range(d)})
        named.update({f"rho{j + 1}": draws.rho[:, j] for j in range(d)})
    named.update({f"tau{j + 1}": np.sqrt(draws.tau2[:, j]) for j in range(d)})
    named["psi"] = draws.psi
    true_eta = _truth_meta(rc.truth).get("eta") if rc.truth else None
    write_rows(out / "summary.csv", parameter_summary(named, true_eta))
    _functional_summaries(draws, data, out, truth)
    res = evaluate_ppl(draws, data, f"{fam.tag}-{rc.kind}")
    _write_predictive(out / "predictive.csv", data, res.E, res.V)
    meta = {"method": "state-space", "label": res.label, "family": fam.tag, "process": rc.kind,
            "data": os.path.abspath(rc.data), "prior": rc.prior, "seed": rc.seed,
            "n_burnin": cfg.n_burnin, "n_draws": cfg.n_draws, "seconds": f"{elapsed:.1f}",
            "ln_ppl_r1": res.score_r1, "ln_ppl_rinf": res.score_rinf}
    meta.update({f"accept_{k}": v for k, v in draws.acceptance.items()})
    write_keyvalue(out / "run.txt", meta)
    return out


def fit_separate_run(rc: RunConfig, sep: SeparateConfig | None = None) -> Path:
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_grouped_csv(rc.data)
    fam = get_family(rc.family)
    sep = replace(sep or SeparateConfig(), rng_seed=rc.seed)
    truth = _load_truth(rc.truth, data.T)
    t0 = time.perf_counter()
    fit = fit_separate_series(data, fam, rc.priors(fam.dim), sep)
    elapsed = time.perf_counter() - t0
    _write_u_snapshots(out / "u_draws.csv", fit.u, fit.log_lambda, data.labels, rc.u_thin)
    _functional_summaries(fit, data, out, truth)
    write_rows(out / "crude_gini.csv", [{"period": lab, "gini": g}
                                        for lab, g in zip(data.labels, crude_gini(data.q, data.p_grid))])
    res = evaluate_ppl(fit, data, f"{fam.tag}-DIR")
    _write_predictive(out / "predictive.csv", data, res.E, res.V)
    write_keyvalue(out / "run.txt", {
        "method": "separate", "label": res.label, "family": fam.tag, "process": "none",
        "data": os.path.abspath(rc.data), "prior": rc.prior, "seed": rc.seed,
        "n_burnin": sep.n_burnin, "n_draws": sep.n_draws, "seconds": f"{elapsed:.1f}",
        "ln_ppl_r1": res.score_r1, "ln_ppl_rinf": res.score_rinf,
        "accept_min": float(fit.acceptance.min()), "accept_median": float(np.median(fit.acceptance))})
    return out


def _truth_meta(path) -> dict:
    """Process parameters stored alongside a truth file, if any."""
    side = Path(path).with_name("truth_params.txt")
    if not side.exists():
        return {}
    kv = read_keyvalue(side)
    eta = {k: float(v) for k, v in kv.items()}
    return {"eta": eta}


def compare_runs(run_dirs, out=None) -> list[dict]:
    """PPL table for fitted runs, ranked by r = 1 score (smaller is better)."""
    rows = []
    for rd in run_dirs:
        rd = Path(rd)
        meta = read_keyvalue(rd / "run.txt")
        tab = read_table(rd / "predictive.csv")
        q = np.array(tab["q"], dtype=float)
        E = np.array(tab["E"], dtype=float)
        V = np.array(tab["V"], dtype=float)
        rows.append({"run": str(rd), "label": meta.get("label", rd.name), "method": meta.get("method", ""),
                     "ln_ppl_r1": ppl_score(E, V, q, 1), "ln_ppl_rinf": ppl_score(E, V, q, math.inf)})
    rows.sort(key=lambda r: r["ln_ppl_r1"])
    for i, r in enumerate(rows, start=1):
        r["rank"] = i
    if out is not None:
        write_rows(out, rows)
    return rows


def report_run(run_dir, truth_path=None, out=None) -> Path:
    """Plot-ready tables: relative bias and CI lengths per functional, share
    trajectories and lambda summaries."""
    rd = Path(run_dir)
    out = Path(out) if out else rd / "report"
    out.mkdir(parents=True, exist_ok=True)
    meta = read_keyvalue(rd / "run.txt")
    method = meta.get("method", "")
    gini = read_table(rd / "gini.csv")
    lor = read_table(rd / "lorenz.csv")
    truth = read_table(truth_path) if truth_path else None

    ci_rows, bias_rows = [], []
    for i, lab in enumerate(gini["period"]):
        ci_rows.append({"method": method, "functional": "gini", "period": lab, "ci_len": float(gini["ci_len"][i])})
        if truth:
            bias_rows.append({"method": method, "functional": "gini", "period": lab,
                              "rel_bias": (float(gini["mean"][i]) - float(truth["gini"][i])) / float(truth["gini"][i])})
    for i, lab in enumerate(lor["period"]):
        name = f"L({lor['p'][i]})"
        ci_rows.append({"method": method, "functional": name, "period": lab, "ci_len": float(lor["ci_len"][i])})
        if truth:
            tr = float(truth[f"L{lor['p'][i]}"][int(truth["period"].index(lab))])
            bias_rows.append({"method": method, "functional": name, "period": lab,
                              "rel_bias": (float(lor["mean"][i]) - tr) / tr})
    write_rows(out / "ci_length.csv", ci_rows)
    if bias_rows:
        write_rows(out / "rel_bias.csv", bias_rows)

    pred = read_table(rd / "predictive.csv")
    write_rows(out / "shares.csv", [{"period": p, "k": k, "observed": q, "fitted": e}
                                    for p, k, q, e in zip(pred["period"], pred["k"], pred["q"], pred["E"])])
    lam = read_table(rd / "lambda.csv")
    write_rows(out / "log_lambda.csv", [{"period": p, "mean": m, "ci_lo": lo, "ci_hi": hi}
                                        for p, m, lo, hi in zip(lam["period"], lam["mean"], lam["ci_lo"], lam["ci_hi"])])
    return out


def simulate_run(cfg: SimConfig, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data, truth = generate_dataset(cfg)
    write_grouped_csv(out / "data.csv", data)
    fam = get_family(cfg.family)
    rows = []
    for t, lab in enumerate(data.labels):
        row = {"period": lab}
        row.update({f"u{j + 1}": truth.u[t, j] for j in range(fam.dim)})
        row.update({name: truth.theta[t, j] for j, name in enumerate(fam.names)})
        row["gini"] = truth.gini[t]
        for p in LORENZ_POINTS:
            row[f"L{p}"] = float(fam.curve(truth.theta[t], p))
        rows.append(row)
    write_rows(out / "truth.csv", rows)
    eta = {}
    for j in range(fam.dim):
        eta[f"mu{j + 1}"] = cfg.mu[j]
        eta[f"rho{j + 1}"] = cfg.rho[j]
        eta[f"tau{j + 1}"] = cfg.tau[j]
    write_keyvalue(out / "truth_params.txt", eta)
    write_keyvalue(out / "sim.txt", {f.name: getattr(cfg, f.name) for f in fields(cfg)})
    return out


# ---------------------------------------------------------------------------
# command line

def _split(text, valid, what):
    items = [x.strip() for x in text.split(",") if x.strip()]
    for x in items:
        if x.upper() not in valid:
            raise ValueError(f"unknown {what} {x!r}; choose from {', '.join(v.lower() for v in valid)}")
    return [x.upper() for x in items]


def _sampler_from_args(args) -> SamplerConfig:
    cfg = SamplerConfig()
    if args.config:
        cfg = _apply(cfg, read_keyvalue(args.config), args.config)
    if args.burnin is not None:
        cfg = replace(cfg, n_burnin=args.burnin)
    if args.draws is not None:
        cfg = replace(cfg, n_draws=args.draws)
    return cfg


def _fit_job(rc: RunConfig):
    return str(fit_run(rc))


def _cmd_simulate(args):
    cfg = sim_config_from_file(args.config) if args.config else SimConfig.table1()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = simulate_run(cfg, args.out)
    print(f"wrote {out / 'data.csv'} and {out / 'truth.csv'}")


def _cmd_fit(args):
    families = _split(args.family, FAMILIES, "family")
    kinds = _split(args.process, ("AR", "RW"), "process")
    cfg = _sampler_from_args(args)
    jobs = []
    for fam in families:
        for kind in kinds:
            sub = args.out if len(families) * len(kinds) == 1 else os.path.join(args.out, f"{fam.lower()}_{kind.lower()}")
            jobs.append(RunConfig(args.data, fam, kind, args.prior, sub, args.seed, cfg, args.truth))
    if args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            done = list(ex.map(_fit_job, jobs))
    else:
        done = [_fit_job(j) for j in jobs]
    for d in done:
        print(f"wrote {d}")


def _cmd_fit_separate(args):
    sep = SeparateConfig()
    if args.config:
        sep = _apply(sep, read_keyvalue(args.config), args.config)
    if args.burnin is not None:
        sep = replace(sep, n_burnin=args.burnin)
    if args.draws is not None:
        sep = replace(sep, n_draws=args.draws)
    fams = _split(args.family, FAMILIES, "family")
    for fam in fams:
        sub = args.out if len(fams) == 1 else os.path.join(args.out, f"{fam.lower()}_dir")
        rc = RunConfig(args.data, fam, "AR", args.prior, sub, args.seed, truth=args.truth)
        print(f"wrote {fit_separate_run(rc, sep)}")


def _cmd_compare(args):
    rows = compare_runs(args.runs, args.out)
    print(f"{'rank':>4}  {'model':<12} {'method':<12} {'ln PPL (r=1)':>14} {'ln PPL (r=inf)':>15}")
    for r in rows:
        print(f"{r['rank']:>4}  {r['label']:<12} {r['method']:<12} {r['ln_ppl_r1']:>14.4f} {r['ln_ppl_rinf']:>15.4f}")


def _cmd_report(args):
    out = report_run(args.run, args.truth, args.out)
    print(f"wrote {out}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lorenz-ssm",
                                 description="State-space Dirichlet models for grouped income shares")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic grouped data set")
    s.add_argument("--config", help="key=value simulation settings")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    def fit_common(p):
        p.add_argument("--data", required=True)
        p.add_argument("--family", default="sm", help="comma-separated: ln,sm,da,ka,or,ra")
        p.add_argument("--prior", choices=("default", "diffuse"), default="default")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--burnin", type=int)
        p.add_argument("--draws", type=int)
        p.add_argument("--config", help="key=value sampler settings")
        p.add_argument("--truth", help="truth.csv from simulate, for coverage columns")
        p.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="fit the state-space model")
    fit_common(f)
    f.add_argument("--process", default="ar", help="comma-separated: ar,rw")
    f.add_argument("--threads", type=int, default=1, help="fits to run concurrently")
    f.set_defaults(func=_cmd_fit)

    fs = sub.add_parser("fit-separate", help="per-period Dirichlet fits")
    fit_common(fs)
    fs.set_defaults(func=_cmd_fit_separate)

    c = sub.add_parser("compare", help="posterior predictive loss table")
    c.add_argument("--runs", nargs="+", required=True)
    c.add_argument("--out", help="CSV path for the table")
    c.set_defaults(func=_cmd_compare)

    r = sub.add_parser("report", help="plot-ready tables for one run")
    r.add_argument("--run", required=True)
    r.add_argument("--truth")
    r.add_argument("--out")
    r.set_defaults(func=_cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ChainAbort as e:
        print(f"error: chain aborted: {e}", file=sys.stderr)
        for k, v in e.payload.items():
            print(f"  {k}: {v}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
