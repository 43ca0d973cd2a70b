"""Posterior predictive loss for comparing fitted models."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lorenz import get_family
from .model import GroupedSeries

__all__ = ["PplResult", "predictive_moments", "ppl_score", "evaluate_ppl"]


@dataclass
class PplResult:
    label: str
    E: np.ndarray  # (T, K) predictive means
    V: np.ndarray  # (T, K) predictive variances
    score_r1: float  # ln PPL with r = 1
    score_rinf: float  # ln PPL with r = infinity


def predictive_moments(draws, data: GroupedSeries, family=None, chunk: int = 500):
    """Mean and variance of the posterior predictive distribution of every share.

    ``draws`` is any fit result exposing latent draws ``u`` (N, T, d), a
    ``log_lambda`` array (N, T) and a ``family`` tag. Given a draw the share
    q_tk has mean m = Delta L_k and variance m (1 - m) / (lambda_t + 1); the
    predictive variance adds the spread of m across draws.
    """
    fam = get_family(family if family is not None else draws.family)
    u = np.asarray(draws.u, dtype=float)
    log_lam = np.asarray(draws.log_lambda, dtype=float)
    if u.ndim != 3 or u.shape[0] == 0:
        raise ValueError("predictive moments need at least one posterior draw")
    N, T, _ = u.shape
    if T != data.T:
        raise ValueError(f"draws cover {T} periods but the data have {data.T}")
    s1 = np.zeros((T, data.K))
    s2 = np.zeros((T, data.K))
    cv = np.zeros((T, data.K))
    for a in range(0, N, chunk):
        m, valid = fam.increments(fam.from_latent(u[a:a + chunk]), data.p_grid)
        if not np.all(valid):
            raise ValueError("posterior draws contain invalid Lorenz curves")
        # m (1 - m) / (lambda + 1) without overflow for huge lambda
        w = 1.0 / (np.exp(log_lam[a:a + chunk]) + 1.0)
        s1 += m.sum(axis=0)
        s2 += (m * m).sum(axis=0)
        cv += (m * (1.0 - m) * w[..., None]).sum(axis=0)
    E = s1 / N
    between = np.maximum(s2 / N - E * E, 0.0)
    return E, cv / N + between


def ppl_score(E, V, data, r=1) -> float:
    """ln of sum V + r / (r + 1) * sum (q - E)^2; r may be ``math.inf``.

    Returns -inf for a perfect fit with zero predictive variance.
    """
    q = data.q if isinstance(data, GroupedSeries) else np.asarray(data, dtype=float)
    E = np.asarray(E, dtype=float)
    V = np.asarray(V, dtype=float)
    if E.shape != q.shape or V.shape != q.shape:
        raise ValueError("E, V and the data must have the same shape")
    if isinstance(r, str):
        r = math.inf if r.lower() in ("inf", "infinity") else float(r)
    if not r > 0:
        raise ValueError("r must be positive")
    w = 1.0 if math.isinf(r) else r / (r + 1.0)
    total = float(np.sum(V) + w * np.sum((q - E) ** 2))
    return math.log(total) if total > 0 else -math.inf


def evaluate_ppl(draws, data: GroupedSeries, label: str | None = None) -> PplResult:
    E, V = predictive_moments(draws, data)
    label = label or getattr(draws, "family", "model")
    return PplResult(label, E, V, ppl_score(E, V, data, 1), ppl_score(E, V, data, math.inf))
