"""End-of-trial MTD recommendation.

Curve-free designs impose the monotone dose-toxicity ordering only at
selection time, via a weighted isotonic regression (pooled adjacent
violators) of the raw per-dose DLT rates.  CRM and SPM select with their
own posterior rules.  Doses never tried, and doses whose posterior
probability of exceeding the target clears the safety threshold, are not
candidates; a safety-terminated trial selects nothing.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .rules import excessive_toxicity_prob


def pava(values: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """Weighted least-squares projection onto non-decreasing sequences."""
    y = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if y.size == 0:
        raise ValueError("empty input")
    if y.shape != w.shape or np.any(w <= 0):
        raise ValueError("weights must be positive and match values")
    # blocks of (mean, weight, count), pooled while out of order
    means = []
    wts = []
    sizes = []
    for yi, wi in zip(y, w):
        means.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), wts.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), wts.pop(), sizes.pop()
            means.append((m1 * w1 + m2 * w2) / (w1 + w2))
            wts.append(w1 + w2)
            sizes.append(s1 + s2)
    out = np.empty_like(y)
    i = 0
    for m, s in zip(means, sizes):
        out[i : i + s] = m
        i += s
    return out


def _lowest_argmin(values: np.ndarray) -> int:
    best = np.min(values)
    return int(np.flatnonzero(values <= best + 1e-12)[0])


def _isotonic_argmin(dist: np.ndarray, phat: np.ndarray, target: float) -> int:
    """Argmin of |phat - target| with the isotonic-selection tie rule:
    pooled blocks create exact ties, and among tied doses the highest one
    is preferred while the estimate sits at or below the target (it is the
    closest to the MTD from below), the lowest otherwise."""
    best = np.min(dist)
    ties = np.flatnonzero(dist <= best + 1e-12)
    below = [z for z in ties if phat[z] <= target + 1e-12]
    return int(max(below)) if below else int(ties[0])


def select_mtd(
    family: str,
    n_vec: Sequence[int],
    m_vec: Sequence[int],
    target: float,
    eps2: float,
    nu: float,
    terminated: bool = False,
    crm_quad=None,
    spm_model=None,
) -> Optional[int]:
    """Recommend the MTD from complete outcomes, or None.

    family: 'boin' | 'keyboard' | 'mtpi2' | 'i3' | 'crm' | 'spm'.
    """
    if terminated:
        return None
    n = np.asarray(n_vec, dtype=float)
    m = np.asarray(m_vec, dtype=float)
    treated = n + m
    candidate = treated > 0
    for z in range(len(n_vec)):
        if candidate[z] and excessive_toxicity_prob(int(n[z]), int(m[z]), target) > nu:
            candidate[z] = False
    if not np.any(candidate):
        return None

    if family == "crm":
        if crm_quad is None:
            raise ValueError("crm selection requires the quadrature table")
        phat = crm_quad.posterior_from_counts(n_vec, m_vec).phat
        dist = np.where(candidate, np.abs(phat - target), math.inf)
        return _lowest_argmin(dist) + 1
    if family == "spm":
        from .designs import spm_gamma_logpost

        if spm_model is None:
            raise ValueError("spm selection requires the SPM model")
        data = [(int(a), int(b), []) for a, b in zip(n_vec, m_vec)]
        logpost = spm_gamma_logpost(spm_model, data)
        logpost = np.where(candidate, logpost, -math.inf)
        return int(np.argmax(logpost)) + 1

    tried = np.flatnonzero(treated > 0)
    fit = pava(n[tried] / treated[tried], treated[tried])
    phat = np.full(len(n_vec), math.nan)
    phat[tried] = fit
    dist = np.where(candidate, np.abs(phat - target), math.inf)
    pick = _isotonic_argmin(dist, phat, target)
    if family in ("boin", "keyboard"):
        return pick + 1
    if family in ("mtpi2", "i3"):
        if phat[pick] <= target + eps2 + 1e-12:
            return pick + 1
        below = [
            z for z in range(len(n_vec)) if candidate[z] and phat[z] < target + eps2
        ]
        return (max(below) + 1) if below else None
    raise ValueError(f"unknown selection family {family!r}")
