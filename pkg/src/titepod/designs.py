"""Complete-data dose-finding decision functions.

Interval designs (BOIN, mTPI-2, keyboard, i3+3) read only the current
dose's counts; point designs (CRM, SPM) read every dose.  Argmax ties in
interval designs break conservatively toward Stay, then Escalate, then
De-escalate; point-design ties break toward the lower dose.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .core import Decision
from .inference import BetaMixture

_SIDE_PREF = {"S": 0, "E": 1, "D": 2}


@dataclass(frozen=True)
class IntervalPartition:
    """Partition of [0, 1] into the equivalence interval and flanking
    sub-intervals of equal length (boundary pieces possibly shorter).

    Membership at shared boundaries is closed on the side containing the
    target: the equivalence interval is closed, under-dosing pieces are
    right-open, over-dosing pieces left-open.
    """

    target: float
    eps1: float
    eps2: float
    boundaries: tuple  # 0 = b_0 < ... < b_M = 1
    sides: tuple  # 'E' | 'S' | 'D' per piece, left to right

    @staticmethod
    def build(target: float, eps1: float, eps2: float) -> "IntervalPartition":
        lo = target - eps1
        hi = target + eps2
        if not (0.0 < lo and hi < 1.0):
            raise ValueError("equivalence interval must sit strictly inside (0, 1)")
        length = eps1 + eps2
        cuts = [lo]
        while cuts[-1] - length > 1e-12:
            cuts.append(cuts[-1] - length)
        if cuts[-1] > 1e-12:
            cuts.append(0.0)
        else:
            cuts[-1] = 0.0
        below = list(reversed(cuts))
        cuts = [hi]
        while cuts[-1] + length < 1.0 - 1e-12:
            cuts.append(cuts[-1] + length)
        if cuts[-1] < 1.0 - 1e-12:
            cuts.append(1.0)
        else:
            cuts[-1] = 1.0
        bounds = below + cuts
        sides = ["E"] * (len(below) - 1) + ["S"] + ["D"] * (len(cuts) - 1)
        return IntervalPartition(target, eps1, eps2, tuple(bounds), tuple(sides))

    @property
    def lower(self) -> float:
        return self.target - self.eps1

    @property
    def upper(self) -> float:
        return self.target + self.eps2

    def piece_lengths(self) -> np.ndarray:
        return np.diff(np.asarray(self.boundaries))

    def is_key(self) -> np.ndarray:
        """Full-length pieces (the keyboard keys); boundary stubs excluded."""
        return np.abs(self.piece_lengths() - (self.eps1 + self.eps2)) < 1e-9

    def classify(self, x: float) -> str:
        """'E'/'S'/'D' membership of a point (closed equivalence interval,
        with a tiny tolerance absorbing float noise in the boundaries)."""
        if not 0.0 <= x <= 1.0:
            raise ValueError("probability outside [0, 1]")
        if x < self.lower - 1e-12:
            return "E"
        if x > self.upper + 1e-12:
            return "D"
        return "S"


def _argmax_side(values: np.ndarray, sides: Sequence[str]) -> str:
    """Argmax label with the conservative S > E > D tie preference."""
    best = np.max(values)
    candidates = {s for v, s in zip(values, sides) if v >= best - 1e-12 * max(abs(best), 1.0)}
    return min(candidates, key=lambda s: _SIDE_PREF[s])


def _side_to_decision(side: str, current: int, levels: int) -> Decision:
    if side == "E":
        return Decision.escalate(current, levels)
    if side == "D":
        return Decision.de_escalate(current)
    return Decision.stay(current)


# --- BOIN ------------------------------------------------------------------


@dataclass(frozen=True)
class BoinBoundaries:
    target: float
    p_lo: float
    p_hi: float
    lam_lo: float
    lam_hi: float


def boin_boundaries(target: float, p_lo: float, p_hi: float) -> BoinBoundaries:
    """Optimal escalate/de-escalate thresholds for the three-point
    hypothesis test with equal prior weights."""
    if not 0.0 < p_lo < target < p_hi < 1.0:
        raise ValueError("need 0 < p_lo < target < p_hi < 1")
    lam_lo = math.log((1.0 - p_lo) / (1.0 - target)) / math.log(
        target * (1.0 - p_lo) / (p_lo * (1.0 - target))
    )
    lam_hi = math.log((1.0 - target) / (1.0 - p_hi)) / math.log(
        p_hi * (1.0 - target) / (target * (1.0 - p_hi))
    )
    return BoinBoundaries(target, p_lo, p_hi, lam_lo, lam_hi)


def boin_label(phat: float, bounds: BoinBoundaries) -> str:
    if phat <= bounds.lam_lo:
        return "E"
    if phat >= bounds.lam_hi:
        return "D"
    return "S"


def boin_decide(phat: float, bounds: BoinBoundaries, current: int, levels: int) -> Decision:
    """Escalate at or below the lower threshold, de-escalate at or above
    the upper one (inclusive on both, as published), else stay."""
    if not 0.0 <= phat <= 1.0:
        raise ValueError("phat outside [0, 1]")
    return _side_to_decision(boin_label(phat, bounds), current, levels)


# --- mTPI-2 and keyboard -----------------------------------------------------


def mtpi2_label(n: int, m: int, partition: IntervalPartition, prior=None) -> str:
    """Argmax sub-interval label under the hierarchical prior: per-model
    posterior mass is the average likelihood over the piece (truncated
    Beta(1,1) has density 1/len) times the model prior."""
    b = np.asarray(partition.boundaries)
    masses = np.diff(special.betainc(n + 1, m + 1, b))
    upm = masses / partition.piece_lengths()
    if prior is not None:
        upm = upm * np.asarray(prior)
    return _argmax_side(upm, partition.sides)


def mtpi2_decide(
    n: int, m: int, partition: IntervalPartition, current: int, levels: int, prior=None
) -> Decision:
    return _side_to_decision(mtpi2_label(n, m, partition, prior), current, levels)


def keyboard_label(n: int, m: int, partition: IntervalPartition) -> str:
    """Argmax key of the Beta(n+1, m+1) posterior; boundary stubs are not
    keys."""
    b = np.asarray(partition.boundaries)
    masses = np.diff(special.betainc(n + 1, m + 1, b))
    keys = partition.is_key()
    sides = [s for s, k in zip(partition.sides, keys) if k]
    return _argmax_side(masses[keys], sides)


def keyboard_decide(
    n: int, m: int, partition: IntervalPartition, current: int, levels: int
) -> Decision:
    return _side_to_decision(keyboard_label(n, m, partition), current, levels)


# --- i3+3 --------------------------------------------------------------------


def i3_label(dlt_equiv: float, treated: int, partition: IntervalPartition) -> str:
    """i3+3 rules on an effective DLT count (integer n for complete data).

    Over the equivalence interval the decision stays rather than
    de-escalates when removing one DLT would land under-dosing.
    """
    if treated < 1:
        raise ValueError("need at least one treated patient")
    x = dlt_equiv / treated
    side = partition.classify(min(max(x, 0.0), 1.0))
    if side != "D":
        return side
    return "S" if (dlt_equiv - 1.0) / treated < partition.lower - 1e-12 else "D"


def i3_decide(
    n: int, treated: int, partition: IntervalPartition, current: int, levels: int
) -> Decision:
    return _side_to_decision(i3_label(float(n), treated, partition), current, levels)


# --- CRM ---------------------------------------------------------------------


def crm_select(phat: Sequence[float], target: float) -> int:
    """Dose minimizing |phat - target| with lower-dose tie-breaking."""
    phat = np.asarray(phat, dtype=float)
    dist = np.abs(phat - target)
    best = np.min(dist)
    return int(np.flatnonzero(dist <= best + 1e-12)[0]) + 1


def crm_decide(
    phat: Sequence[float],
    target: float,
    current: int,
    levels: int,
) -> Decision:
    """Recommend argmin |phat_z - target|, never skipping upward past
    current + 1."""
    level = crm_select(phat, target)
    level = min(level, min(current + 1, levels))
    return Decision.assign(level)


# --- SPM ---------------------------------------------------------------------


@dataclass(frozen=True)
class SpmModel:
    """Semiparametric MTD-location model: prior ``kappa`` over which dose is
    the MTD, and per-hypothesis truncated-Beta priors with modes ``modes``
    and concentration ``c``."""

    kappa: tuple
    c: float
    modes: tuple  # modes[gamma-1][z-1]
    partition: IntervalPartition

    def __post_init__(self):
        if abs(sum(self.kappa) - 1.0) > 1e-9 or any(k < 0 for k in self.kappa):
            raise ValueError("kappa must be a probability vector")

    @property
    def levels(self) -> int:
        return len(self.kappa)

    def support(self, dose: int, gamma: int) -> tuple:
        part = self.partition
        if dose < gamma:
            return (0.0, part.lower)
        if dose > gamma:
            return (part.upper, 1.0)
        return (part.lower, part.upper)

    @staticmethod
    def from_skeleton(
        skeleton: Sequence[float],
        partition: IntervalPartition,
        c: float = 2.0,
        kappa=None,
    ) -> "SpmModel":
        """Prior modes follow the skeleton shifted so the hypothesized MTD
        sits exactly at the target; modes falling outside their interval are
        projected to its midpoint."""
        skel = list(skeleton)
        levels = len(skel)
        target = partition.target
        anchor = int(np.argmin(np.abs(np.asarray(skel) - target)))
        modes = []
        for gamma in range(1, levels + 1):
            row = []
            for z in range(1, levels + 1):
                idx = min(max(anchor + (z - gamma), 0), levels - 1)
                theta = skel[idx]
                if z == gamma:
                    theta = target
                elif z < gamma and theta >= partition.lower:
                    theta = partition.lower / 2.0
                elif z > gamma and theta <= partition.upper:
                    theta = (partition.upper + 1.0) / 2.0
                row.append(theta)
            modes.append(tuple(row))
        if kappa is None:
            kappa = tuple(1.0 / levels for _ in range(levels))
        return SpmModel(tuple(kappa), c, tuple(modes), partition)


def spm_gamma_logpost(model: SpmModel, dose_data: Sequence[tuple]) -> np.ndarray:
    """Unnormalized log posterior over the MTD location.

    ``dose_data`` holds (n, m, rhos) per dose; the per-dose evidence is the
    censored likelihood integrated against the truncated-Beta prior on that
    dose's restricted support (analytic via regularized incomplete betas).
    """
    levels = model.levels
    logpost = np.zeros(levels)
    for gamma in range(1, levels + 1):
        lp = math.log(model.kappa[gamma - 1]) if model.kappa[gamma - 1] > 0 else -math.inf
        for z in range(1, levels + 1):
            n, m, rhos = dose_data[z - 1]
            theta = model.modes[gamma - 1][z - 1]
            a = model.c * theta + 1.0
            b = model.c * (1.0 - theta) + 1.0
            lo, hi = model.support(z, gamma)
            prior_mass = special.betainc(a, b, hi) - special.betainc(a, b, lo)
            if prior_mass <= 0.0:
                lp = -math.inf
                break
            mix = BetaMixture.from_dose_data(n, m, rhos, a, b)
            lp += mix.log_evidence_on(lo, hi) - special.betaln(a, b) - math.log(prior_mass)
        logpost[gamma - 1] = lp
    if np.all(np.isinf(logpost)):
        raise ArithmeticError("SPM evidence underflowed for every MTD hypothesis")
    return logpost


def spm_decide(model: SpmModel, dose_data: Sequence[tuple], current: int) -> Decision:
    """Assign the posterior-mode MTD location, clamped by the no-skip rule;
    ties go to the lower dose."""
    logpost = spm_gamma_logpost(model, dose_data)
    best = np.max(logpost)
    gamma = int(np.flatnonzero(logpost >= best - 1e-12 * max(abs(best), 1.0))[0]) + 1
    return Decision.assign(min(gamma, min(current + 1, model.levels)))
