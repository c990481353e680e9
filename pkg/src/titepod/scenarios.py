"""Simulation scenarios, accrual/onset settings, and Weibull calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass



@dataclass(frozen=True)
class Scenario:
    """True per-dose DLT probabilities and the target rate."""

    name: str
    doses: tuple
    target: float

    def __post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.doses):
            raise ValueError("dose probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class Setting:
    """Accrual and DLT-onset profile.

    ``split_frac`` is the onset split point as a fraction of the window;
    ``late_fraction`` is the probability that a within-window DLT occurs
    after the split point.  ``min_gap`` forces a floor on inter-arrival
    times (used by reduction tests to guarantee complete data).
    """

    name: str
    accrual_rate: float  # patients per day
    split_frac: float
    late_fraction: float
    min_gap: float = 0.0

    def __post_init__(self):
        if self.accrual_rate <= 0.0:
            raise ValueError("accrual rate must be positive")
        if not 0.0 < self.split_frac < 1.0:
            raise ValueError("split point must sit inside the window")
        if not 0.0 < self.late_fraction < 1.0:
            raise ValueError("late fraction must lie in (0, 1)")


SETTINGS = {
    "setting1": Setting("setting1", 0.1, 0.5, 0.5),
    "setting2": Setting("setting2", 0.1, 0.75, 0.8),
    "setting3": Setting("setting3", 0.2, 0.5, 0.5),
}


# 18 dose-toxicity scenarios: target 0.2 for 1-9, 0.3 for 10-18.
SCENARIOS = tuple(
    Scenario(f"scn{i + 1}", doses, 0.2 if i < 9 else 0.3)
    for i, doses in enumerate(
        [
            (0.28, 0.36, 0.44, 0.52, 0.60, 0.68, 0.76),
            (0.05, 0.20, 0.46, 0.50, 0.60, 0.70, 0.80),
            (0.02, 0.05, 0.20, 0.28, 0.34, 0.40, 0.44),
            (0.01, 0.05, 0.10, 0.20, 0.32, 0.50, 0.70),
            (0.01, 0.04, 0.07, 0.10, 0.50, 0.70, 0.90),
            (0.01, 0.05, 0.10, 0.14, 0.20, 0.26, 0.34),
            (0.01, 0.02, 0.03, 0.05, 0.20, 0.40, 0.50),
            (0.01, 0.04, 0.07, 0.10, 0.15, 0.20, 0.25),
            (0.01, 0.02, 0.03, 0.04, 0.05, 0.20, 0.45),
            (0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70),
            (0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90),
            (0.14, 0.30, 0.39, 0.48, 0.56, 0.64, 0.70),
            (0.07, 0.23, 0.41, 0.49, 0.62, 0.68, 0.73),
            (0.05, 0.15, 0.30, 0.40, 0.50, 0.60, 0.70),
            (0.05, 0.12, 0.20, 0.30, 0.38, 0.49, 0.56),
            (0.01, 0.04, 0.08, 0.15, 0.30, 0.36, 0.43),
            (0.02, 0.04, 0.08, 0.10, 0.20, 0.30, 0.40),
            (0.01, 0.03, 0.05, 0.07, 0.09, 0.30, 0.50),
        ]
    )
)

MTD_BAND = 0.05  # fixed half-width of the true-MTD band around the target


def true_mtd_set(sc: Scenario) -> frozenset:
    """Doses whose true rate lies within +/-0.05 of the target; when empty,
    the highest dose strictly below the target; empty when no dose
    qualifies (an overly toxic scenario)."""
    inside = {
        z + 1
        for z, p in enumerate(sc.doses)
        if sc.target - MTD_BAND - 1e-12 <= p <= sc.target + MTD_BAND + 1e-12
    }
    if inside:
        return frozenset(inside)
    below = [z + 1 for z, p in enumerate(sc.doses) if p < sc.target]
    return frozenset({max(below)}) if below else frozenset()


def calibrate_weibull(p: float, window: float, split: float, late_fraction: float) -> tuple:
    """(shape, scale) such that Pr(T <= W) = p and Pr(T <= split) =
    (1 - late_fraction) * p."""
    if not 0.0 < p < 1.0:
        raise ValueError("calibration requires an interior DLT probability")
    if not 0.0 < split < window:
        raise ValueError("split point must sit inside the window")
    early = (1.0 - late_fraction) * p
    shape = math.log(math.log1p(-p) / math.log1p(-early)) / math.log(window / split)
    scale = window / (-math.log1p(-p)) ** (1.0 / shape)
    return shape, scale


def weibull_cdf(t: float, shape: float, scale: float) -> float:
    return 1.0 - math.exp(-((t / scale) ** shape))


def calibration_residuals(p, window, split, late_fraction) -> tuple:
    shape, scale = calibrate_weibull(p, window, split, late_fraction)
    return (
        abs(weibull_cdf(window, shape, scale) - p),
        abs(weibull_cdf(split, shape, scale) - (1.0 - late_fraction) * p),
    )
