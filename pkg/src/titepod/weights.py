"""Conditional time-to-toxicity models and the follow-up weight function.

Each model specifies the distribution of the DLT time T on (0, W] given
that a DLT occurs within the assessment window.  The weight of a pending
patient followed for t days is ``rho(t) = Pr(T <= t | T <= W)``, the
cumulative mass of that conditional distribution.

The piecewise-constant-hazard variant follows the published construction
verbatim even though its density does not integrate to one over (0, W]
(``rho(W) < 1``); it is flagged improper and excluded from operations that
require a normalized distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import special


def piece_progress(t: float, boundaries: Sequence[float], k: int) -> float:
    """Fraction of sub-interval k (0-based) covered by time t.

    Returns 1 past the piece, 0 before it, and the linear within-piece
    progress otherwise.
    """
    lo, hi = boundaries[k], boundaries[k + 1]
    if t > hi:
        return 1.0
    if t <= lo:
        return 0.0
    return (t - lo) / (hi - lo)


def equal_boundaries(window: float, pieces: int) -> tuple:
    """K equal-length sub-interval boundaries 0 = h_0 < ... < h_K = W."""
    return tuple(window * k / pieces for k in range(pieces + 1))


def _check_t(t: float, window: float, allow_zero: bool) -> None:
    lo_ok = t >= 0.0 if allow_zero else t > 0.0
    if not lo_ok or t > window + 1e-12:
        raise ValueError(f"t={t} outside the assessment window (0, {window}]")


class TimeToToxModel:
    """Base interface; concrete variants are frozen dataclasses below."""

    proper = True

    def weight(self, t: float, dose: int = 1) -> float:
        raise NotImplementedError

    def density(self, t: float, dose: int = 1) -> float:
        raise NotImplementedError

    def sample_conditional(self, rng) -> float:
        raise NotImplementedError

    # -- inference hooks -----------------------------------------------
    # Parameters are shared across doses; models without free parameters
    # return self from every update.

    def has_free_params(self) -> bool:
        return False

    def plugin_fit(self, dlt_times: Sequence[float]) -> "TimeToToxModel":
        """Posterior-mean parameters given the observed DLT times."""
        return self

    def conditional_draw(self, rng, dlt_times: Sequence[float]) -> "TimeToToxModel":
        """Conjugate posterior draw of the parameters given DLT times."""
        return self

    def sample_latent_time(self, rng, followed: float) -> float:
        """Draw a latent DLT time in (followed, W] under this model."""
        raise NotImplementedError


@dataclass(frozen=True)
class UniformTime(TimeToToxModel):
    """T | DLT ~ Uniform(0, W]; rho(t) = t / W."""

    window: float

    def weight(self, t, dose=1):
        _check_t(t, self.window, allow_zero=True)
        return t / self.window

    def density(self, t, dose=1):
        _check_t(t, self.window, allow_zero=False)
        return 1.0 / self.window

    def sample_conditional(self, rng):
        return self.window * (1.0 - rng.random())

    def sample_latent_time(self, rng, followed):
        return followed + (self.window - followed) * (1.0 - rng.random())


@dataclass(frozen=True)
class PiecewiseUniformTime(TimeToToxModel):
    """T | DLT lands in sub-interval k with probability ``weights[k]``,
    uniformly within it.  ``concentration`` is the Dirichlet prior used for
    weight inference."""

    window: float
    boundaries: tuple
    weights: tuple
    concentration: tuple = None

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        w = tuple(float(x) for x in self.weights)
        if len(b) != len(w) + 1:
            raise ValueError("need K+1 boundaries for K weights")
        if b[0] != 0.0 or abs(b[-1] - self.window) > 1e-9:
            raise ValueError("boundaries must run from 0 to the window")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError("boundaries must be strictly increasing")
        if any(x < 0.0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "weights", w)
        if self.concentration is None:
            object.__setattr__(self, "concentration", tuple(1.0 for _ in w))

    @staticmethod
    def equal_pieces(window: float, pieces: int, weights=None, concentration=None):
        b = equal_boundaries(window, pieces)
        if weights is None:
            weights = tuple(1.0 / pieces for _ in range(pieces))
        return PiecewiseUniformTime(window, b, tuple(weights), concentration)

    @staticmethod
    def empirical(window: float, dlt_times: Sequence[float], concentration=None):
        """Boundaries at the ordered observed DLT times (K = n + 1 pieces).

        With no observed DLTs this degenerates to a single piece, i.e. the
        uniform model.
        """
        inner = sorted(t for t in dlt_times if 0.0 < t < window)
        b = (0.0, *inner, window)
        k = len(b) - 1
        return PiecewiseUniformTime(window, b, tuple(1.0 / k for _ in range(k)), concentration)

    def _piece_index(self, t):
        for k in range(len(self.weights)):
            if t <= self.boundaries[k + 1]:
                return k
        return len(self.weights) - 1

    def weight(self, t, dose=1):
        _check_t(t, self.window, allow_zero=True)
        total = sum(
            w * piece_progress(t, self.boundaries, k)
            for k, w in enumerate(self.weights)
        )
        return float(min(total, 1.0))

    def density(self, t, dose=1):
        _check_t(t, self.window, allow_zero=False)
        k = self._piece_index(t)
        return self.weights[k] / (self.boundaries[k + 1] - self.boundaries[k])

    def sample_conditional(self, rng):
        k = rng.choice(len(self.weights), p=np.asarray(self.weights) / sum(self.weights))
        lo, hi = self.boundaries[k], self.boundaries[k + 1]
        return lo + (hi - lo) * (1.0 - rng.random())

    def has_free_params(self):
        return True

    def _piece_counts(self, dlt_times):
        counts = [0.0] * len(self.weights)
        for t in dlt_times:
            counts[self._piece_index(t)] += 1.0
        return counts

    def plugin_fit(self, dlt_times):
        counts = self._piece_counts(dlt_times)
        alpha = [a + c for a, c in zip(self.concentration, counts)]
        total = sum(alpha)
        return replace(self, weights=tuple(a / total for a in alpha))

    def conditional_draw(self, rng, dlt_times):
        counts = self._piece_counts(dlt_times)
        alpha = [a + c for a, c in zip(self.concentration, counts)]
        return replace(self, weights=tuple(rng.dirichlet(alpha)))

    def sample_latent_time(self, rng, followed):
        # residual mass of each piece beyond the follow-up time
        resid = [
            w * (1.0 - piece_progress(followed, self.boundaries, k))
            for k, w in enumerate(self.weights)
        ]
        total = sum(resid)
        if total <= 0.0:
            return self.window
        k = rng.choice(len(resid), p=np.asarray(resid) / total)
        lo = max(self.boundaries[k], followed)
        hi = self.boundaries[k + 1]
        return lo + (hi - lo) * (1.0 - rng.random())


@dataclass(frozen=True)
class DiscreteHazardTime(TimeToToxModel):
    """T | DLT supported on discrete times with hazards ``omega_k``.

    The last support point is the window W with hazard 1.  ``prior`` is the
    Beta prior (per hazard) used for inference.
    """

    window: float
    times: tuple
    hazards: tuple
    prior: tuple = (0.5, 0.5)

    def __post_init__(self):
        ts = tuple(float(x) for x in self.times)
        hz = tuple(float(x) for x in self.hazards)
        if len(ts) != len(hz):
            raise ValueError("times and hazards must have equal length")
        if not ts or abs(ts[-1] - self.window) > 1e-9:
            raise ValueError("last support time must equal the window")
        if any(ts[i] >= ts[i + 1] for i in range(len(ts) - 1)) or ts[0] <= 0.0:
            raise ValueError("times must be strictly increasing in (0, W]")
        if abs(hz[-1] - 1.0) > 1e-12 or any(not 0.0 <= h <= 1.0 for h in hz):
            raise ValueError("hazards must lie in [0, 1] with the last equal to 1")
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "hazards", hz)

    @staticmethod
    def from_observed(window: float, dlt_times: Sequence[float], prior=(0.5, 0.5)):
        """Support at the distinct observed DLT times (< W) plus W, with
        posterior-mean hazards under the Beta prior."""
        inner = sorted({float(t) for t in dlt_times if 0.0 < t < window})
        ts = (*inner, window)
        a0, b0 = prior
        counts = [sum(1 for t in dlt_times if abs(t - h) < 1e-12) for h in inner]
        later = [sum(1 for t in dlt_times if t > h + 1e-12) for h in inner]
        hz = [(a0 + c) / (a0 + b0 + c + l) for c, l in zip(counts, later)]
        return DiscreteHazardTime(window, ts, (*hz, 1.0), prior)

    def point_masses(self):
        masses = []
        surv = 1.0
        for h in self.hazards:
            masses.append(surv * h)
            surv *= 1.0 - h
        return masses

    def weight(self, t, dose=1):
        _check_t(t, self.window, allow_zero=True)
        surv = 1.0
        for hk, wk in zip(self.times, self.hazards):
            if hk <= t + 1e-12:
                surv *= 1.0 - wk
        return 1.0 - surv

    def density(self, t, dose=1):
        """Point mass at support times, zero elsewhere."""
        _check_t(t, self.window, allow_zero=False)
        for hk, mass in zip(self.times, self.point_masses()):
            if abs(t - hk) < 1e-12:
                return mass
        return 0.0

    def sample_conditional(self, rng):
        masses = np.asarray(self.point_masses())
        k = rng.choice(len(masses), p=masses / masses.sum())
        return self.times[k]

    def has_free_params(self):
        return True

    def _beta_updates(self, dlt_times):
        a0, b0 = self.prior
        out = []
        for hk in self.times[:-1]:
            events = sum(1 for t in dlt_times if abs(t - hk) < 1e-12)
            later = sum(1 for t in dlt_times if t > hk + 1e-12)
            out.append((a0 + events, b0 + later))
        return out

    def plugin_fit(self, dlt_times):
        hz = [a / (a + b) for a, b in self._beta_updates(dlt_times)]
        return replace(self, hazards=(*hz, 1.0))

    def conditional_draw(self, rng, dlt_times):
        hz = [rng.beta(a, b) for a, b in self._beta_updates(dlt_times)]
        return replace(self, hazards=(*hz, 1.0))

    def sample_latent_time(self, rng, followed):
        masses = [
            (hk, m) for hk, m in zip(self.times, self.point_masses()) if hk > followed + 1e-12
        ]
        if not masses:
            return self.window
        total = sum(m for _, m in masses)
        probs = np.asarray([m / total for _, m in masses])
        return masses[rng.choice(len(masses), p=probs)][0]


@dataclass(frozen=True)
class PiecewiseHazardTime(TimeToToxModel):
    """Constant hazard ``omega_k`` on each sub-interval.

    Improper on (0, W]: the density integrates to ``rho(W) < 1``.  Retained
    because it is a published model choice; conditional sampling is refused.
    """

    window: float
    boundaries: tuple
    hazards: tuple
    # Gamma(shape, rate) prior per hazard; defaults set by `default_prior`.
    prior_shape: tuple = None
    prior_rate: float = 0.5

    proper = False

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        hz = tuple(float(x) for x in self.hazards)
        if len(b) != len(hz) + 1:
            raise ValueError("need K+1 boundaries for K hazards")
        if b[0] != 0.0 or abs(b[-1] - self.window) > 1e-9:
            raise ValueError("boundaries must run from 0 to the window")
        if any(h < 0.0 for h in hz):
            raise ValueError("hazards must be non-negative")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "hazards", hz)
        if self.prior_shape is None:
            object.__setattr__(self, "prior_shape", self.default_prior_shape(self.window, len(hz)))

    @staticmethod
    def default_prior_shape(window: float, pieces: int) -> tuple:
        """Gamma shapes rising toward the window end (rate fixed at 1/2)."""
        return tuple(
            pieces / (2.0 * window * (pieces - k + 0.5)) for k in range(1, pieces + 1)
        )

    @staticmethod
    def equal_pieces(window: float, pieces: int, hazards=None):
        b = equal_boundaries(window, pieces)
        if hazards is None:
            shapes = PiecewiseHazardTime.default_prior_shape(window, pieces)
            hazards = tuple(s / 0.5 for s in shapes)
        return PiecewiseHazardTime(window, b, tuple(hazards))

    def _cum_hazard(self, t):
        return sum(
            w * (self.boundaries[k + 1] - self.boundaries[k]) * piece_progress(t, self.boundaries, k)
            for k, w in enumerate(self.hazards)
        )

    def weight(self, t, dose=1):
        _check_t(t, self.window, allow_zero=True)
        return 1.0 - math.exp(-self._cum_hazard(t))

    def density(self, t, dose=1):
        _check_t(t, self.window, allow_zero=False)
        k = 0
        for k in range(len(self.hazards)):
            if t <= self.boundaries[k + 1]:
                break
        return self.hazards[k] * math.exp(-self._cum_hazard(t))

    def sample_conditional(self, rng):
        raise ValueError("piecewise-constant-hazard model is improper; cannot sample T | DLT")

    def has_free_params(self):
        return True

    def _exposure_and_events(self, dlt_times):
        events = [0.0] * len(self.hazards)
        exposure = [0.0] * len(self.hazards)
        for t in dlt_times:
            for k in range(len(self.hazards)):
                exposure[k] += (
                    self.boundaries[k + 1] - self.boundaries[k]
                ) * piece_progress(t, self.boundaries, k)
            for k in range(len(self.hazards)):
                if t <= self.boundaries[k + 1]:
                    events[k] += 1.0
                    break
        return events, exposure

    def plugin_fit(self, dlt_times):
        events, exposure = self._exposure_and_events(dlt_times)
        hz = [
            (s + e) / (self.prior_rate + x)
            for s, e, x in zip(self.prior_shape, events, exposure)
        ]
        return replace(self, hazards=tuple(hz))

    def conditional_draw(self, rng, dlt_times):
        events, exposure = self._exposure_and_events(dlt_times)
        hz = [
            rng.gamma(s + e, 1.0 / (self.prior_rate + x))
            for s, e, x in zip(self.prior_shape, events, exposure)
        ]
        return replace(self, hazards=tuple(hz))

    def sample_latent_time(self, rng, followed):
        # piecewise-exponential inversion of the cumulative hazard,
        # conditioned on a DLT landing in (followed, W]
        lo_mass = self.weight(max(followed, 0.0))
        hi_mass = self.weight(self.window)
        u = lo_mass + (hi_mass - lo_mass) * rng.random()
        target = -math.log(1.0 - u)
        acc = 0.0
        for k, w in enumerate(self.hazards):
            piece = w * (self.boundaries[k + 1] - self.boundaries[k])
            if acc + piece >= target and w > 0.0:
                return self.boundaries[k] + (target - acc) / w
            acc += piece
        return self.window


@dataclass(frozen=True)
class RescaledBetaTime(TimeToToxModel):
    """T / W | DLT ~ Beta(xi1, xi2)."""

    window: float
    xi1: float
    xi2: float

    def __post_init__(self):
        if self.xi1 <= 0.0 or self.xi2 <= 0.0:
            raise ValueError("Beta shape parameters must be positive")

    def weight(self, t, dose=1):
        _check_t(t, self.window, allow_zero=True)
        return float(special.betainc(self.xi1, self.xi2, t / self.window))

    def density(self, t, dose=1):
        _check_t(t, self.window, allow_zero=False)
        x = t / self.window
        logpdf = (
            (self.xi1 - 1.0) * math.log(x)
            + (self.xi2 - 1.0) * math.log1p(-x)
            - special.betaln(self.xi1, self.xi2)
        ) if 0.0 < x < 1.0 else -math.inf
        return math.exp(logpdf) / self.window

    def sample_conditional(self, rng):
        return self.window * rng.beta(self.xi1, self.xi2)

    def sample_latent_time(self, rng, followed):
        lo = self.weight(followed)
        u = lo + (1.0 - lo) * rng.random()
        x = special.betaincinv(self.xi1, self.xi2, min(u, 1.0 - 1e-15))
        return float(np.clip(self.window * x, followed, self.window))


def build_tox_model(kind: str, window: float, pieces: int = 3, params=None) -> TimeToToxModel:
    """Construct a model from configuration keys (`tox_model.kind` etc.)."""
    kind = kind.lower().replace("_", "-")
    if kind == "uniform":
        return UniformTime(window)
    if kind == "piecewise-uniform":
        if params is not None:
            return PiecewiseUniformTime.equal_pieces(window, pieces, weights=params)
        return PiecewiseUniformTime.equal_pieces(window, pieces)
    if kind == "discrete-hazard":
        return DiscreteHazardTime.from_observed(window, [])
    if kind == "piecewise-hazard":
        return PiecewiseHazardTime.equal_pieces(window, pieces, hazards=params)
    if kind == "rescaled-beta":
        xi1, xi2 = params if params is not None else (1.0, 1.0)
        return RescaledBetaTime(window, xi1, xi2)
    raise ValueError(f"unknown time-to-toxicity model kind: {kind}")


def refit_for_decision(model: TimeToToxModel, snap) -> TimeToToxModel:
    """Model with parameters refreshed from the observed DLT times.

    The discrete-hazard model also rebuilds its support from the data.
    """
    dlt_times = [p.follow_up for p in snap.patients if p.status == 1]
    if isinstance(model, DiscreteHazardTime):
        return DiscreteHazardTime.from_observed(model.window, dlt_times, model.prior)
    return model.plugin_fit(dlt_times)
