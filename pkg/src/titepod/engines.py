"""Decision engines behind a single interface.

Every engine consumes an observed-history snapshot plus the current dose
and returns its raw design decision (rule gating is the simulator's or the
conduct service's job).  Complete-data engines ignore pending patients;
their ``complete_decide`` is also the replay function used by the
incompatibility audit.

Posterior-based interval engines (TITE-TPI, TITE-keyboard) use the exact
mixture-of-Betas posterior for the current dose, with weight-model
parameters refreshed to their complete-case posterior means at every
decision, so decisions carry no Monte Carlo noise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Decision, DoseGrid, DoseTally, Snapshot
from .designs import (
    BoinBoundaries,
    IntervalPartition,
    SpmModel,
    _side_to_decision,
    boin_decide,
    crm_decide,
    i3_label,
    keyboard_label,
    mtpi2_label,
    spm_decide,
)
from .inference import (
    BetaMixture,
    CrmCurve,
    CrmQuadrature,
    pending_dlt_prob,
    solve_dose_score,
)
from .weights import TimeToToxModel, UniformTime, refit_for_decision


@dataclass(frozen=True)
class EngineDecision:
    """Raw engine output; ``pod`` is present for POD engines."""

    decision: Decision
    pod: Optional["PodDistribution"] = None  # noqa: F821 (defined in pod module)


def _dose_counts(tly: DoseTally, dose: int) -> tuple:
    treated, n, m, r = tly.at(dose)
    return treated, n, m, r


def _pending_rhos(snap: Snapshot, model: TimeToToxModel, dose: int):
    return [model.weight(p.follow_up, p.dose) for p in snap.pending_views(dose)]


class Engine:
    """Shared plumbing; subclasses implement `decide` and `complete_decide`."""

    name = "engine"
    is_time_to_event = False

    def __init__(self, grid: DoseGrid):
        self.grid = grid

    def decide(self, snap: Snapshot, tly: DoseTally, current: int, rng=None) -> EngineDecision:
        raise NotImplementedError

    def complete_decide(self, n_vec: Sequence[int], m_vec: Sequence[int], current: int) -> Decision:
        """Complete-data counterpart decision on fully resolved outcomes."""
        raise NotImplementedError


# --- complete-data engines ---------------------------------------------------


class Mtpi2Engine(Engine):
    name = "mtpi2"

    def __init__(self, grid: DoseGrid, partition: IntervalPartition, prior=None):
        super().__init__(grid)
        self.partition = partition
        self.prior = prior

    def complete_decide(self, n_vec, m_vec, current):
        side = mtpi2_label(n_vec[current - 1], m_vec[current - 1], self.partition, self.prior)
        return _side_to_decision(side, current, self.grid.levels)

    def decide(self, snap, tly, current, rng=None):
        _, n, m, _ = _dose_counts(tly, current)
        side = mtpi2_label(n, m, self.partition, self.prior)
        return EngineDecision(_side_to_decision(side, current, self.grid.levels))


class KeyboardEngine(Engine):
    name = "keyboard"

    def __init__(self, grid: DoseGrid, partition: IntervalPartition):
        super().__init__(grid)
        self.partition = partition

    def complete_decide(self, n_vec, m_vec, current):
        side = keyboard_label(n_vec[current - 1], m_vec[current - 1], self.partition)
        return _side_to_decision(side, current, self.grid.levels)

    def decide(self, snap, tly, current, rng=None):
        _, n, m, _ = _dose_counts(tly, current)
        side = keyboard_label(n, m, self.partition)
        return EngineDecision(_side_to_decision(side, current, self.grid.levels))


class BoinEngine(Engine):
    name = "boin"

    def __init__(self, grid: DoseGrid, bounds: BoinBoundaries):
        super().__init__(grid)
        self.bounds = bounds

    def complete_decide(self, n_vec, m_vec, current):
        n, m = n_vec[current - 1], m_vec[current - 1]
        if n + m == 0:
            return Decision.stay(current)
        return boin_decide(n / (n + m), self.bounds, current, self.grid.levels)

    def decide(self, snap, tly, current, rng=None):
        _, n, m, _ = _dose_counts(tly, current)
        if n + m == 0:
            return EngineDecision(Decision.stay(current))
        return EngineDecision(
            boin_decide(n / (n + m), self.bounds, current, self.grid.levels)
        )


class I3Engine(Engine):
    name = "i3"

    def __init__(self, grid: DoseGrid, partition: IntervalPartition):
        super().__init__(grid)
        self.partition = partition

    def complete_decide(self, n_vec, m_vec, current):
        n, m = n_vec[current - 1], m_vec[current - 1]
        if n + m == 0:
            return Decision.stay(current)
        side = i3_label(float(n), n + m, self.partition)
        return _side_to_decision(side, current, self.grid.levels)

    def decide(self, snap, tly, current, rng=None):
        _, n, m, _ = _dose_counts(tly, current)
        if n + m == 0:
            return EngineDecision(Decision.stay(current))
        side = i3_label(float(n), n + m, self.partition)
        return EngineDecision(_side_to_decision(side, current, self.grid.levels))


class CrmEngine(Engine):
    name = "crm"

    def __init__(self, grid: DoseGrid, curve: CrmCurve):
        super().__init__(grid)
        self.curve = curve
        self.quad = CrmQuadrature(curve)

    def complete_decide(self, n_vec, m_vec, current):
        phat = self.quad.posterior_from_counts(n_vec, m_vec).phat
        return crm_decide(phat, self.grid.target, current, self.grid.levels)

    def decide(self, snap, tly, current, rng=None):
        phat = self.quad.posterior_from_counts(tly.dlt, tly.clear).phat
        return EngineDecision(crm_decide(phat, self.grid.target, current, self.grid.levels))


class SpmEngine(Engine):
    name = "spm"

    def __init__(self, grid: DoseGrid, model: SpmModel):
        super().__init__(grid)
        self.spm = model

    def complete_decide(self, n_vec, m_vec, current):
        data = [(int(n), int(m), []) for n, m in zip(n_vec, m_vec)]
        return spm_decide(self.spm, data, current)

    def decide(self, snap, tly, current, rng=None):
        data = [(tly.dlt[z], tly.clear[z], []) for z in range(self.grid.levels)]
        return EngineDecision(spm_decide(self.spm, data, current))


# --- TITE engines ------------------------------------------------------------


class TiteCrmEngine(Engine):
    name = "tite-crm"
    is_time_to_event = True

    def __init__(self, grid: DoseGrid, curve: CrmCurve, model: TimeToToxModel):
        super().__init__(grid)
        self.curve = curve
        self.model = model
        self._counterpart = CrmEngine(grid, curve)
        self.quad = self._counterpart.quad

    def complete_decide(self, n_vec, m_vec, current):
        return self._counterpart.complete_decide(n_vec, m_vec, current)

    def decide(self, snap, tly, current, rng=None):
        model = refit_for_decision(self.model, snap)
        post = self.quad.posterior(snap, model)
        return EngineDecision(
            crm_decide(post.phat, self.grid.target, current, self.grid.levels)
        )


class TiteBoinEngine(Engine):
    """Single-imputation BOIN: pending outcomes replaced by their predictive
    expectations at the self-consistent (EM fixed point) estimate of the
    current dose's toxicity probability."""

    name = "tite-boin"
    is_time_to_event = True

    def __init__(self, grid: DoseGrid, bounds: BoinBoundaries, model: TimeToToxModel):
        super().__init__(grid)
        self.bounds = bounds
        self.model = model
        self._counterpart = BoinEngine(grid, bounds)

    def complete_decide(self, n_vec, m_vec, current):
        return self._counterpart.complete_decide(n_vec, m_vec, current)

    @staticmethod
    def imputed_phat(n: int, m: int, rhos: Sequence[float], max_iters: int = 100) -> float:
        """Fixed point of p = (n + sum_i q_i(p)) / N, initialized at n / N.

        Aitken extrapolation keeps boundary cases (m = 0, estimate near 1)
        inside the iteration budget; genuine non-convergence falls back to
        the raw rate with a warning.
        """
        treated = n + m + len(rhos)

        def step(p):
            return (n + sum(pending_dlt_prob(p, r) for r in rhos)) / treated

        p = n / treated
        for _ in range(max_iters):
            p1 = step(p)
            p2 = step(p1)
            if abs(p2 - p1) < 1e-8:
                return p2
            denom = p2 - 2.0 * p1 + p
            acc = p - (p1 - p) ** 2 / denom if denom != 0.0 else p2
            p = acc if 0.0 <= acc <= 1.0 else p2
        warnings.warn("TITE-BOIN imputation fixed point did not converge; using raw rate")
        return n / treated

    def decide(self, snap, tly, current, rng=None):
        treated, n, m, r = _dose_counts(tly, current)
        if treated == 0:
            return EngineDecision(Decision.stay(current))
        model = refit_for_decision(self.model, snap)
        rhos = _pending_rhos(snap, model, current)
        phat = self.imputed_phat(n, m, rhos)
        return EngineDecision(boin_decide(phat, self.bounds, current, self.grid.levels))


class _MixtureIntervalEngine(Engine):
    """Shared exact-posterior path for TITE-TPI and TITE-keyboard."""

    is_time_to_event = True

    def __init__(self, grid: DoseGrid, partition: IntervalPartition, model: TimeToToxModel):
        super().__init__(grid)
        self.partition = partition
        self.model = model

    def _label_from_mixture(self, mix: BetaMixture) -> str:
        raise NotImplementedError

    def dose_mixture(self, snap: Snapshot, tly: DoseTally, current: int) -> BetaMixture:
        model = refit_for_decision(self.model, snap)
        _, n, m, _ = _dose_counts(tly, current)
        return BetaMixture.from_dose_data(n, m, _pending_rhos(snap, model, current))

    def decide(self, snap, tly, current, rng=None):
        side = self._label_from_mixture(self.dose_mixture(snap, tly, current))
        return EngineDecision(_side_to_decision(side, current, self.grid.levels))


class TiteTpiEngine(_MixtureIntervalEngine):
    name = "tite-tpi"

    def __init__(self, grid, partition, model, prior=None):
        super().__init__(grid, partition, model)
        self.prior = prior
        self._counterpart = Mtpi2Engine(grid, partition, prior)

    def complete_decide(self, n_vec, m_vec, current):
        return self._counterpart.complete_decide(n_vec, m_vec, current)

    def _label_from_mixture(self, mix):
        from .designs import _argmax_side

        masses = mix.interval_masses(self.partition.boundaries)
        upm = masses / self.partition.piece_lengths()
        if self.prior is not None:
            upm = upm * np.asarray(self.prior)
        return _argmax_side(upm, self.partition.sides)


class TiteKeyboardEngine(_MixtureIntervalEngine):
    name = "tite-keyboard"

    def __init__(self, grid, partition, model):
        super().__init__(grid, partition, model)
        self._counterpart = KeyboardEngine(grid, partition)

    def complete_decide(self, n_vec, m_vec, current):
        return self._counterpart.complete_decide(n_vec, m_vec, current)

    def _label_from_mixture(self, mix):
        from .designs import _argmax_side

        masses = mix.interval_masses(self.partition.boundaries)
        keys = self.partition.is_key()
        sides = [s for s, k in zip(self.partition.sides, keys) if k]
        return _argmax_side(masses[keys], sides)


class TiteI3Engine(Engine):
    """i3+3 with the DLT count replaced by its censored-likelihood MLE
    equivalent; the uniform time-to-toxicity model keeps the MLE closed."""

    name = "tite-i3"
    is_time_to_event = True

    def __init__(self, grid: DoseGrid, partition: IntervalPartition, model: TimeToToxModel):
        if not isinstance(model, UniformTime):
            raise ValueError("tite-i3 requires the uniform time-to-toxicity model")
        super().__init__(grid)
        self.partition = partition
        self.model = model
        self._counterpart = I3Engine(grid, partition)

    def complete_decide(self, n_vec, m_vec, current):
        return self._counterpart.complete_decide(n_vec, m_vec, current)

    def decide(self, snap, tly, current, rng=None):
        treated, n, m, r = _dose_counts(tly, current)
        if treated == 0:
            return EngineDecision(Decision.stay(current))
        phat = solve_dose_score(n, m, _pending_rhos(snap, self.model, current))
        side = i3_label(treated * phat, treated, self.partition)
        return EngineDecision(_side_to_decision(side, current, self.grid.levels))


class TiteSpmEngine(Engine):
    name = "tite-spm"
    is_time_to_event = True

    def __init__(self, grid: DoseGrid, model: SpmModel, tox_model: TimeToToxModel):
        super().__init__(grid)
        self.spm = model
        self.tox_model = tox_model
        self._counterpart = SpmEngine(grid, model)

    def complete_decide(self, n_vec, m_vec, current):
        return self._counterpart.complete_decide(n_vec, m_vec, current)

    def decide(self, snap, tly, current, rng=None):
        model = refit_for_decision(self.tox_model, snap)
        data = [
            (tly.dlt[z - 1], tly.clear[z - 1], _pending_rhos(snap, model, z))
            for z in range(1, self.grid.levels + 1)
        ]
        return EngineDecision(spm_decide(self.spm, data, current))
