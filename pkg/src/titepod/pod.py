"""Probability-of-decision layer.

With pending outcomes, the complete-data decision is a random variable;
its posterior distribution (the POD) is obtained by pushing the posterior
predictive of the missing outcomes through the complete-data decision
function.  Interval-based bases read only the current dose, so the 2^r
enumeration collapses to the count of latent DLTs there (Poisson-binomial
weights); bases that read every dose (CRM, SPM) enumerate per-dose latent
count vectors up to a cap and fall back to Monte Carlo beyond it.

Tie-breaking between equally probable decisions is conservative: the lower
resulting dose wins.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Decision, DoseGrid, DoseTally, Snapshot
from .engines import Engine, EngineDecision, _dose_counts, _pending_rhos
from .inference import (
    BetaMixture,
    CrmQuadrature,
    PosteriorDraws,
    pending_dlt_prob,
    solve_dose_score,
)
from .weights import TimeToToxModel, refit_for_decision

ENUMERATION_CAP = 12  # latent configurations enumerated exactly up to 2^cap
MC_FALLBACK_DRAWS = 10_000


@dataclass(frozen=True)
class PodDistribution:
    """Distribution over candidate decisions, merged by resulting dose."""

    entries: tuple  # ((Decision, prob), ...) sorted by resulting level
    chosen: Decision

    def prob_of(self, level: int) -> float:
        return sum(p for d, p in self.entries if d.level == level)

    def prob_below(self, level: int) -> float:
        """Mass on decisions more conservative than the given one."""
        return sum(p for d, p in self.entries if d.level < level)

    def total(self) -> float:
        return sum(p for _, p in self.entries)

    @staticmethod
    def point_mass(decision: Decision) -> "PodDistribution":
        return PodDistribution(((decision, 1.0),), decision)


def merge_decisions(pairs: Sequence[tuple]) -> PodDistribution:
    """Pool probabilities of decisions with the same resulting level and
    pick the argmax, breaking ties toward the lower dose."""
    by_level = {}
    for dec, prob in pairs:
        if prob <= 0.0:
            continue
        if dec.level in by_level:
            old_dec, old_p = by_level[dec.level]
            by_level[dec.level] = (old_dec, old_p + prob)
        else:
            by_level[dec.level] = (dec, prob)
    entries = tuple(sorted(by_level.values(), key=lambda e: e[0].level))
    best = max(p for _, p in entries)
    chosen = next(d for d, p in entries if p >= best - 1e-12)
    return PodDistribution(entries, chosen)


def poisson_binomial(qs: Sequence[float]) -> np.ndarray:
    """Distribution of the number of successes of independent Bernoullis."""
    w = np.zeros(len(qs) + 1)
    w[0] = 1.0
    for i, q in enumerate(qs):
        w[1 : i + 2] = w[1 : i + 2] * (1.0 - q) + q * w[0 : i + 1]
        w[0] *= 1.0 - q
    return w


def averaged_count_weights(q_matrix: np.ndarray) -> np.ndarray:
    """Poisson-binomial count weights averaged over posterior draws
    (q_matrix rows are per-draw predictive probabilities)."""
    s, r = q_matrix.shape
    w = np.zeros((s, r + 1))
    w[:, 0] = 1.0
    for i in range(r):
        q = q_matrix[:, i : i + 1]
        w[:, 1 : i + 2] = w[:, 1 : i + 2] * (1.0 - q) + q * w[:, 0 : i + 1]
        w[:, 0] *= (1.0 - q).ravel()
    return w.mean(axis=0)


def pod_from_counts(
    count_weights: Sequence[float],
    base_label: Callable[[int], Decision],
) -> PodDistribution:
    """POD for a base design that depends on the latent outcomes only
    through the number of latent DLTs at the current dose."""
    pairs = [(base_label(s), w) for s, w in enumerate(count_weights)]
    return merge_decisions(pairs)


def pod_distribution(
    base: Engine,
    snap: Snapshot,
    tly: DoseTally,
    current: int,
    draws: PosteriorDraws,
    cap: int = ENUMERATION_CAP,
    rng=None,
    mc_draws: int = MC_FALLBACK_DRAWS,
) -> PodDistribution:
    """Generic POD from posterior draws of (p, xi).

    Interval bases collapse by the current dose's latent DLT count; other
    bases enumerate full configurations when 2^r fits under the cap and
    otherwise sample configurations from the predictive (requires ``rng``).
    """
    pend = snap.pending_views()
    r = len(pend)
    if r == 0:
        return PodDistribution.point_mass(base.decide(snap, tly, current).decision)
    q = draws.pending_dlt_matrix()
    if _reads_current_dose_only(base):
        at_d = [i for i, p in enumerate(pend) if p.dose == current]
        weights = averaged_count_weights(q[:, at_d]) if at_d else np.array([1.0])
        _, n, m, r_d = _dose_counts(tly, current)
        return pod_from_counts(
            weights, lambda s: _complete_label(base, n + s, m + (len(at_d) - s), current)
        )
    if r <= cap:
        configs = list(itertools.product((0, 1), repeat=r))
        pairs = []
        for cfg in configs:
            cfg_arr = np.asarray(cfg, dtype=float)
            w = float(np.mean(np.prod(np.where(cfg_arr > 0, q, 1.0 - q), axis=1)))
            pairs.append((_config_decision(base, snap, tly, current, cfg), w))
        return merge_decisions(pairs)
    if rng is None:
        raise ValueError(f"{r} pending outcomes exceed the enumeration cap and no rng was supplied")
    idx = rng.integers(0, q.shape[0], size=mc_draws)
    sampled = (rng.random((mc_draws, r)) < q[idx]).astype(int)
    uniq, counts = np.unique(sampled, axis=0, return_counts=True)
    pairs = [
        (_config_decision(base, snap, tly, current, tuple(cfg)), c / mc_draws)
        for cfg, c in zip(uniq, counts)
    ]
    return merge_decisions(pairs)


def _reads_current_dose_only(base: Engine) -> bool:
    from .engines import BoinEngine, I3Engine, KeyboardEngine, Mtpi2Engine

    return isinstance(base, (Mtpi2Engine, KeyboardEngine, BoinEngine, I3Engine))


def _complete_label(base: Engine, n: int, m: int, current: int) -> Decision:
    n_vec = [0] * base.grid.levels
    m_vec = [0] * base.grid.levels
    n_vec[current - 1] = n
    m_vec[current - 1] = m
    return base.complete_decide(n_vec, m_vec, current)


def _config_decision(base, snap, tly, current, cfg) -> Decision:
    n_vec = list(tly.dlt)
    m_vec = list(tly.clear)
    for bit, p in zip(cfg, snap.pending_views()):
        if bit:
            n_vec[p.dose - 1] += 1
        else:
            m_vec[p.dose - 1] += 1
    return base.complete_decide(n_vec, m_vec, current)


# --- POD engines -------------------------------------------------------------


class PodIntervalEngine(Engine):
    """POD over an interval-based complete-data design.

    Default inference path is exact: the count distribution of latent DLTs
    at the current dose comes from the mixture-of-Betas posterior with the
    weight model plugged at its complete-case posterior mean.  A frequentist
    plug-in path (predictives at the MLE) is available behind a flag.
    """

    is_time_to_event = True

    def __init__(
        self,
        grid: DoseGrid,
        base: Engine,
        model: TimeToToxModel,
        mle_plugin: bool = False,
        name: str = None,
    ):
        super().__init__(grid)
        self.base = base
        self.model = model
        self.mle_plugin = mle_plugin
        self.name = name or f"pod-{base.name}"

    def complete_decide(self, n_vec, m_vec, current):
        return self.base.complete_decide(n_vec, m_vec, current)

    def count_weights(self, snap, tly, current):
        model = refit_for_decision(self.model, snap)
        _, n, m, _ = _dose_counts(tly, current)
        rhos = _pending_rhos(snap, model, current)
        if self.mle_plugin:
            phat = solve_dose_score(n, m, rhos)
            if math.isnan(phat):
                phat = 0.0
            return poisson_binomial([pending_dlt_prob(phat, r) for r in rhos])
        return BetaMixture.from_dose_data(n, m, rhos).count_weights()

    def decide(self, snap, tly, current, rng=None):
        _, n, m, r_d = _dose_counts(tly, current)
        weights = self.count_weights(snap, tly, current)
        pod = pod_from_counts(
            weights,
            lambda s: _complete_label(self.base, n + s, m + (len(weights) - 1 - s), current),
        )
        return EngineDecision(pod.chosen, pod)


class PodCrmEngine(Engine):
    """POD over the CRM: latent count vectors per dose are enumerated (up
    to a cap) with predictive weights marginalized over the alpha grid
    posterior; each vector is pushed through the complete-data CRM."""

    is_time_to_event = True
    name = "pod-crm"

    def __init__(
        self,
        grid: DoseGrid,
        quad: CrmQuadrature,
        model: TimeToToxModel,
        cap: int = ENUMERATION_CAP,
    ):
        super().__init__(grid)
        self.quad = quad
        self.model = model
        self.cap = cap

    def complete_decide(self, n_vec, m_vec, current):
        from .designs import crm_decide

        phat = self.quad.posterior_from_counts(n_vec, m_vec).phat
        return crm_decide(phat, self.grid.target, current, self.grid.levels)

    def decide(self, snap, tly, current, rng=None):
        from .inference import crm_config_weights

        pend = snap.pending_views()
        r = len(pend)
        if r == 0:
            return self._point_mass(tly, current)
        if r > self.cap and rng is None:
            raise ValueError(f"{r} pending outcomes exceed the enumeration cap")
        model = refit_for_decision(self.model, snap)
        post = self.quad.posterior(snap, model)
        q_grid, grid_w = crm_config_weights(post, snap, model)
        doses = sorted({p.dose for p in pend})
        per_dose_idx = {d: [i for i, p in enumerate(pend) if p.dose == d] for d in doses}
        if r <= self.cap:
            pairs = self._enumerate(tly, current, doses, per_dose_idx, q_grid, grid_w)
        else:
            pairs = self._sample_configs(tly, current, doses, per_dose_idx, q_grid, grid_w, rng)
        pod = merge_decisions(pairs)
        return EngineDecision(pod.chosen, pod)

    def _enumerate(self, tly, current, doses, per_dose_idx, q_grid, grid_w):
        # Poisson-binomial count weights per dose on each grid point;
        # decisions depend on the latent outcomes only through these counts
        pb = {}
        for d in doses:
            qs = q_grid[:, per_dose_idx[d]]
            g, rd = qs.shape
            w = np.zeros((g, rd + 1))
            w[:, 0] = 1.0
            for i in range(rd):
                qq = qs[:, i : i + 1]
                w[:, 1 : i + 2] = w[:, 1 : i + 2] * (1.0 - qq) + qq * w[:, 0 : i + 1]
                w[:, 0] *= (1.0 - qq).ravel()
            pb[d] = w
        pairs = []
        for combo in itertools.product(*(range(len(per_dose_idx[d]) + 1) for d in doses)):
            w_grid = np.ones(q_grid.shape[0])
            for d, s in zip(doses, combo):
                w_grid = w_grid * pb[d][:, s]
            weight = float(np.dot(grid_w, w_grid))
            pairs.append((self._combo_decision(tly, current, doses, per_dose_idx, combo), weight))
        return pairs

    def _sample_configs(self, tly, current, doses, per_dose_idx, q_grid, grid_w, rng,
                        mc_draws: int = MC_FALLBACK_DRAWS):
        # Monte Carlo over latent configurations: draw a posterior grid node,
        # then the pending outcomes given it; pool by per-dose counts
        nodes = rng.choice(q_grid.shape[0], size=mc_draws, p=grid_w / grid_w.sum())
        counts = {}
        for g in nodes:
            combo = tuple(
                int((rng.random(len(per_dose_idx[d])) < q_grid[g, per_dose_idx[d]]).sum())
                for d in doses
            )
            counts[combo] = counts.get(combo, 0) + 1
        pairs = []
        for combo, c in counts.items():
            pairs.append(
                (self._combo_decision(tly, current, doses, per_dose_idx, combo), c / mc_draws)
            )
        return pairs

    def _combo_decision(self, tly, current, doses, per_dose_idx, combo):
        n_vec = list(tly.dlt)
        m_vec = list(tly.clear)
        for d, s in zip(doses, combo):
            n_vec[d - 1] += s
            m_vec[d - 1] += len(per_dose_idx[d]) - s
        return self.complete_decide(n_vec, m_vec, current)

    def _point_mass(self, tly, current):
        dec = self.complete_decide(tly.dlt, tly.clear, current)
        pod = PodDistribution.point_mass(dec)
        return EngineDecision(dec, pod)
