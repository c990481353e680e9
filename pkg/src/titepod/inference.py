"""Inference on toxicity probabilities with pending outcomes.

Provides the pending-outcome predictive probability, an exact mixture-of-
Betas posterior for a single dose under the right-censored likelihood
(conditional on fixed weight-model parameters), per-dose MLEs via EM and the
score equations, posterior simulation via independent Metropolis-Hastings
and data augmentation, and the power-model curve posterior used by CRM-type
designs.

Every stochastic operation takes an explicit seed; there is no global RNG.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

from .core import Snapshot
from .likelihood import survival_loglik
from .weights import TimeToToxModel


class UnsupportedPriorError(ValueError):
    """Raised when a sampler needs conjugacy the model cannot provide."""


class ConvergenceError(RuntimeError):
    """Optimization failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


def pending_dlt_prob(p: float, rho: float) -> float:
    """Probability that a pending patient will show a DLT by the window end,
    given toxicity probability ``p`` and follow-up weight ``rho``."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= rho <= 1.0:
        raise ValueError("p and rho must lie in [0, 1]")
    num = (1.0 - rho) * p
    den = num + (1.0 - p)
    if den <= 0.0:
        # p == 1 and rho == 1 cannot occur for a genuinely pending patient
        return 1.0
    return num / den


def pending_weights(snap: Snapshot, model: TimeToToxModel):
    """(dose, rho) for each pending patient, in snapshot order."""
    return [
        (p.dose, model.weight(p.follow_up, p.dose)) for p in snap.pending_views()
    ]


# --------------------------------------------------------------------------
# Exact single-dose posterior: mixture of Betas over latent DLT counts
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BetaMixture:
    """Posterior of one dose's toxicity probability under the censored
    likelihood with fixed pending weights.

    Expanding the pending product \\prod_i (1 - rho_i p) over latent outcome
    assignments collapses, by symmetry, to a mixture over the number s of
    latent DLTs with elementary-symmetric-polynomial coefficients; the s-th
    component is Beta(n + s + a, m + r - s + b).
    """

    alphas: np.ndarray
    betas: np.ndarray
    log_terms: np.ndarray  # unnormalized: log e_s + betaln(alpha_s, beta_s)

    @staticmethod
    def from_dose_data(n: int, m: int, rhos: Sequence[float], a: float = 1.0, b: float = 1.0):
        rhos = np.asarray(rhos, dtype=float)
        r = rhos.size
        # elementary symmetric polynomials of (1 - rho_i)
        e = np.zeros(r + 1)
        e[0] = 1.0
        for u in 1.0 - rhos:
            e[1 : r + 1] = e[1 : r + 1] + u * e[0:r]
        s = np.arange(r + 1)
        alphas = n + s + a
        betas = m + (r - s) + b
        with np.errstate(divide="ignore"):
            log_terms = np.log(e) + special.betaln(alphas, betas)
        return BetaMixture(alphas, betas, log_terms)

    @property
    def log_norm(self) -> float:
        return float(special.logsumexp(self.log_terms))

    def count_weights(self) -> np.ndarray:
        """Posterior-predictive probabilities of s = 0..r latent DLTs."""
        return np.exp(self.log_terms - self.log_norm)

    def mean(self) -> float:
        w = self.count_weights()
        return float(np.sum(w * self.alphas / (self.alphas + self.betas)))

    def cdf(self, x: float) -> float:
        w = self.count_weights()
        return float(np.sum(w * special.betainc(self.alphas, self.betas, x)))

    def interval_masses(self, boundaries: Sequence[float]) -> np.ndarray:
        """Posterior mass of each piece of a partition given by boundaries."""
        b = np.asarray(boundaries, dtype=float)
        w = self.count_weights()
        cdf = (
            w[:, None]
            * special.betainc(self.alphas[:, None], self.betas[:, None], b[None, :])
        ).sum(axis=0)
        return np.diff(cdf)

    def log_evidence_on(self, lo: float, hi: float) -> float:
        """log of the unnormalized integral of the likelihood x Beta(a,b)
        kernel over [lo, hi]; used by truncated-support designs."""
        d = special.betainc(self.alphas, self.betas, hi) - special.betainc(
            self.alphas, self.betas, lo
        )
        with np.errstate(divide="ignore"):
            return float(special.logsumexp(self.log_terms + np.log(np.maximum(d, 0.0))))


def interval_probs(boundaries: Sequence[float], *, beta=None, draws=None, mixture=None):
    """Probability mass of each partition piece for a Beta posterior, a
    sample of draws, or a BetaMixture.  Pieces are consecutive pairs of the
    boundary list, which must cover [0, 1]."""
    b = np.asarray(boundaries, dtype=float)
    if b[0] != 0.0 or abs(b[-1] - 1.0) > 1e-12 or np.any(np.diff(b) <= 0):
        raise ValueError("boundaries must increase from 0 to 1")
    if sum(x is not None for x in (beta, draws, mixture)) != 1:
        raise ValueError("provide exactly one of beta=, draws=, mixture=")
    if beta is not None:
        a, bb = beta
        cdf = special.betainc(a, bb, b)
        return np.diff(cdf)
    if mixture is not None:
        return mixture.interval_masses(b)
    draws = np.asarray(draws, dtype=float)
    counts, _ = np.histogram(draws, bins=b)
    return counts / draws.size


# --------------------------------------------------------------------------
# Maximum likelihood: score equations and EM
# --------------------------------------------------------------------------


def _dose_data(snap: Snapshot, model: TimeToToxModel, levels: int):
    """(n, m, [rho...]) per dose with weights at current follow-up."""
    n = [0] * levels
    m = [0] * levels
    rhos = [[] for _ in range(levels)]
    for p in snap.patients:
        i = p.dose - 1
        if p.assessed:
            if p.status == 1:
                n[i] += 1
            else:
                m[i] += 1
        else:
            rhos[i].append(model.weight(p.follow_up, p.dose))
    return n, m, rhos


def solve_dose_score(n: int, m: int, rhos: Sequence[float]) -> float:
    """Root of n/p - m/(1-p) - sum_i rho_i/(1 - rho_i p) on [0, 1].

    The score is strictly decreasing, so boundary values are returned when
    it does not change sign; a dose with no information yields nan.
    """
    rhos = [r for r in rhos if r > 0.0]
    if n == 0 and m == 0 and not rhos:
        return math.nan
    if n == 0:
        return 0.0
    if m == 0:
        slope_at_one = n - sum(r / (1.0 - r) if r < 1.0 else math.inf for r in rhos)
        if slope_at_one >= 0.0:
            return 1.0

    def score(p):
        s = n / p - m / (1.0 - p)
        for r in rhos:
            s -= r / (1.0 - r * p)
        return s

    return float(optimize.brentq(score, 1e-15, 1.0 - 1e-15, xtol=1e-14, rtol=1e-15))


def score_mle(snap: Snapshot, model: TimeToToxModel, levels: int) -> np.ndarray:
    """Per-dose MLE of the toxicity probabilities under the censored
    likelihood, with the weight-model parameters held fixed."""
    n, m, rhos = _dose_data(snap, model, levels)
    return np.array([solve_dose_score(n[z], m[z], rhos[z]) for z in range(levels)])


def em_mle(
    snap: Snapshot,
    model: TimeToToxModel,
    levels: int,
    tol: float = 1e-10,
    max_iters: int = 10_000,
    return_trace: bool = False,
):
    """EM iteration for the per-dose MLE; expectation imputes each pending
    outcome at its predictive probability, maximization refits Bernoulli
    rates.  The observed-data log-likelihood is non-decreasing along the
    trace."""
    if not any(p.assessed for p in snap.patients):
        raise ValueError("EM requires at least one assessed outcome")
    n, m, rhos = _dose_data(snap, model, levels)
    treated = [n[z] + m[z] + len(rhos[z]) for z in range(levels)]
    p = np.array([
        (n[z] + 0.5 * len(rhos[z])) / treated[z] if treated[z] else math.nan
        for z in range(levels)
    ])
    trace = []
    for _ in range(max_iters):
        if return_trace:
            filled = np.where(np.isnan(p), 0.5, p)
            trace.append(survival_loglik(filled, model, snap))
        new = p.copy()
        for z in range(levels):
            if not treated[z]:
                continue
            imputed = sum(pending_dlt_prob(p[z], r) for r in rhos[z])
            new[z] = (n[z] + imputed) / treated[z]
        if np.nanmax(np.abs(new - p), initial=0.0) < tol:
            p = new
            break
        p = new
    else:
        raise ConvergenceError(f"EM did not converge in {max_iters} iterations", p)
    if return_trace:
        filled = np.where(np.isnan(p), 0.5, p)
        trace.append(survival_loglik(filled, model, snap))
        return p, trace
    return p


# --------------------------------------------------------------------------
# Posterior simulation
# --------------------------------------------------------------------------


def effective_sample_size(x: np.ndarray) -> float:
    """Initial-positive-sequence autocorrelation estimate of the ESS."""
    x = np.asarray(x, dtype=float)
    s = x.size
    if s < 4 or np.var(x) == 0.0:
        return float(s)
    xc = x - x.mean()
    acf = np.correlate(xc, xc, mode="full")[s - 1 :] / (np.arange(s, 0, -1) * np.var(x))
    total = 1.0
    for k in range(1, s - 2, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        total += 2.0 * pair
    return float(s / max(total, 1.0))


@dataclass(frozen=True)
class PosteriorDraws:
    """Joint posterior samples of the toxicity vector and weight model."""

    p: np.ndarray  # S x J
    pending_rho: Optional[np.ndarray]  # S x r, snapshot pending order
    pending_dose: tuple
    accept_rate: Optional[float]

    @property
    def size(self) -> int:
        return self.p.shape[0]

    def ess(self) -> np.ndarray:
        return np.array([effective_sample_size(self.p[:, j]) for j in range(self.p.shape[1])])

    def dose_mean(self) -> np.ndarray:
        return self.p.mean(axis=0)

    def dose_mc_se(self) -> np.ndarray:
        ess = np.maximum(self.ess(), 1.0)
        return self.p.std(axis=0, ddof=1) / np.sqrt(ess)

    def pending_dlt_matrix(self) -> np.ndarray:
        """S x r matrix of per-draw predictive DLT probabilities for the
        pending patients."""
        if self.pending_rho is None or self.pending_rho.shape[1] == 0:
            return np.zeros((self.size, 0))
        pz = self.p[:, [d - 1 for d in self.pending_dose]]
        num = (1.0 - self.pending_rho) * pz
        return num / (num + (1.0 - pz))


def _check_conjugate(model: TimeToToxModel):
    from .weights import RescaledBetaTime

    if isinstance(model, RescaledBetaTime):
        raise UnsupportedPriorError(
            "rescaled-beta parameters have no conjugate complete-case posterior"
        )


def _snapshot_arrays(snap: Snapshot, levels: int):
    n = np.zeros(levels, dtype=int)
    m = np.zeros(levels, dtype=int)
    dlt_times = []
    pend_dose = []
    pend_v = []
    for p in snap.patients:
        if p.assessed:
            if p.status == 1:
                n[p.dose - 1] += 1
                dlt_times.append(p.follow_up)
            else:
                m[p.dose - 1] += 1
        else:
            pend_dose.append(p.dose)
            pend_v.append(p.follow_up)
    return n, m, dlt_times, pend_dose, np.asarray(pend_v)


def imh_sample(
    snap: Snapshot,
    model: TimeToToxModel,
    levels: int,
    iters: int = 4000,
    burn_in: int = 1000,
    seed: int = 0,
    prior: tuple = (1.0, 1.0),
) -> PosteriorDraws:
    """Independent Metropolis-Hastings with complete-case conjugate
    proposals; the acceptance ratio is the pending-patient likelihood ratio
    (identically 1 when nothing is pending)."""
    if iters <= 0:
        raise ValueError("iters must be positive")
    _check_conjugate(model)
    rng = np.random.default_rng(seed)
    a0, b0 = prior
    n, m, dlt_times, pend_dose, pend_v = _snapshot_arrays(snap, levels)
    r = len(pend_dose)
    total = burn_in + iters
    props = rng.beta(a0 + n, b0 + m, size=(total, levels))
    if model.has_free_params():
        prop_models = [model.conditional_draw(rng, dlt_times) for _ in range(total)]
        prop_rho = np.array(
            [[mm.weight(v, d) for v, d in zip(pend_v, pend_dose)] for mm in prop_models]
        ) if r else np.zeros((total, 0))
    else:
        prop_rho = np.tile(
            np.array([model.weight(v, d) for v, d in zip(pend_v, pend_dose)]), (total, 1)
        ) if r else np.zeros((total, 0))
    dose_idx = [d - 1 for d in pend_dose]
    with np.errstate(divide="ignore"):
        log_w = np.sum(np.log1p(-prop_rho * props[:, dose_idx]), axis=1) if r else np.zeros(total)
    unif = np.log(rng.random(total))
    out_p = np.empty((iters, levels))
    out_rho = np.empty((iters, r))
    cur = 0
    accepts = 0
    for t in range(1, total):
        if unif[t] < log_w[t] - log_w[cur]:
            cur = t
            accepts += 1
        if t >= burn_in:
            out_p[t - burn_in] = props[cur]
            out_rho[t - burn_in] = prop_rho[cur]
    return PosteriorDraws(
        p=out_p,
        pending_rho=out_rho,
        pending_dose=tuple(pend_dose),
        accept_rate=accepts / max(total - 1, 1),
    )


def da_sample(
    snap: Snapshot,
    model: TimeToToxModel,
    levels: int,
    iters: int = 4000,
    burn_in: int = 1000,
    seed: int = 0,
    prior: tuple = (1.0, 1.0),
) -> PosteriorDraws:
    """Data augmentation: impute pending outcomes from their predictive
    distribution, then draw (p, xi) from the conjugate full-data
    posteriors."""
    if iters <= 0:
        raise ValueError("iters must be positive")
    _check_conjugate(model)
    rng = np.random.default_rng(seed)
    a0, b0 = prior
    n, m, dlt_times, pend_dose, pend_v = _snapshot_arrays(snap, levels)
    r = len(pend_dose)
    dose_idx = np.array([d - 1 for d in pend_dose], dtype=int)
    cur_model = model
    p = rng.beta(a0 + n, b0 + m)
    out_p = np.empty((iters, levels))
    out_rho = np.empty((iters, r))
    total = burn_in + iters
    for t in range(total):
        rho = np.array([cur_model.weight(v, d) for v, d in zip(pend_v, pend_dose)])
        if r:
            pz = p[dose_idx]
            num = (1.0 - rho) * pz
            q = num / (num + (1.0 - pz))
            y = rng.random(r) < q
        else:
            y = np.zeros(0, dtype=bool)
        s = np.zeros(levels, dtype=int)
        if r:
            np.add.at(s, dose_idx[y], 1)
        pend_per_dose = np.bincount(dose_idx, minlength=levels) if r else np.zeros(levels, int)
        p = rng.beta(a0 + n + s, b0 + m + (pend_per_dose - s))
        if cur_model.has_free_params():
            latent = [
                cur_model.sample_latent_time(rng, v)
                for v, yy in zip(pend_v, y)
                if yy
            ]
            cur_model = model.conditional_draw(rng, dlt_times + latent)
        if t >= burn_in:
            out_p[t - burn_in] = p
            out_rho[t - burn_in] = rho
    return PosteriorDraws(
        p=out_p, pending_rho=out_rho, pending_dose=tuple(pend_dose), accept_rate=None
    )


# --------------------------------------------------------------------------
# Power-model curve posterior (CRM family)
# --------------------------------------------------------------------------


def power_model_skeleton(target: float, levels: int, anchor: int, halfwidth: float = 0.05) -> tuple:
    """Monotone prior-guess curve anchored at ``skeleton[anchor] = target``,
    stepped outward so adjacent doses straddle the indifference interval
    ``target +/- halfwidth`` under the power model."""
    if not 1 <= anchor <= levels:
        raise ValueError("anchor dose out of range")
    lo, hi = math.log(target - halfwidth), math.log(target + halfwidth)
    skel = [0.0] * levels
    skel[anchor - 1] = target
    for k in range(anchor - 1, levels - 1):
        skel[k + 1] = math.exp(hi * math.log(skel[k]) / lo)
    for k in range(anchor - 1, 0, -1):
        skel[k - 1] = math.exp(lo * math.log(skel[k]) / hi)
    return tuple(skel)


@dataclass(frozen=True)
class CrmCurve:
    """Power-model dose-toxicity curve p_z = skeleton_z ** exp(alpha)."""

    skeleton: tuple
    prior_sd: float = 1.34

    def __post_init__(self):
        s = tuple(float(x) for x in self.skeleton)
        if any(not 0.0 < x < 1.0 for x in s) or any(
            s[i] >= s[i + 1] for i in range(len(s) - 1)
        ):
            raise ValueError("skeleton must be strictly increasing within (0, 1)")
        object.__setattr__(self, "skeleton", s)

    @property
    def levels(self) -> int:
        return len(self.skeleton)


@dataclass(frozen=True)
class CrmPosterior:
    """Grid posterior over the power-model exponent."""

    curve: CrmCurve
    alpha: np.ndarray
    weights: np.ndarray  # normalized quadrature weights x posterior density
    phat: np.ndarray

    def curve_probs(self) -> np.ndarray:
        """Grid of p_z(alpha): G x J."""
        return np.power(
            np.asarray(self.curve.skeleton)[None, :], np.exp(self.alpha)[:, None]
        )


class CrmQuadrature:
    """Precomputed alpha grid for fast repeated posterior evaluation."""

    def __init__(self, curve: CrmCurve, grid_points: int = 512, span: float = 8.0):
        self.curve = curve
        self.alpha = np.linspace(-span * curve.prior_sd, span * curve.prior_sd, grid_points)
        self.phi = np.power(
            np.asarray(curve.skeleton)[None, :], np.exp(self.alpha)[:, None]
        )
        with np.errstate(divide="ignore"):
            self.log_phi = np.log(self.phi)
            self.log1m_phi = np.log1p(-self.phi)
        self.log_prior = -0.5 * (self.alpha / curve.prior_sd) ** 2
        self.trap = np.ones(grid_points)
        self.trap[0] = self.trap[-1] = 0.5

    def _posterior(self, loglik: np.ndarray) -> CrmPosterior:
        logpost = loglik + self.log_prior
        logpost -= logpost.max()
        w = np.exp(logpost) * self.trap
        w /= w.sum()
        return CrmPosterior(curve=self.curve, alpha=self.alpha, weights=w, phat=w @ self.phi)

    def posterior_from_counts(self, n_vec, m_vec) -> CrmPosterior:
        n = np.asarray(n_vec, dtype=float)
        m = np.asarray(m_vec, dtype=float)
        with np.errstate(invalid="ignore"):
            loglik = np.where(n > 0, self.log_phi * n, 0.0).sum(axis=1)
            loglik += np.where(m > 0, self.log1m_phi * m, 0.0).sum(axis=1)
        return self._posterior(loglik)

    def posterior(self, snap: Snapshot, model: TimeToToxModel) -> CrmPosterior:
        n, m, _, pend_dose, pend_v = _snapshot_arrays(snap, self.curve.levels)
        with np.errstate(invalid="ignore"):
            loglik = np.where(n > 0, self.log_phi * n, 0.0).sum(axis=1)
            loglik += np.where(m > 0, self.log1m_phi * m, 0.0).sum(axis=1)
        if pend_dose:
            rho = np.array([model.weight(v, d) for v, d in zip(pend_v, pend_dose)])
            pz = self.phi[:, [d - 1 for d in pend_dose]]
            loglik += np.log1p(-rho[None, :] * pz).sum(axis=1)
        return self._posterior(loglik)


def crm_posterior(
    curve: CrmCurve,
    snap: Snapshot,
    model: TimeToToxModel,
    grid_points: int = 512,
    span: float = 8.0,
) -> CrmPosterior:
    """Deterministic grid quadrature of the alpha posterior under the
    censored likelihood (weight-model parameters fixed).  The DLT-time
    density factor does not involve alpha and cancels."""
    return CrmQuadrature(curve, grid_points, span).posterior(snap, model)


def crm_posterior_mcmc(
    curve: CrmCurve,
    snap: Snapshot,
    model: TimeToToxModel,
    iters: int = 4000,
    burn_in: int = 1000,
    seed: int = 0,
    step: float = 0.6,
) -> np.ndarray:
    """Random-walk Metropolis over the curve exponent with the onset-model
    parameters refreshed by a complete-case-proposal MH block; returns
    posterior draws of the per-dose toxicity probabilities.

    This is the sampling path for onset models whose parameters are coupled
    to the curve through pending patients; the grid quadrature (with
    plugged parameters) is the deterministic default.
    """
    if iters <= 0:
        raise ValueError("iters must be positive")
    rng = np.random.default_rng(seed)
    levels = curve.levels
    n, m, dlt_times, pend_dose, pend_v = _snapshot_arrays(snap, levels)
    skel = np.asarray(curve.skeleton)
    pend_idx = [d - 1 for d in pend_dose]

    def loglik(alpha, cur_model):
        phi = skel ** math.exp(alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = float(special.xlogy(n, phi).sum() + special.xlog1py(m, -phi).sum())
        for v, i, d in zip(pend_v, pend_idx, pend_dose):
            ll += math.log1p(-cur_model.weight(v, d) * phi[i])
        return ll

    alpha = 0.0
    cur_model = model.plugin_fit(dlt_times) if model.has_free_params() else model
    cur_ll = loglik(alpha, cur_model)
    out = np.empty((iters, levels))
    for t in range(burn_in + iters):
        prop = alpha + step * rng.standard_normal()
        prop_ll = loglik(prop, cur_model)
        log_ratio = prop_ll - cur_ll - 0.5 * (
            (prop / curve.prior_sd) ** 2 - (alpha / curve.prior_sd) ** 2
        )
        if math.log(rng.random()) < log_ratio:
            alpha, cur_ll = prop, prop_ll
        if model.has_free_params():
            # independence proposal from the complete-case conditional;
            # only the pending factors enter the acceptance ratio
            cand = model.conditional_draw(rng, dlt_times)
            cand_ll = loglik(alpha, cand)
            if math.log(rng.random()) < cand_ll - cur_ll:
                cur_model, cur_ll = cand, cand_ll
        if t >= burn_in:
            out[t - burn_in] = skel ** math.exp(alpha)
    return out


def crm_config_weights(
    post: CrmPosterior,
    snap: Snapshot,
    model: TimeToToxModel,
) -> tuple:
    """Per-pending predictive DLT probabilities on the alpha grid: (G x r
    matrix, grid weights).  Used to marginalize decision enumeration for
    POD over the curve posterior."""
    pend = snap.pending_views()
    rho = np.array([model.weight(p.follow_up, p.dose) for p in pend])
    phi = post.curve_probs()
    if not pend:
        return np.zeros((phi.shape[0], 0)), post.weights
    pz = phi[:, [p.dose - 1 for p in pend]]
    num = (1.0 - rho[None, :]) * pz
    q = num / (num + (1.0 - pz))
    return q, post.weights
