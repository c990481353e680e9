import math

import numpy as np
import pytest
from scipy import integrate, stats

from titepod.weights import (
    DiscreteHazardTime,
    PiecewiseHazardTime,
    PiecewiseUniformTime,
    RescaledBetaTime,
    UniformTime,
    build_tox_model,
)

W = 28.0

PROPER_MODELS = [
    UniformTime(W),
    PiecewiseUniformTime.equal_pieces(W, 3, weights=(0.2, 0.3, 0.5)),
    PiecewiseUniformTime.equal_pieces(W, 9),
    DiscreteHazardTime(W, (10.0, W), (0.5, 1.0)),
    RescaledBetaTime(W, 2.0, 3.0),
]
ALL_MODELS = PROPER_MODELS + [PiecewiseHazardTime.equal_pieces(W, 3, hazards=(0.01, 0.03, 0.05))]


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: type(m).__name__)
def test_weight_monotone_and_bounded(model):
    grid = np.linspace(0.0, W, 1000)
    vals = [model.weight(t) for t in grid]
    assert vals[0] == 0.0
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("model", PROPER_MODELS, ids=lambda m: type(m).__name__)
def test_weight_reaches_one_at_window(model):
    assert model.weight(W) == pytest.approx(1.0, abs=1e-12)


def test_improper_model_flagged():
    model = PiecewiseHazardTime.equal_pieces(W, 3, hazards=(0.01, 0.03, 0.05))
    assert model.weight(W) < 1.0
    assert not model.proper
    with pytest.raises(ValueError):
        model.sample_conditional(np.random.default_rng(0))


def test_uniform_weight_and_density():
    m = UniformTime(W)
    assert m.weight(14.0) == pytest.approx(0.5)
    assert m.density(5.0) == pytest.approx(1.0 / W)


def test_piecewise_uniform_values():
    m = PiecewiseUniformTime.equal_pieces(W, 3)
    assert m.weight(W / 3.0) == pytest.approx(1.0 / 3.0)
    m2 = PiecewiseUniformTime.equal_pieces(W, 3, weights=(0.2, 0.3, 0.5))
    # density on the third piece
    assert m2.density(25.0) == pytest.approx(0.5 / (W / 3.0))


def test_rescaled_beta_uniform_case():
    m = RescaledBetaTime(W, 1.0, 1.0)
    for t in (3.0, 14.0, 27.0):
        assert m.weight(t) == pytest.approx(t / W, abs=1e-12)


@pytest.mark.parametrize(
    "model",
    [m for m in PROPER_MODELS if not isinstance(m, DiscreteHazardTime)],
    ids=lambda m: type(m).__name__,
)
def test_density_integrates_to_one_and_matches_weight(model):
    kinks = list(getattr(model, "boundaries", ()))

    def cdf(t):
        pts = [b for b in kinks if 1e-12 < b < t]
        val, _ = integrate.quad(model.density, 1e-12, t, points=pts or None, limit=400)
        return val

    assert cdf(W) == pytest.approx(1.0, abs=1e-9)
    for t in np.linspace(0.01, W, 100):
        assert cdf(t) == pytest.approx(model.weight(t), abs=1e-9)


def test_discrete_hazard_masses_and_weight():
    m = DiscreteHazardTime(W, (10.0, W), (0.5, 1.0))
    assert m.point_masses() == pytest.approx([0.5, 0.5])
    # weight is the product formula 1 - prod(1 - omega_k) over h_k <= t
    assert m.weight(9.9) == 0.0
    assert m.weight(10.0) == pytest.approx(0.5)
    assert m.weight(W) == pytest.approx(1.0)


def test_sample_conditional_uniform_ks():
    rng = np.random.default_rng(7)
    m = UniformTime(W)
    draws = np.array([m.sample_conditional(rng) for _ in range(100_000)])
    stat = stats.kstest(draws, lambda x: np.clip(x / W, 0, 1)).statistic
    assert stat < 0.02


def test_sample_conditional_discrete_mass():
    rng = np.random.default_rng(11)
    m = DiscreteHazardTime(W, (10.0, W), (0.5, 1.0))
    draws = np.array([m.sample_conditional(rng) for _ in range(20_000)])
    assert abs(np.mean(draws == 10.0) - 0.5) < 0.01


def test_sample_conditional_rescaled_beta_mean():
    rng = np.random.default_rng(13)
    m = RescaledBetaTime(W, 1.0, 1.0)
    draws = np.array([m.sample_conditional(rng) for _ in range(50_000)])
    assert abs(draws.mean() - W / 2.0) < 0.005 * W


@pytest.mark.parametrize("model", PROPER_MODELS, ids=lambda m: type(m).__name__)
def test_empirical_cdf_matches_weight(model):
    rng = np.random.default_rng(3)
    draws = np.array([model.sample_conditional(rng) for _ in range(20_000)])
    for t in (W / 4.0, W / 2.0, 3.0 * W / 4.0):
        assert abs(np.mean(draws <= t) - model.weight(t)) < 0.015


def test_empirical_boundaries_degenerate_to_uniform():
    m = PiecewiseUniformTime.empirical(W, [])
    assert m.weight(14.0) == pytest.approx(0.5)
    m2 = PiecewiseUniformTime.empirical(W, [7.0, 21.0])
    assert len(m2.weights) == 3


def test_latent_time_sampling_stays_in_tail():
    rng = np.random.default_rng(5)
    for model in PROPER_MODELS:
        for _ in range(200):
            t = model.sample_latent_time(rng, 20.0)
            assert 20.0 <= t <= W + 1e-9


def test_invariant_validation():
    with pytest.raises(ValueError):
        PiecewiseUniformTime(W, (0.0, 10.0, W), (0.5, 0.6))  # weights sum > 1
    with pytest.raises(ValueError):
        DiscreteHazardTime(W, (10.0, W), (0.5, 0.9))  # last hazard must be 1
    with pytest.raises(ValueError):
        RescaledBetaTime(W, 0.0, 1.0)
    with pytest.raises(ValueError):
        UniformTime(W).weight(W + 1.0)
    with pytest.raises(ValueError):
        UniformTime(W).density(0.0)


def test_build_tox_model_kinds():
    assert isinstance(build_tox_model("uniform", W), UniformTime)
    assert isinstance(build_tox_model("piecewise-uniform", W, 3), PiecewiseUniformTime)
    assert isinstance(build_tox_model("discrete-hazard", W), DiscreteHazardTime)
    assert isinstance(build_tox_model("piecewise-hazard", W, 3), PiecewiseHazardTime)
    assert isinstance(build_tox_model("rescaled-beta", W, params=(2.0, 2.0)), RescaledBetaTime)
    with pytest.raises(ValueError):
        build_tox_model("weibull", W)
