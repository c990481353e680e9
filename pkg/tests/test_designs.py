import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from titepod.core import Decision, DecisionKind
from titepod.designs import (
    IntervalPartition,
    SpmModel,
    boin_boundaries,
    boin_decide,
    crm_decide,
    i3_decide,
    i3_label,
    keyboard_decide,
    keyboard_label,
    mtpi2_decide,
    mtpi2_label,
    spm_decide,
    spm_gamma_logpost,
)
from titepod.inference import power_model_skeleton

PART_02 = IntervalPartition.build(0.2, 0.05, 0.05)
PART_03 = IntervalPartition.build(0.3, 0.05, 0.05)


def test_partition_structure():
    assert sum(PART_02.piece_lengths()) == pytest.approx(1.0, abs=1e-12)
    assert PART_02.sides.count("S") == 1
    # exactly one piece contains the target
    containing = [
        i
        for i, (lo, hi) in enumerate(zip(PART_02.boundaries, PART_02.boundaries[1:]))
        if lo <= 0.2 <= hi
    ]
    assert len(containing) == 1 and PART_02.sides[containing[0]] == "S"
    # non-boundary pieces all measure eps1 + eps2
    lengths = PART_02.piece_lengths()
    assert np.allclose(lengths[1:-1], 0.1)


def test_partition_membership_closure():
    assert PART_02.classify(0.15) == "S"
    assert PART_02.classify(0.25) == "S"
    assert PART_02.classify(0.1499999) == "E"
    assert PART_02.classify(0.2500001) == "D"


def test_boin_boundaries_closed_forms():
    b = boin_boundaries(0.3, 0.18, 0.42)
    assert b.lam_lo == pytest.approx(0.2365, abs=1e-4)
    assert b.lam_hi == pytest.approx(0.3585, abs=1e-4)
    b2 = boin_boundaries(0.2, 0.12, 0.28)
    assert b2.lam_lo == pytest.approx(0.1573, abs=1e-4)
    assert b2.lam_hi == pytest.approx(0.2385, abs=1e-4)
    with pytest.raises(ValueError):
        boin_boundaries(0.3, 0.4, 0.5)


def test_boin_boundaries_collapse_to_target():
    b = boin_boundaries(0.3, 0.2999, 0.3001)
    assert b.lam_lo == pytest.approx(0.3, abs=1e-3)
    assert b.lam_hi == pytest.approx(0.3, abs=1e-3)


def test_boin_decide_rules():
    b = boin_boundaries(0.3, 0.18, 0.42)
    assert boin_decide(0.10, b, 3, 7).kind is DecisionKind.ESCALATE
    assert boin_decide(0.4226, b, 3, 7).kind is DecisionKind.DE_ESCALATE
    # boundary values are inclusive
    assert boin_decide(b.lam_lo, b, 3, 7).kind is DecisionKind.ESCALATE
    assert boin_decide(b.lam_hi, b, 3, 7).kind is DecisionKind.DE_ESCALATE
    assert boin_decide(0.3, b, 3, 7).kind is DecisionKind.STAY
    # monotone: raising phat never moves toward escalation
    order = {"E": 0, "S": 1, "D": 2}
    labels = [boin_decide(x, b, 3, 7).category(3) for x in np.linspace(0, 1, 101)]
    assert all(order[b2] >= order[a2] for a2, b2 in zip(labels, labels[1:]))


def test_mtpi2_worked_example_and_ties():
    # 1 DLT / 2 clear at the current dose with target 0.2 de-escalates
    assert mtpi2_decide(1, 2, PART_02, 2, 7).kind is DecisionKind.DE_ESCALATE
    # no data: uniform posterior, tie broken toward stay
    assert mtpi2_decide(0, 0, PART_02, 3, 7).kind is DecisionKind.STAY


def test_mtpi2_escalates_on_clean_run():
    assert mtpi2_decide(0, 6, PART_03, 2, 7).kind is DecisionKind.ESCALATE
    # oracle: numeric integration of per-piece average likelihood
    def upm(lo, hi):
        val, _ = integrate.quad(lambda p: (1 - p) ** 6, lo, hi)
        return val / (hi - lo)

    b = PART_03.boundaries
    vals = [upm(lo, hi) for lo, hi in zip(b, b[1:])]
    assert PART_03.sides[int(np.argmax(vals))] == "E"


def test_keyboard_examples():
    assert keyboard_decide(0, 0, PART_02, 3, 7).kind is DecisionKind.STAY
    assert keyboard_decide(6, 0, PART_03, 3, 7).kind is DecisionKind.DE_ESCALATE


def test_mtpi2_keyboard_identity_exhaustive():
    for part in (PART_02, PART_03):
        for n in range(0, 37):
            for m in range(0, 37 - n):
                assert mtpi2_label(n, m, part) == keyboard_label(n, m, part)


def test_i3_rules():
    assert i3_decide(1, 3, PART_02, 2, 7).kind is DecisionKind.STAY
    assert i3_decide(0, 3, PART_02, 2, 7).kind is DecisionKind.ESCALATE
    assert i3_decide(2, 3, PART_02, 2, 7).kind is DecisionKind.DE_ESCALATE
    # fractional effective counts (the TITE path)
    assert i3_label(3 * 0.4226, 3, PART_03) == "S"


def test_crm_decide_no_skip_and_ties():
    phat = [0.05, 0.1, 0.15, 0.21, 0.3, 0.5, 0.7]
    assert crm_decide(phat, 0.2, 1, 7).level == 2  # argmin is 4, clamped to 2
    assert crm_decide(phat, 0.2, 4, 7).level == 4
    # exact tie prefers the lower dose
    assert crm_decide([0.15, 0.25, 0.6], 0.2, 2, 3).level == 1


def test_edge_clamping():
    assert mtpi2_decide(0, 6, PART_02, 7, 7).level == 7
    assert mtpi2_decide(6, 0, PART_02, 1, 7).level == 1


def build_spm(levels=3, target=0.2):
    part = IntervalPartition.build(target, 0.05, 0.05)
    skel = power_model_skeleton(target, levels, (levels + 1) // 2)
    return SpmModel.from_skeleton(skel, part)


def test_spm_prior_modes_respect_supports():
    model = build_spm(5)
    for g in range(1, 6):
        for z in range(1, 6):
            lo, hi = model.support(z, g)
            assert lo <= model.modes[g - 1][z - 1] <= hi
            if z == g:
                assert model.modes[g - 1][z - 1] == pytest.approx(0.2)


def test_spm_no_data_returns_prior_mode():
    # posterior equals the (uniform) prior, so the lowest dose wins the tie
    model = build_spm(3)
    data = [(0, 0, [])] * 3
    logpost = spm_gamma_logpost(model, data)
    assert np.allclose(logpost, logpost[0], atol=1e-9)
    assert spm_decide(model, data, current=1).level == 1


def test_spm_posterior_normalizes_and_finds_toxic_dose():
    model = build_spm(3)
    data = [(5, 0, []), (0, 0, []), (0, 0, [])]
    logpost = spm_gamma_logpost(model, data)
    post = np.exp(logpost - logpost.max())
    post /= post.sum()
    assert post.sum() == pytest.approx(1.0, abs=1e-9)
    assert int(np.argmax(post)) + 1 == 1
    # quadrature oracle for the gamma marginal
    def evidence(gamma):
        total = 1.0
        for z in range(1, 4):
            n, m, _ = data[z - 1]
            lo, hi = model.support(z, gamma)
            theta = model.modes[gamma - 1][z - 1]
            a, b = model.c * theta + 1.0, model.c * (1.0 - theta) + 1.0
            num, _ = integrate.quad(
                lambda p: p ** (n + a - 1) * (1 - p) ** (m + b - 1), lo, hi
            )
            den, _ = integrate.quad(lambda p: p ** (a - 1) * (1 - p) ** (b - 1), lo, hi)
            total *= num / den
        return total / 3.0

    ev = np.array([evidence(g) for g in (1, 2, 3)])
    assert np.allclose(ev / ev.sum(), post, atol=1e-9)


def test_spm_no_skip_clamp():
    model = build_spm(5)
    data = [(0, 6, []), (0, 0, []), (0, 0, []), (0, 0, []), (0, 0, [])]
    assert spm_decide(model, data, current=1).level <= 2
