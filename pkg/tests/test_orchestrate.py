from math import comb, factorial

import numpy as np
import pytest

from irsnoma import orchestrate as orch
from irsnoma import phys
from irsnoma.scenario import ChannelSet, Scenario, sample_channels


def toy(seed, M=4):
    sc = Scenario.layout(4, 2, 2, M)
    return sc, sample_channels(sc, seed)


def cell(g=(2e-9, 8e-9)):
    sc = Scenario.layout(2, 1, 1, 0, power_max=0.2)
    h = np.sqrt(np.array(g)).reshape(2, 1, 1).astype(complex)
    return sc, ChannelSet(h, np.zeros((1, 1, 0), complex), np.zeros((2, 1, 0), complex))


def test_zero_outer_iterations_returns_initial_state():
    sc, ch = toy(0)
    sc0 = sc.replace(max_outer=0)
    rep = orch.run_alternating(sc0, ch, np.random.default_rng(5))
    pt = orch.initialize(sc0, ch, np.random.default_rng(5))
    assert rep.iterations == 0 and len(rep.trace) == 1
    assert rep.objective == pytest.approx(pt.objective, rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_alternating_monotone_audited_consistent(seed):
    sc, ch = toy(seed)
    rep = orch.run_alternating(sc, ch, np.random.default_rng(seed))
    assert rep.status == orch.OK
    tr = np.array(rep.trace)
    assert np.all(np.diff(tr) >= -10 * sc.solver_tol * tr[1:])
    steps = np.array([v for _, v in rep.step_trace])
    assert np.all(np.diff(steps) >= -10 * sc.solver_tol * steps[1:])
    assert phys.audit(sc, ch, rep.asg, rep.cs)
    assert orch.recompute_objective(sc, ch, rep) == pytest.approx(rep.objective, rel=1e-6)
    assert rep.ee == pytest.approx(rep.objective / phys.masked_power(rep.asg, rep.cs.p).sum(), rel=1e-9)


def test_noma_without_irs_is_alternating_on_direct_channels():
    sc, ch = toy(1)
    a = orch.run_scheme(sc, ch, "NOMA_NO_IRS", np.random.default_rng(3))
    b = orch.run_alternating(sc, ch.without_irs(), np.random.default_rng(3))
    assert a.objective == b.objective


def test_oma_time_shares():
    sc, ch = cell()
    rep = orch.run_scheme(sc, ch, "OMA_NO_IRS", np.random.default_rng(0))
    slot = sc.bandwidth * np.log2(1 + np.array([2e-9, 8e-9]) * sc.power_max / sc.noise_power)
    assert rep.user_rates == pytest.approx(0.5 * slot, rel=1e-12)
    assert rep.objective == pytest.approx(0.5 * slot.sum(), rel=1e-12)
    assert orch.recompute_objective(sc, ch, rep) == pytest.approx(rep.objective, rel=1e-12)


@pytest.mark.parametrize("pair", [("NOMA_IRS", "NOMA_NO_IRS"), ("OMA_IRS", "OMA_NO_IRS")])
def test_null_reflection_path_matches_direct_scheme(pair):
    sc, ch = toy(2)
    ch = ChannelSet(ch.h, ch.f, np.zeros_like(ch.g))
    a = orch.run_scheme(sc, ch, pair[0], np.random.default_rng(4))
    b = orch.run_scheme(sc, ch, pair[1], np.random.default_rng(4))
    assert a.objective == pytest.approx(b.objective, rel=1e-3)


def test_candidate_counts():
    sc = Scenario.layout(2, 1, 1, 0)
    assert orch.count_candidates(sc, "all") == 2
    assert len(list(orch.enumerate_orders(np.ones((2, 1), int), np.ones((1, 1), int)))) == 2
    # I=4, J=2, K=2: C(4,2) associations; beta has no empty row/column; 2! orders per active cell
    betas = [b for b in orch.enumerate_subchannels(2, 2)]
    # inclusion-exclusion over r empty rows and c empty columns
    n_beta = sum((-1) ** (r + c) * comb(2, r) * comb(2, c) * 2 ** ((2 - r) * (2 - c))
                 for r in range(3) for c in range(3))
    assert len(betas) == n_beta == 7
    ones = {2: 2, 3: 4, 4: 1}                               # 2x2 covers by number of ones
    per_alpha = sum(cnt * factorial(2) ** n for n, cnt in ones.items())
    sc = Scenario.layout(4, 2, 2, 4)
    assert orch.count_candidates(sc, "all") == comb(4, 2) * per_alpha == 336
    assert orch.count_candidates(sc, "sorted") == comb(4, 2) * 7 == 42
    with pytest.raises(ValueError):
        orch.exhaustive_reference(sc.replace(enum_cap=100), sample_channels(sc, 0), orders="all")


def test_exhaustive_covers_alternating_in_single_cell():
    sc, ch = cell()
    ex = orch.exhaustive_reference(sc, ch, np.random.default_rng(0))
    assert ex.evaluated == 2
    rep = orch.run_alternating(sc, ch, np.random.default_rng(0))
    assert ex.objective >= rep.objective * (1 - 1e-4)
    assert phys.audit(sc, ch, ex.asg, ex.cs)


def test_energy_efficiency_examples():
    sc = Scenario.layout(4, 2, 2, 0)
    rep = orch.TrialReport("NOMA_IRS", 1e6, np.zeros(4), 0.2, 0.0, [])
    assert orch.energy_efficiency(rep, sc) == pytest.approx(5e6)
    rep.objective = 0.0
    assert orch.energy_efficiency(rep, sc) == 0.0
    rep = orch.TrialReport("NOMA_IRS", 1e6, np.zeros(4), 0.2, 0.0, [])
    assert orch.energy_efficiency(rep, sc.replace(p_static=0.4)) == pytest.approx(1e6)


def test_initialize_falls_back_to_ranked_associations():
    sc = Scenario.layout(6, 3, 3, 0)
    ch = sample_channels(sc, 23)
    G = phys.gains2(ch, np.zeros(0))
    asg = orch.matching.initial_assignment(sc, G)
    rng = np.random.default_rng(0)
    assert orch._repower(sc, ch, asg, np.zeros(0), None, rng) is None
    full = orch._sorted(phys.Assignment(asg.alpha, np.ones_like(asg.beta), {}), G)
    assert orch._repower(sc, ch, full, np.zeros(0), None, rng) is None
    pt = orch.initialize(sc, ch, np.random.default_rng(0))
    assert pt is not None and phys.audit(sc, ch, pt.asg, pt.cs)
    ranked = orch._ranked_associations(sc, G)
    assert len(ranked) == factorial(6) // 2 ** 3 == 90
    worst = []
    for a in ranked:
        b = orch._sorted(phys.Assignment(a, np.ones((3, 3), np.int8), {}), G)
        worst.append(orch.matching.noma_rates(sc, G)(b, orch.matching.equal_power(sc, b)).sum(axis=(1, 2)).min())
    assert np.all(np.diff(worst) <= 0)
    assert orch._ranked_associations(sc.replace(enum_cap=100), G) == []
