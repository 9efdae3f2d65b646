import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsnoma import phys, power
from irsnoma.conic import Status
from irsnoma.phys import Assignment, ContinuousState
from irsnoma.scenario import ChannelSet, Scenario

from conftest import two_cell

# frozen: 2e6-point grid over the first-decoded user's power on p1 + p2 = Pmax
GRID_OPT = 21982863.066325746


def single_cell(g1=2e-9, g2=8e-9, **kw):
    sc = Scenario.layout(2, 1, 1, 0, power_max=0.2, **kw)
    h = np.sqrt(np.array([g1, g2])).reshape(2, 1, 1).astype(complex)
    ch = ChannelSet(h, np.zeros((1, 1, 0), complex), np.zeros((2, 1, 0), complex))
    asg = Assignment(np.ones((2, 1)), np.ones((1, 1)), {(0, 0): (0, 1)})
    return sc, ch, asg


def solve(sc, ch, asg, theta, seed=0):
    fr = power.find_feasible(sc, ch, asg, theta, np.random.default_rng(seed))
    assert fr.status is Status.OPTIMAL
    start = power.tighten_gamma(sc, ch, asg, fr.cs)
    return power.allocate_power(sc, ch, asg, theta, start)


def test_cub_examples():
    assert power.cub_g(0.0, 0.0, 1.0) == 0.0
    assert power.cub_g(2.0, 3.0, 1.0) == 6.5
    assert power.cub_g(2.0, 3.0, 1.5) == pytest.approx(6.0, rel=1e-15)
    for lam in (0.0, -1.0):
        with pytest.raises(ValueError):
            power.cub_g(1.0, 1.0, lam)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-6, 1e6))
def test_cub_dominates_product(gamma, p_hat, lam):
    v = power.cub_g(gamma, p_hat, lam)
    assert v >= gamma * p_hat * (1 - 1e-12)
    if gamma > 1e-3 and p_hat > 1e-3:
        tight = power.cub_g(gamma, p_hat, p_hat / gamma)
        assert tight == pytest.approx(gamma * p_hat, rel=1e-9)


def test_update_coefficients_quotient_and_clamp():
    sc, ch, asg = single_cell()
    p = np.array([1.0, 4.0]).reshape(2, 1, 1)
    cs = ContinuousState(p, np.array([2.0, 1.0]).reshape(2, 1, 1), np.zeros(0))
    c = power.update_coefficients(cs, asg, ch)
    assert c.lam[0, 0, 0] == 2.0                   # P_hat = 4 over gamma = 2
    assert c.lam[1, 0, 0] == power.LAM_MIN         # last decoded: P_hat = 0, floored
    cs0 = ContinuousState(p, np.zeros((2, 1, 1)), np.zeros(0))
    c0 = power.update_coefficients(cs0, asg, ch)
    assert np.all(c0.lam == power.LAM_MAX)


def test_update_coefficients_against_loop(toy):
    sc, ch, theta, asg, rng = toy
    p = np.where(asg.served, rng.uniform(0.01, 0.05, asg.served.shape), 0.0)
    gamma = np.where(asg.served, rng.uniform(0.5, 3.0, asg.served.shape), 0.0)
    c = power.update_coefficients(ContinuousState(p, gamma, theta), asg, ch)
    G = phys.gains2(ch, theta)
    for (j, k), seq in asg.order.items():
        for r, i in enumerate(seq):
            p_hat = sum(p[u, j, k] for u in seq[r + 1:])
            inter = sum(G[i, s, k] * p[u, s, k] for s in range(2) if s != j for u in asg.order[(s, k)])
            lam = np.clip(p_hat / gamma[i, j, k], power.LAM_MIN, power.LAM_MAX)
            assert c.lam[i, j, k] == pytest.approx(lam, rel=1e-12)
            assert c.lam_bar[i, j, k] == pytest.approx(inter / G[i, j, k] / gamma[i, j, k], rel=1e-12)


def test_program_structure(toy):
    sc, ch, theta, asg, rng = toy
    coeff = power.update_coefficients(
        ContinuousState(np.where(asg.served, 0.02, 0.0), np.where(asg.served, 1.0, 0.0), theta), asg, ch)
    prog, lay = power.build_power_program(sc, ch, asg, theta, coeff)
    T = int(asg.served.sum())
    assert lay.T == T == 8 and prog.n == 2 * T
    assert len(prog.qrhs) == T                       # one SINR surrogate per served link
    assert len(prog.lrhs) == 4                       # one rate row per user
    # 2 BS budgets + one SIC row per adjacent pair per (j, k)
    assert len(prog.b) == 2 + 4


def test_sic_coefficients_match_expansion(toy):
    sc, ch, theta, asg, rng = toy
    G = phys.gains2(ch, theta)
    s2 = sc.noise_power
    for (j, k), (i, i2) in asg.order.items():
        coefs, const = power.sic_coefficients(asg, G, j, k, i, i2)
        for _ in range(5):
            Q = rng.uniform(0, 0.2, (2, 2))
            Ii = sum(G[i, s, k] * Q[s, k] for s in range(2) if s != j)
            Ii2 = sum(G[i2, s, k] * Q[s, k] for s in range(2) if s != j)
            ref = (G[i2, j, k] * (Ii + s2) - G[i, j, k] * (Ii2 + s2)) / (G[i, j, k] * G[i2, j, k])
            got = sum(c * Q[key] for key, c in coefs.items()) + const * s2
            assert got == pytest.approx(ref, rel=1e-9, abs=1e-30)


def test_two_user_matches_grid_optimum():
    sc, ch, asg = single_cell()
    res = solve(sc, ch, asg, np.zeros(0))
    p = res.cs.p.ravel()
    assert p.sum() == pytest.approx(sc.power_max, rel=1e-4)      # budget binds
    true = phys.objective(sc, ch, asg, res.cs)
    assert true == pytest.approx(GRID_OPT, rel=1e-2)
    assert true <= GRID_OPT * (1 + 1e-6)


def test_trace_monotone_and_feasible(toy):
    sc, ch, theta, asg, rng = toy
    res = solve(sc, ch, asg, theta, seed=4)
    tr = np.array(res.trace)
    assert np.all(np.diff(tr) >= -10 * sc.solver_tol * np.abs(tr[1:]))
    assert phys.audit(sc, ch, asg, res.cs).ok
    sinr = phys.sinr_all(ch, asg, res.cs, sc.noise_power)
    assert np.all(sinr[asg.served] >= res.cs.gamma[asg.served] * (1 - 1e-6))


def test_find_feasible_trivial_and_impossible():
    sc, ch, asg = single_cell(rate_min=0.0)
    sc = sc.replace(power_max=1e-6)
    fr = power.find_feasible(sc, ch, asg, np.zeros(0), np.random.default_rng(1))
    assert fr.status is Status.OPTIMAL and fr.eps_bar < sc.feas_eps
    # above the strong user's interference-free capacity at full power
    sc, ch, asg = single_cell()
    cap = sc.bandwidth * np.log2(1 + 8e-9 * sc.power_max / sc.noise_power)
    bad = sc.replace(rate_min=1.5 * cap)
    fr = power.find_feasible(bad, ch, asg, np.zeros(0), np.random.default_rng(1))
    assert fr.status is not Status.OPTIMAL and fr.eps_bar > 1e-3


def test_find_feasible_point_passes_recheck(toy):
    sc, ch, theta, asg, rng = toy
    fr = power.find_feasible(sc, ch, asg, theta, rng)
    assert fr.status is Status.OPTIMAL
    cs = power.tighten_gamma(sc, ch, asg, fr.cs)
    assert phys.audit(sc, ch, asg, cs).ok
    assert power.exact_check(sc, asg, phys.gains2(ch, theta), cs.p) is not None
