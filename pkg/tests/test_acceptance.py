"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line, then asserts it.

The Monte-Carlo criteria (7-9) take tens of minutes on one core.
"""

import itertools
import time

import numpy as np
import pytest
from scipy import stats

from irsnoma import cli, matching, orchestrate, phys, power, reflect
from irsnoma.conic import Status
from irsnoma.phys import Assignment, ContinuousState
from irsnoma.scenario import Scenario, sample_channels

from conftest import two_cell


@pytest.fixture
def verdict(capsys):
    def say(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return say


def test_criterion_01_cub_bound(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 100_000
    gamma = rng.exponential(5.0, n)
    p_hat = rng.exponential(0.1, n)
    lam = 10.0 ** rng.uniform(-6, 6, n)
    ok_bound = bool(np.all(power.cub_g(gamma, p_hat, lam) >= gamma * p_hat))
    tight = power.cub_g(gamma, p_hat, p_hat / gamma)
    err = float(np.max(np.abs(tight - gamma * p_hat) / np.maximum(gamma * p_hat, 1e-300)))
    dt = time.perf_counter() - t0
    verdict(1, ok_bound and err <= 1e-9 and dt < 1.0,
            f"{n} triples, bound holds={ok_bound}, max rel equality gap={err:.2e}, {dt:.3f}s")


def test_criterion_02_power_monotone(verdict):
    t0 = time.perf_counter()
    worst, longest, bad = 0.0, 0, []
    for seed in range(100):
        sc, ch, theta, asg, rng = two_cell(seed)
        fr = power.find_feasible(sc, ch, asg, theta, rng)
        if fr.status is not Status.OPTIMAL:
            bad.append(seed)
            continue
        res = power.allocate_power(sc, ch, asg, theta, power.tighten_gamma(sc, ch, asg, fr.cs))
        tr = np.array(res.trace)
        drop = float(np.max(-(np.diff(tr) / tr[1:]), initial=0.0))
        worst = max(worst, drop)
        longest = max(longest, res.iterations)
        if drop > 10 * sc.solver_tol or res.iterations >= sc.max_power_iter:
            bad.append(seed)
    dt = time.perf_counter() - t0
    verdict(2, not bad and dt < 120,
            f"100 instances, worst relative drop={worst:.1e}, max iterations={longest}, "
            f"failures={bad}, {dt:.1f}s")


def equal_split_certificate(sc, ch, asg, theta):
    """Feasibility witness independent of the search: equal power split meets every constraint."""
    p = matching.equal_power(sc, asg)
    return power.exact_check(sc, asg, phys.gains2(ch, theta), p) is not None


def test_criterion_03_feasibility_search(verdict):
    found, fails, seed = 0, [], 0
    while found < 100:
        sc, ch, theta, asg, rng = two_cell(seed)
        seed += 1
        if not equal_split_certificate(sc, ch, asg, theta):
            continue
        found += 1
        fr = power.find_feasible(sc.replace(feas_eps=1e-5), ch, asg, theta, rng)
        cs = power.tighten_gamma(sc, ch, asg, fr.cs)
        if fr.status is not Status.OPTIMAL or not fr.eps_bar < 1e-5 or not phys.audit(sc, ch, asg, cs):
            fails.append(seed - 1)
    infeas_ok = 0
    for s in range(10):
        sc, ch, theta, asg, rng = two_cell(1000 + s)
        g = phys.gains2(ch, theta).max()
        cap = sc.bandwidth * np.log2(1 + g * sc.power_max / sc.noise_power)
        fr = power.find_feasible(sc.replace(rate_min=1.2 * cap), ch, asg, theta, rng)
        infeas_ok += fr.status is not Status.OPTIMAL
    verdict(3, not fails and infeas_ok == 10,
            f"{found} certified-feasible instances (of {seed} drawn), failures={fails}; "
            f"{infeas_ok}/10 over-capacity instances reported infeasible")


def test_criterion_04_lifting_identity(verdict):
    worst = 0.0
    sc = Scenario.layout(4, 2, 2, 8)
    rng = np.random.default_rng(4)
    for d in range(1000):
        ch = sample_channels(sc, 10_000 + d)
        theta = rng.uniform(0, 2 * np.pi, 8)
        v = reflect.nu_bar(theta)
        H2 = np.abs(phys.combined_gains(ch, theta)) ** 2
        for i, j, k in itertools.product(range(4), range(2), range(2)):
            C = reflect.lift_channel(ch, i, j, k)
            val = (v.conj() @ C @ v).real + abs(ch.h[i, j, k]) ** 2
            worst = max(worst, abs(val - H2[i, j, k]) / H2[i, j, k])
    verdict(4, worst <= 1e-9, f"1000 draws x 16 links at M=8, max relative error={worst:.2e}")


def test_criterion_05_sdr_randomization(verdict):
    rng = np.random.default_rng(5)
    sc = Scenario.layout(4, 2, 2, 8)
    worst_r1, unit_ok, calls, degraded = 0.0, True, 0, 0
    for d in range(50):
        ch = sample_channels(sc, 500 + d)
        theta = rng.uniform(0, 2 * np.pi, 8)
        v = reflect.nu_bar(theta) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        best = reflect.gaussian_randomize(np.outer(v, v.conj()), ch, 10, rng)
        direct = reflect.selection_metric(ch, theta)
        worst_r1 = max(worst_r1, abs(reflect.selection_metric(ch, best) - direct) / direct)
        A = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        V = A @ A.conj().T
        dd = 1 / np.sqrt(np.diag(V).real)
        _, cands, _ = reflect.gaussian_randomize(V * np.outer(dd, dd), ch, 20, rng, return_all=True)
        unit_ok &= all(np.allclose(np.abs(reflect.nu_bar(c)), 1.0, atol=1e-12) for c in cands)
    for seed in range(30):
        sc2, ch, theta, asg, rng2 = two_cell(seed)
        p = np.where(asg.served, 0.03, 0.0)
        cs = ContinuousState(p, np.zeros_like(p), theta)
        cs = ContinuousState(p, 0.5 * phys.sinr_all(ch, asg, cs, sc2.noise_power), theta)
        res = reflect.codesign(sc2, ch, asg, cs, theta, rng2)
        calls += 1
        degraded += reflect.selection_metric(ch, res.theta) < reflect.selection_metric(ch, theta)
    ok = worst_r1 <= 1e-8 and unit_ok and degraded == 0
    verdict(5, ok, f"rank-one metric error={worst_r1:.1e}, full-rank candidates unit-modulus={unit_ok}, "
                   f"{degraded}/{calls} codesign calls degraded the metric")


def random_discrete(rng, I, J, K):
    alpha = np.eye(J, dtype=np.int8)[rng.permutation(np.repeat(np.arange(J), I // J))]
    while True:
        beta = rng.integers(0, 2, (J, K)).astype(np.int8)
        if beta.sum(axis=1).all() and beta.sum(axis=0).all():
            return Assignment(alpha, beta, {})


def test_criterion_06_matching_stability(verdict):
    """Both games from the proposal-based start and from a random discrete start, every trial."""
    unstable, weak, capped = [], [], []
    executed = {"association": 0, "subchannel": 0}
    sc = Scenario.layout(6, 3, 3, 8)
    for t in range(200):
        ch = sample_channels(sc, 20_000 + t)
        rng = np.random.default_rng(t)
        theta = rng.uniform(0, 2 * np.pi, 8)
        G = phys.gains2(ch, theta)
        rates = matching.noma_rates(sc, G)
        zero = ContinuousState(np.zeros((6, 3, 3)), np.zeros((6, 3, 3)), theta)
        runs = []
        a = matching.associate_users(sc, ch, zero, G=G)
        runs += [("association", a), ("subchannel", matching.assign_subchannels(sc, ch, zero, a.asg, G=G,
                                                                                initialize=True))]
        start = matching._sorted_orders(random_discrete(rng, 6, 3, 3), G)
        cs = ContinuousState(matching.equal_power(sc, start), zero.gamma, theta)
        a = matching.associate_users(sc, ch, cs, start, G=G)
        runs += [("association", a),
                 ("subchannel", matching.assign_subchannels(sc, ch, ContinuousState(a.p, zero.gamma, theta),
                                                            a.asg, G=G))]
        for kind, out in runs:
            executed[kind] += out.num_swaps
            if out.capped:
                capped.append(t)
            if not matching.certify_stability(matching.SwapGame(kind, G, rates), out.asg, out.p).stable:
                unstable.append((t, kind))
            for s in out.swaps:
                if not (sum(s.after) > sum(s.before) and all(x >= y for x, y in zip(s.after, s.before))):
                    weak.append((t, kind))
    verdict(6, not unstable and not weak and not capped,
            f"200 trials x 2 starts, unstable={unstable[:5]}, non-improving swaps={weak[:5]}, "
            f"capped={capped[:5]}; executed swaps: {executed}")


def test_criterion_07_near_exhaustive(verdict):
    t0 = time.perf_counter()
    sc = Scenario.layout(4, 2, 2, 4, orders="sorted")
    ratios, skipped = [], 0
    for t in range(50):
        ch = sample_channels(sc, 30_000 + t)
        ex = orchestrate.exhaustive_reference(sc, ch, np.random.default_rng(t))
        rep = orchestrate.run_alternating(sc, ch, np.random.default_rng(10_000 + t))
        if ex.asg is None or rep.status != orchestrate.OK:
            skipped += 1
            continue
        ratios.append(rep.objective / ex.objective)
    r = np.array(ratios)
    dt = time.perf_counter() - t0
    ok = r.mean() >= 0.90 and np.mean(r >= 0.95) >= 0.5 and dt < 900 and skipped == 0
    verdict(7, ok, f"{len(r)} trials (skipped {skipped}), mean ratio={r.mean():.4f}, "
                   f"share >= 0.95: {np.mean(r >= 0.95):.2f}, min={r.min():.4f}, max={r.max():.4f}, {dt:.0f}s")


NEED = 200          # feasible trials per (sweep value, scheme)
MAX_TRIALS = 600


def feasible_campaign(camp, schemes_needed=None):
    """Trials 0, 1, ... of a campaign, per sweep value, until every scheme in
    ``schemes_needed`` has NEED trials with status ok (common to all of them)."""
    need = camp.schemes if schemes_needed is None else schemes_needed
    rows, drawn = [], []
    for vi in range(len(camp.values)):
        good, t = 0, 0
        while good < NEED and t < MAX_TRIALS:
            _, _, rs = cli.run_trial((camp, vi, t))
            rows += rs
            good += all(r.status == orchestrate.OK for r in rs if r.scheme in need)
            t += 1
        drawn.append(t)
    return rows, drawn


def common_ok(rows, schemes, value=""):
    """Trials where every listed scheme is feasible."""
    by = {}
    for r in rows:
        if r.sweep_value == value and r.scheme in schemes:
            by.setdefault(r.trial, {})[r.scheme] = r
    return {t: d for t, d in by.items() if len(d) == len(schemes) and all(r.status == orchestrate.OK for r in d.values())}


def lower_bound(d, seed):
    ci = stats.bootstrap((d,), np.mean, confidence_level=0.95, alternative="greater",
                         n_resamples=10_000, random_state=seed).confidence_interval
    return float(ci.low)


def test_criterion_08_scheme_ordering(verdict):
    base = Scenario.from_config({"num_elements": 32})
    rows, drawn = feasible_campaign(cli.Campaign(base, seed=8))
    ok_trials = common_ok(rows, orchestrate.SCHEMES)
    lines = [f"{len(ok_trials)} trials feasible for all schemes out of {drawn[0]} drawn"]
    ok = len(ok_trials) >= NEED
    for a, b in (("NOMA_IRS", "NOMA_NO_IRS"), ("OMA_IRS", "OMA_NO_IRS")):
        d = np.array([v[a].sum_rate_bps - v[b].sum_rate_bps for v in ok_trials.values()])
        lo = lower_bound(d, 8)
        ok &= lo > 0
        lines.append(f"{a}-{b}: mean diff={d.mean() / 1e6:.4f} Mbit/s, 95% lower={lo / 1e6:.4f}")
    fig6 = Scenario.from_config({"num_elements": 32, "user_y": 60.0, "irs_pos": [200.0, 50.0, 10.0]})
    pair = ("NOMA_IRS", "NOMA_NO_IRS")
    r6, drawn6 = feasible_campaign(cli.Campaign(fig6, schemes=pair, seed=6))
    ok6 = common_ok(r6, pair)
    x = np.array([v["NOMA_IRS"].sum_rate_bps for v in ok6.values()])
    y = np.array([v["NOMA_NO_IRS"].sum_rate_bps for v in ok6.values()])
    gain = x.mean() / y.mean() - 1
    ok &= gain >= 0.15 and len(ok6) >= NEED
    lines.append(f"Fig-6 point (y=60, IRS z=10), {len(ok6)}/{drawn6[0]} trials: "
                 f"NOMA_IRS over NOMA_NO_IRS = {100 * gain:.2f}% (need >= 15%)")
    verdict(8, ok, "; ".join(lines))


def test_criterion_09_energy_efficiency(verdict):
    base = Scenario.from_config({"num_elements": 32})
    camp = cli.Campaign(base, "power_max_dbm", ["10", "15", "20", "23"], seed=9)
    rows, drawn = feasible_campaign(camp)
    lines, ok = [f"trials drawn per power {drawn}"], True
    for s in orchestrate.SCHEMES:
        ee, counts = [], []
        for v in camp.values:
            good = common_ok(rows, orchestrate.SCHEMES, cli.format_value(v))
            counts.append(len(good))
            ee.append(np.mean([d[s].ee_bpj for d in good.values()]))
        mono = all(b <= a for a, b in zip(ee, ee[1:]))
        ok &= mono and min(counts) >= NEED
        lines.append(f"{s}: n>={min(counts)} " + " -> ".join(f"{e / 1e6:.2f}" for e in ee) + " Mbit/J")
    verdict(9, ok, "; ".join(lines))


def test_criterion_10_reproducible_csv(verdict, tmp_path):
    base = Scenario.from_config({"num_users": 4, "num_bs": 2, "num_subchannels": 2, "num_elements": 4})
    outs = []
    for run in ("a", "b"):
        camp = cli.Campaign(base, "user_y", ["30", "60"], orchestrate.SCHEMES, trials=2, seed=10,
                            out=str(tmp_path / run))
        cli.run_campaign(camp)
        outs.append((tmp_path / run / "results.csv").read_bytes())
    verdict(10, outs[0] == outs[1], f"two runs, {len(outs[0])} bytes each, identical={outs[0] == outs[1]}")
