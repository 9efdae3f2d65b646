"""Alternating optimization loop, baseline schemes, exhaustive reference and trial metrics."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import matching, phys, power, reflect
from .conic import Status
from .phys import Assignment, ContinuousState
from .scenario import ChannelSet, Scenario, make_rng

SCHEMES = ("NOMA_IRS", "NOMA_NO_IRS", "OMA_IRS", "OMA_NO_IRS")
ALL_SCHEMES = SCHEMES + ("EXHAUSTIVE",)     # the last one only at tiny scale
INIT_FALLBACK = 8                           # ranked associations tried when the matched start fails
OK, INFEASIBLE = "ok", "infeasible"


@dataclass
class TrialReport:
    scheme: str
    objective: float                 # bit/s
    user_rates: np.ndarray           # bit/s per user
    power_w: float                   # consumed transmit power summed over BSs
    interference_w: float            # received inter-cell interference summed over served links
    trace: list                      # objective after initialization and after each outer iteration
    step_trace: list = field(default_factory=list)   # (label, objective) after every step
    status: str = OK
    flags: list = field(default_factory=list)
    iterations: int = 0
    swaps: dict = field(default_factory=lambda: {"association": [], "subchannel": []})
    asg: Assignment | None = None
    cs: ContinuousState | None = None
    wall_ms: float = 0.0
    ee: float = 0.0


def energy_efficiency(report: TrialReport, sc: Scenario) -> float:
    """Sum rate over consumed transmit power plus J static terms (bit/J)."""
    if report.objective <= 0:
        return 0.0
    denom = report.power_w + sc.num_bs * sc.p_static
    return float(report.objective / denom) if denom > 0 else float("inf")


# ----------------------------------------------------------------------------
# OMA model: TDMA inside each cell, equal time shares, the active user gets the
# BS's full per-subchannel budget P_max / |K_j|; neighbouring cells keep transmitting.


def oma_power(sc: Scenario, beta) -> np.ndarray:
    beta = np.asarray(beta)
    nk = np.maximum(beta.sum(axis=1), 1)
    return beta * (sc.power_max / nk)[:, None]


def oma_sinr(sc: Scenario, G, asg: Assignment) -> np.ndarray:
    Q = oma_power(sc, asg.beta)
    Ii = phys.inter_interference(G, Q)
    return np.where(asg.served, G * Q[None] / (Ii + sc.noise_power), 0.0)


def oma_rates_all(sc: Scenario, G, asg: Assignment) -> np.ndarray:
    """Time-averaged rates R[i, j, k] = (1/n_j) (W/K) log2(1 + slot SINR)."""
    n = np.maximum(asg.alpha.sum(axis=0), 1)
    r = phys.rates_from_sinr(oma_sinr(sc, G, asg), sc.bandwidth, sc.num_subchannels)
    return r / n[None, :, None]


def oma_rates(sc: Scenario, G) -> matching.RatesFn:
    return lambda asg, p: oma_rates_all(sc, G, asg)


def oma_terms(sc: Scenario, G, asg: Assignment) -> reflect.LinkTerms:
    Q = oma_power(sc, asg.beta)
    own = np.where(asg.served, Q[None], 0.0)
    return reflect.LinkTerms(own, np.zeros_like(own), Q, oma_sinr(sc, G, asg), False)


# ----------------------------------------------------------------------------
# helpers


def _sorted(asg: Assignment, G) -> Assignment:
    return matching._sorted_orders(Assignment(asg.alpha.copy(), asg.beta.copy(), {}), G)


@dataclass
class _Point:
    asg: Assignment
    cs: ContinuousState
    objective: float


def _repower(sc: Scenario, ch: ChannelSet, asg: Assignment, theta, p_guess, rng) -> _Point | None:
    """Power step for a candidate discrete state: warm start from carried powers when they
    satisfy the exact constraints, otherwise run the feasibility search first."""
    theta = np.asarray(theta, float)
    G = phys.gains2(ch, theta)
    init = None
    if p_guess is not None:
        gamma = power.exact_check(sc, asg, G, np.where(asg.served, p_guess, 0.0), 1e-9)
        if gamma is not None:
            init = ContinuousState(np.where(asg.served, p_guess, 0.0), gamma, theta)
    if init is None:
        fr = power.find_feasible(sc, ch, asg, theta, rng, G)
        if fr.status is not Status.OPTIMAL:
            return None
        init = fr.cs
    pr = power.allocate_power(sc, ch, asg, theta, init, G)
    cs = pr.cs
    if not phys.audit(sc, ch, asg, cs):
        return None
    return _Point(asg, cs, phys.objective(sc, ch, asg, cs))


def _report(sc, ch, scheme, pt: _Point, trace, steps, t0, flags, iters, swaps, oma=False):
    G = phys.gains2(ch, pt.cs.theta)
    asg, cs = pt.asg, pt.cs
    if oma:
        R = oma_rates_all(sc, G, asg)
        Q = oma_power(sc, asg.beta)
        pw = float(Q.sum())
    else:
        R = phys.rates_all(sc, ch, asg, cs, G)
        Q = phys.masked_power(asg, cs.p).sum(axis=0)
        pw = float(phys.masked_power(asg, cs.p).sum())
    Ii = phys.inter_interference(G, Q)
    rep = TrialReport(scheme, float(R.sum()), R.sum(axis=(1, 2)), pw, float(Ii[asg.served].sum()),
                      list(trace), list(steps), OK, list(flags), iters, swaps, asg, cs,
                      (time.perf_counter() - t0) * 1e3)
    rep.ee = energy_efficiency(rep, sc)
    return rep


def _infeasible(sc, scheme, t0, flags):
    I = sc.num_users
    return TrialReport(scheme, 0.0, np.zeros(I), 0.0, 0.0, [], [], INFEASIBLE, list(flags),
                       wall_ms=(time.perf_counter() - t0) * 1e3)


def recompute_objective(sc: Scenario, ch: ChannelSet, report: TrialReport) -> float:
    """Objective re-evaluated from the stored final state (ch must match the scheme)."""
    G = phys.gains2(ch, report.cs.theta)
    if report.scheme.startswith("OMA"):
        return float(oma_rates_all(sc, G, report.asg).sum())
    return phys.objective(sc, ch, report.asg, report.cs)


# ----------------------------------------------------------------------------
# NOMA alternating optimization


def initialize(sc: Scenario, ch: ChannelSet, rng, theta=None) -> _Point | None:
    """Matching-based discrete start, feasibility search and a first power step.

    Falls back to full subchannel reuse when the matched start is infeasible, then to the
    associations with the best worst-user rate under full reuse and an equal split."""
    M = ch.shape[3]
    theta = np.zeros(M) if theta is None else np.asarray(theta, float)
    G = phys.gains2(ch, theta)
    asg = matching.initial_assignment(sc, G)
    pt = _repower(sc, ch, asg, theta, None, rng)
    if pt is None:
        full = Assignment(asg.alpha, np.ones_like(asg.beta), {})
        pt = _repower(sc, ch, _sorted(full, G), theta, None, rng)
    if pt is None:
        for a in _ranked_associations(sc, G)[:INIT_FALLBACK]:
            if np.array_equal(a, asg.alpha):
                continue
            pt = _repower(sc, ch, _sorted(Assignment(a, np.ones_like(asg.beta), {}), G), theta, None, rng)
            if pt is not None:
                break
    return pt


def _ranked_associations(sc: Scenario, G) -> list:
    """Associations sorted by descending worst-user rate (full reuse, equal split); empty when
    the label space exceeds the enumeration cap."""
    I, J, K = G.shape
    if J ** I > sc.enum_cap:
        return []
    rates = matching.noma_rates(sc, G)
    scored = []
    for a in enumerate_associations(I, J, sc.max_per_cell):
        asg = _sorted(Assignment(a, np.ones((J, K), np.int8), {}), G)
        worst = rates(asg, matching.equal_power(sc, asg)).sum(axis=(1, 2)).min()
        scored.append((-worst, len(scored), a))
    scored.sort(key=lambda x: x[:2])
    return [a for _, _, a in scored]


def run_alternating(sc: Scenario, ch: ChannelSet, rng=None, scheme="NOMA_IRS") -> TrialReport:
    """Power, reflection/decoding order, association and subchannel steps until the
    relative objective change drops below eps or N1 outer iterations pass.

    Each step is followed by a power re-allocation and is rejected if the audited
    objective would fall below the incumbent.
    """
    t0 = time.perf_counter()
    rng = make_rng(sc.seed if rng is None else rng)
    M = ch.shape[3]
    flags = []
    pt = initialize(sc, ch, rng)
    if pt is None:
        return _infeasible(sc, scheme, t0, ["init_infeasible"])
    trace = [pt.objective]
    steps = [("init", pt.objective)]
    swaps = {"association": [], "subchannel": []}
    n = 0
    for n in range(1, sc.max_outer + 1):
        prev = pt.objective
        # reflection and decoding order
        if M > 0:
            cr = reflect.codesign(sc, ch, pt.asg, pt.cs, pt.cs.theta, rng)
            if cr.status.startswith("sdp"):
                flags.append(f"{n}:{cr.status}")
            else:
                cand = Assignment(pt.asg.alpha, pt.asg.beta, cr.order)
                new = _repower(sc, ch, cand, cr.theta, pt.cs.p, rng)
                if new is not None and new.objective >= pt.objective:
                    pt = new
        steps.append(("theta", pt.objective))
        G = phys.gains2(ch, pt.cs.theta)
        # association
        mo = matching.associate_users(sc, ch, pt.cs, pt.asg, G=G)
        swaps["association"].append(mo.num_swaps)
        if mo.capped:
            flags.append(f"{n}:association_cap")
        if mo.num_swaps:
            new = _repower(sc, ch, mo.asg, pt.cs.theta, mo.p, rng)
            if new is not None and new.objective >= pt.objective:
                pt = new
        steps.append(("alpha", pt.objective))
        # subchannels
        mo = matching.assign_subchannels(sc, ch, pt.cs, pt.asg, G=G)
        swaps["subchannel"].append(mo.num_swaps)
        if mo.capped:
            flags.append(f"{n}:subchannel_cap")
        if mo.num_swaps:
            new = _repower(sc, ch, mo.asg, pt.cs.theta, mo.p, rng)
            if new is not None and new.objective >= pt.objective:
                pt = new
        steps.append(("beta", pt.objective))
        trace.append(pt.objective)
        if abs(pt.objective - prev) <= sc.eps * max(prev, 1e-30):
            break
    return _report(sc, ch, scheme, pt, trace, steps, t0, flags, n if sc.max_outer else 0, swaps)


# ----------------------------------------------------------------------------
# baselines


def run_oma(sc: Scenario, ch: ChannelSet, rng, scheme) -> TrialReport:
    """OMA with matching on OMA utilities and (if M > 0) reflection design on OMA SINRs."""
    t0 = time.perf_counter()
    M = ch.shape[3]
    theta = np.zeros(M)

    def evaluate(asg, theta):
        G = phys.gains2(ch, theta)
        return float(oma_rates_all(sc, G, asg).sum())

    G = phys.gains2(ch, theta)
    rates = oma_rates(sc, G)
    alpha = matching.initial_association(sc, G)
    beta = matching.initial_subchannels(sc, G, alpha, rates)
    asg = _sorted(Assignment(alpha, beta, {}), G)
    p = oma_power(sc, asg.beta)[None] * asg.served
    cs = ContinuousState(p, np.zeros_like(p), theta)
    obj = evaluate(asg, theta)
    trace, steps, flags = [obj], [("init", obj)], []
    swaps = {"association": [], "subchannel": []}
    n = 0
    for n in range(1, sc.max_outer + 1):
        prev = obj
        if M > 0:
            G = phys.gains2(ch, cs.theta)
            cr = reflect.codesign(sc, ch, asg, cs, cs.theta, rng, terms=oma_terms(sc, G, asg))
            if cr.status.startswith("sdp"):
                flags.append(f"{n}:{cr.status}")
            else:
                v = evaluate(asg, cr.theta)
                if v >= obj:
                    cs, obj = ContinuousState(cs.p, cs.gamma, cr.theta), v
                    asg = _sorted(asg, phys.gains2(ch, cs.theta))
        steps.append(("theta", obj))
        G = phys.gains2(ch, cs.theta)
        rates = oma_rates(sc, G)
        for kind in ("association", "subchannel"):
            if kind == "association":
                mo = matching.associate_users(sc, ch, cs, asg, rates_fn=rates, G=G)
            else:
                mo = matching.assign_subchannels(sc, ch, cs, asg, rates_fn=rates, G=G)
            swaps[kind].append(mo.num_swaps)
            if mo.capped:
                flags.append(f"{n}:{kind}_cap")
            v = evaluate(mo.asg, cs.theta)
            if mo.num_swaps and v >= obj:
                asg, obj = mo.asg, v
                cs = ContinuousState(oma_power(sc, asg.beta)[None] * asg.served, cs.gamma, cs.theta)
            steps.append((kind, obj))
        trace.append(obj)
        if abs(obj - prev) <= sc.eps * max(prev, 1e-30):
            break
    return _report(sc, ch, scheme, _Point(asg, cs, obj), trace, steps, t0, flags, n, swaps, oma=True)


def run_baseline(sc: Scenario, ch: ChannelSet, scheme: str, rng=None) -> TrialReport:
    rng = make_rng(sc.seed if rng is None else rng)
    if scheme == "NOMA_NO_IRS":
        return run_alternating(sc, ch.without_irs(), rng, scheme)
    if scheme == "OMA_IRS":
        return run_oma(sc, ch, rng, scheme)
    if scheme == "OMA_NO_IRS":
        return run_oma(sc, ch.without_irs(), rng, scheme)
    raise ValueError(f"unknown baseline {scheme!r}")


def run_scheme(sc: Scenario, ch: ChannelSet, scheme: str, rng=None) -> TrialReport:
    rng = make_rng(sc.seed if rng is None else rng)
    if scheme == "NOMA_IRS":
        return run_alternating(sc, ch, rng)
    if scheme == "EXHAUSTIVE":
        t0 = time.perf_counter()
        ex = exhaustive_reference(sc, ch, rng)
        if ex.asg is None:
            return _infeasible(sc, scheme, t0, ["no_feasible_candidate"])
        pt = _Point(ex.asg, ex.cs, ex.objective)
        return _report(sc, ch, scheme, pt, [ex.objective], [], t0, [f"evaluated={ex.evaluated}"], 0,
                       {"association": [], "subchannel": []})
    return run_baseline(sc, ch, scheme, rng)


# ----------------------------------------------------------------------------
# exhaustive reference


def enumerate_associations(I, J, max_per_cell):
    """All alpha with every cell holding between 2 and max_per_cell users."""
    for labels in itertools.product(range(J), repeat=I):
        cnt = np.bincount(labels, minlength=J)
        if np.all(cnt >= 2) and np.all(cnt <= max_per_cell):
            a = np.zeros((I, J), np.int8)
            a[np.arange(I), labels] = 1
            yield a


def enumerate_subchannels(J, K):
    """All beta with no empty row or column."""
    for bits in itertools.product((0, 1), repeat=J * K):
        b = np.array(bits, np.int8).reshape(J, K)
        if b.sum(axis=1).all() and b.sum(axis=0).all():
            yield b


def enumerate_orders(alpha, beta, G=None, mode="all"):
    """Decoding-order products over the active (j, k) cells."""
    J, K = beta.shape
    cells = [(j, k) for j in range(J) for k in range(K) if beta[j, k]]
    users = {j: [int(i) for i in np.flatnonzero(alpha[:, j])] for j in range(J)}
    if mode == "sorted":
        yield {(j, k): matching.sorted_order(G, users[j], j, k) for j, k in cells}
        return
    for combo in itertools.product(*[list(itertools.permutations(users[j])) for j, _ in cells]):
        yield dict(zip(cells, combo))


def count_candidates(sc: Scenario, mode="all") -> int:
    I, J, K = sc.num_users, sc.num_bs, sc.num_subchannels
    total = 0
    for a in enumerate_associations(I, J, sc.max_per_cell):
        n = a.sum(axis=0)
        for b in enumerate_subchannels(J, K):
            if mode == "sorted":
                total += 1
            else:
                per = 1
                for j in range(J):
                    per *= int(np.prod(np.arange(1, n[j] + 1))) ** int(b[j].sum())
                total += per
    return total


@dataclass
class ExhaustiveResult:
    objective: float
    asg: Assignment | None
    cs: ContinuousState | None
    evaluated: int
    feasible: int


def exhaustive_reference(sc: Scenario, ch: ChannelSet, rng=None, orders=None) -> ExhaustiveResult:
    """Best objective over every feasible (alpha, beta, pi): feasibility search, power step,
    one reflection step at fixed pi, power step again."""
    mode = sc.orders if orders is None else orders
    n = count_candidates(sc, mode)
    if n > sc.enum_cap:
        raise ValueError(f"{n} candidates exceed the enumeration cap {sc.enum_cap}")
    rng = make_rng(sc.seed if rng is None else rng)
    M = ch.shape[3]
    theta0 = np.zeros(M)
    G0 = phys.gains2(ch, theta0)
    best = ExhaustiveResult(0.0, None, None, 0, 0)
    I, J, K = sc.num_users, sc.num_bs, sc.num_subchannels
    for a in enumerate_associations(I, J, sc.max_per_cell):
        for b in enumerate_subchannels(J, K):
            for order in enumerate_orders(a, b, G0, mode):
                best.evaluated += 1
                asg = Assignment(a, b, order)
                pt = _repower(sc, ch, asg, theta0, None, rng)
                if pt is None:
                    continue
                best.feasible += 1
                if M > 0:
                    cr = reflect.codesign(sc, ch, asg, pt.cs, theta0, rng, keep_order=True)
                    if not cr.status.startswith("sdp"):
                        new = _repower(sc, ch, asg, cr.theta, pt.cs.p, rng)
                        if new is not None and new.objective > pt.objective:
                            pt = new
                if pt.objective > best.objective:
                    best.objective, best.asg, best.cs = pt.objective, pt.asg, pt.cs
    return best
