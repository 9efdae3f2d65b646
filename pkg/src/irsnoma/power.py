"""CUB-based power allocation and the slack-based feasibility search.

Inside the convex programs powers are normalized by P_max and utilities are in
nats per subchannel; conversion to W and bit/s happens at the boundary.
The bilinear term gamma * P_hat is replaced by its convex upper bound
(lam/2) gamma^2 + P_hat^2 / (2 lam), tight at lam = P_hat / gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import phys
from .conic import ConvexProgram, ProgramBuilder, Status, solve_convex
from .phys import Assignment, ContinuousState
from .scenario import ChannelSet, Scenario

LAM_MIN, LAM_MAX = 1e-8, 1e8


def cub_g(gamma, p_hat, lam):
    """(lam/2) gamma^2 + p_hat^2 / (2 lam) >= gamma * p_hat."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    return 0.5 * lam * np.asarray(gamma) ** 2 + np.asarray(p_hat) ** 2 / (2.0 * lam)


@dataclass
class CubCoefficients:
    lam: np.ndarray       # [i, j, k], intra-cell term, W
    lam_bar: np.ndarray   # [i, j, k], inter-cell term, W


def interference_terms(asg: Assignment, p, G):
    """(P_hat, P_bar) per link: later-decoded power and gain-normalized inter-cell power."""
    P = phys.masked_power(asg, p)
    P_hat = phys.intra_power(asg, P)
    Ii = phys.inter_interference(G, P.sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        P_bar = np.where(asg.served, Ii / G, 0.0)
    return P_hat, P_bar


def update_coefficients(cs: ContinuousState, asg: Assignment, ch: ChannelSet, theta=None, G=None):
    """lam = P_hat / gamma and lam_bar = P_bar / gamma, clamped to [1e-8, 1e8]."""
    if G is None:
        G = phys.gains2(ch, cs.theta if theta is None else theta)
    P_hat, P_bar = interference_terms(asg, cs.p, G)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(cs.gamma > 0, P_hat / cs.gamma, LAM_MAX)
        lam_bar = np.where(cs.gamma > 0, P_bar / cs.gamma, LAM_MAX)
    lam = np.clip(np.nan_to_num(lam, nan=LAM_MIN), LAM_MIN, LAM_MAX)
    lam_bar = np.clip(np.nan_to_num(lam_bar, nan=LAM_MIN), LAM_MIN, LAM_MAX)
    served = asg.served
    return CubCoefficients(np.where(served, lam, 1.0), np.where(served, lam_bar, 1.0))


@dataclass
class Layout:
    """Maps served triples to program variables: p~_t at t, gamma_t at T + t, slack last."""

    triples: list
    index: dict
    slack: bool

    @property
    def T(self):
        return len(self.triples)

    @property
    def n(self):
        return 2 * self.T + (1 if self.slack else 0)

    def pack(self, sc: Scenario, p, gamma, eps_bar=None):
        x = np.zeros(self.n)
        for t, (i, j, k) in enumerate(self.triples):
            x[t] = p[i, j, k] / sc.power_max
            x[self.T + t] = gamma[i, j, k]
        if self.slack:
            x[-1] = 0.0 if eps_bar is None else eps_bar
        return x

    def unpack(self, sc: Scenario, x, shape):
        p = np.zeros(shape)
        gamma = np.zeros(shape)
        for t, (i, j, k) in enumerate(self.triples):
            p[i, j, k] = max(x[t], 0.0) * sc.power_max
            gamma[i, j, k] = max(x[self.T + t], 0.0)
        return p, gamma


def make_layout(asg: Assignment, slack=False) -> Layout:
    triples = []
    for (j, k), seq in sorted(asg.order.items()):
        for i in seq:
            triples.append((i, j, k))
    return Layout(triples, {tr: t for t, tr in enumerate(triples)}, slack)


def sic_coefficients(asg: Assignment, G, j, k, i, i2):
    """Normalized linear SIC constraint for i decoded before i2 on (j, k).

    Returns ({(s, k): coef}, const) meaning sum coef * Q[s, k] + const * s2 >= 0, the
    constraint |H_i2|^2 (I_i + s2) >= |H_i|^2 (I_i2 + s2) divided by |H_i|^2 |H_i2|^2.
    """
    coefs = {}
    for s in range(asg.beta.shape[0]):
        if s != j and asg.beta[s, k]:
            coefs[(s, k)] = G[i, s, k] / G[i, j, k] - G[i2, s, k] / G[i2, j, k]
    return coefs, 1.0 / G[i, j, k] - 1.0 / G[i2, j, k]


def build_power_program(sc: Scenario, ch: ChannelSet, asg: Assignment, theta, coeff: CubCoefficients,
                        slack=False, G=None):
    """Substituted power problem (or its slack-relaxed feasibility version).

    Returns (ConvexProgram, Layout).
    """
    if G is None:
        G = phys.gains2(ch, theta)
    lay = make_layout(asg, slack)
    T, n = lay.T, lay.n
    lower = np.zeros(n)
    b = ProgramBuilder(n, lower)
    e = n - 1
    sig = sc.noise_power / sc.power_max
    J = asg.beta.shape[0]

    def cell_vec(s, k, scale=1.0, into=None):
        v = {} if into is None else into
        for u in asg.order.get((s, k), ()):
            t = lay.index[(u, s, k)]
            v[t] = v.get(t, 0.0) + scale
        return v

    if slack:
        b.maximize_linear({e: -1.0})
    else:
        for t in range(T):
            b.maximize_log(T + t, 1.0)

    ranks = asg.ranks()
    for t, (i, j, k) in enumerate(lay.triples):
        lam = coeff.lam[i, j, k] / sc.power_max
        lamb = coeff.lam_bar[i, j, k] / sc.power_max
        seq = asg.order[(j, k)]
        later = seq[ranks[i, j, k] + 1:]
        p_hat = {lay.index[(u, j, k)]: 1.0 for u in later}
        p_bar = {}
        for s in range(J):
            if s != j and asg.beta[s, k]:
                cell_vec(s, k, G[i, s, k] / G[i, j, k], p_bar)
        xi = sig / G[i, j, k]
        lin = {t: -1.0, T + t: xi}
        if slack:
            lin[e] = -1.0
        squares = []
        wg = 0.0
        if p_hat:
            wg += 0.5 * lam
            squares.append((1.0 / (2.0 * lam), p_hat, 0.0))
        if p_bar:
            wg += 0.5 * lamb
            squares.append((1.0 / (2.0 * lamb), p_bar, 0.0))
        if squares:
            squares.insert(0, (wg, {T + t: 1.0}, 0.0))
        b.add_quadratic(lin, squares, 0.0)

    # per-user rate (nats per subchannel)
    if sc.rate_min > 0:
        need = np.log(2.0) * sc.rate_min * sc.num_subchannels / sc.bandwidth
        per_user = {}
        for t, (i, j, k) in enumerate(lay.triples):
            per_user.setdefault(i, {})[T + t] = 1.0
        for i in sorted(per_user):
            b.add_log_rate(per_user[i], need, {e: 1.0} if slack else None)

    # per-BS power budget
    for j in range(J):
        v = {}
        for k in range(asg.beta.shape[1]):
            if asg.beta[j, k]:
                cell_vec(j, k, 1.0, v)
        if slack:
            v[e] = -1.0
        b.add_le(v, 1.0)

    # SIC for adjacent pairs (the normalized condition is an ordering, so adjacent pairs suffice)
    for (j, k), seq in sorted(asg.order.items()):
        for a in range(len(seq) - 1):
            i, i2 = seq[a], seq[a + 1]
            coefs, const = sic_coefficients(asg, G, j, k, i, i2)
            v = {}
            for (s, kk), c in coefs.items():
                cell_vec(s, kk, c, v)
            if slack:
                v[e] = 1.0
            if not v:
                if const * sig >= 0:
                    continue
            b.add_ge(v, -const * sig)
    return b.build(), lay


def utility_bps(sc: Scenario, gamma, served) -> float:
    return float(sc.bandwidth / sc.num_subchannels * np.sum(np.log2(1.0 + gamma[served])))


@dataclass
class PowerResult:
    cs: ContinuousState
    trace: list            # utility in bit/s per CUB iteration (first entry = initial point)
    trace_nats: list       # same, in the solver's units
    status: Status
    iterations: int


def allocate_power(sc: Scenario, ch: ChannelSet, asg: Assignment, theta, init: ContinuousState,
                   G=None, accelerate=True) -> PowerResult:
    """CUB iterations: coefficients from the incumbent, solve, repeat until the utility settles.

    With ``accelerate`` each step is followed by a safeguarded extrapolation along the
    last power update; it is kept only if it satisfies the exact constraints with a
    strictly higher utility, so the trace stays monotone.
    """
    if G is None:
        G = phys.gains2(ch, theta)
    served = asg.served
    cs = ContinuousState(np.where(served, init.p, 0.0), np.where(served, init.gamma, 0.0),
                         np.asarray(theta, float).copy())
    lay = make_layout(asg)
    x = lay.pack(sc, cs.p, cs.gamma)
    u_nats = float(np.sum(np.log1p(x[lay.T:])))
    trace_n = [u_nats]
    status = Status.OPTIMAL
    it = 0
    for it in range(1, sc.max_power_iter + 1):
        coeff = update_coefficients(cs, asg, ch, G=G)
        prog, lay = build_power_program(sc, ch, asg, theta, coeff, G=G)
        res = solve_convex(prog, sc.solver_tol, x0=x)
        if res.status is not Status.OPTIMAL:
            status = res.status
            break
        if res.value < u_nats:
            # numerical noise only; keep the incumbent
            trace_n.append(u_nats)
            break
        rel = abs(res.value - u_nats) / max(1.0, abs(res.value))
        p, gamma = lay.unpack(sc, res.x, served.shape)
        x, u_nats = res.x, res.value
        if accelerate:
            ext = _extrapolate(sc, asg, G, cs.p, p, u_nats)
            if ext is not None:
                p, gamma, u_nats = ext
                x = lay.pack(sc, p, gamma)
        trace_n.append(u_nats)
        cs = ContinuousState(p, gamma, cs.theta)
        if rel < sc.power_eps:
            break
    scale = sc.bandwidth / (sc.num_subchannels * np.log(2.0))
    return PowerResult(cs, [v * scale for v in trace_n], trace_n, status, it)


GAMMA_BACKOFF = 1.0 - 1e-7


def exact_check(sc: Scenario, asg: Assignment, G, p, margin=0.0):
    """Tight SINR targets for powers p if p satisfies power, SIC and rate constraints, else None."""
    served = asg.served
    P = np.where(served, p, 0.0)
    if np.any(P < 0):
        return None
    if np.any(P.sum(axis=(0, 2)) > sc.power_max * (1.0 - margin)):
        return None
    Ph = phys.intra_power(asg, P)
    Ii = phys.inter_interference(G, P.sum(axis=0))
    sinr = np.where(served, G * P / (G * Ph + Ii + sc.noise_power), 0.0)
    for (j, k), seq in asg.order.items():
        for a in range(len(seq) - 1):
            i, i2 = seq[a], seq[a + 1]
            x = G[i2, j, k] * (Ii[i, j, k] + sc.noise_power)
            y = G[i, j, k] * (Ii[i2, j, k] + sc.noise_power)
            if x - y <= margin * (x + y):
                return None
    gamma = sinr * GAMMA_BACKOFF
    if sc.rate_min > 0:
        r = sc.bandwidth / sc.num_subchannels * np.log2(1.0 + gamma).sum(axis=(1, 2))
        if np.any(r <= sc.rate_min * (1.0 + margin)):
            return None
    return gamma


def _extrapolate(sc: Scenario, asg: Assignment, G, p_old, p_new, u_ref):
    d = p_new - p_old
    best = None
    for beta in (1.0, 3.0, 7.0, 15.0):
        p = np.maximum(p_new + beta * d, 0.0)
        gamma = exact_check(sc, asg, G, p, 1e-9)
        if gamma is None:
            break
        u = float(np.sum(np.log1p(gamma[asg.served])))
        if u <= (u_ref if best is None else best[2]):
            break
        best = (p, gamma, u)
    return best


@dataclass
class FeasibilityResult:
    cs: ContinuousState
    eps_bar: float
    status: Status
    iterations: int
    history: list = field(default_factory=list)


def find_feasible(sc: Scenario, ch: ChannelSet, asg: Assignment, theta, rng, G=None) -> FeasibilityResult:
    """Minimize the common slack of the relaxed constraints, refreshing the CUB coefficients."""
    if G is None:
        G = phys.gains2(ch, theta)
    served = asg.served
    shape = served.shape
    loads = asg.alpha.sum(axis=0)[None, :, None] * asg.beta.sum(axis=1)[None, :, None]
    p = np.where(served, rng.uniform(0.05, 1.0, shape) * sc.power_max / np.maximum(loads, 1), 0.0)
    gamma = np.where(served, rng.uniform(0.05, 1.0, shape), 0.0)
    cs = ContinuousState(p, gamma, np.asarray(theta, float).copy())
    hist = []
    eps_bar = np.inf
    status = Status.INFEASIBLE
    stall = 0
    n = 0
    for n in range(1, sc.max_feas_iter + 1):
        coeff = update_coefficients(cs, asg, ch, G=G)
        prog, lay = build_power_program(sc, ch, asg, theta, coeff, slack=True, G=G)
        x0 = lay.pack(sc, cs.p, cs.gamma, 0.0)
        g = prog.residuals(x0)
        x0[-1] = max(0.0, float(g.max())) + 1.0
        res = solve_convex(prog, sc.solver_tol, x0=x0)
        if res.status is Status.ITERATION_LIMIT and not np.all(np.isfinite(res.x)):
            status = res.status
            break
        new = float(res.x[-1])
        p, gamma = lay.unpack(sc, res.x, shape)
        cs = ContinuousState(p, gamma, cs.theta)
        hist.append(new)
        if new < sc.feas_eps:
            eps_bar = new
            status = Status.OPTIMAL
            break
        if new > 0.98 * eps_bar:
            stall += 1
        else:
            stall = 0
        eps_bar = min(eps_bar, new)
        if stall >= 3:
            break
    return FeasibilityResult(cs, eps_bar, status, n, hist)


def tighten_gamma(sc: Scenario, ch: ChannelSet, asg: Assignment, cs: ContinuousState, G=None):
    """Replace gamma with the true SINR of the current powers."""
    g = phys.sinr_all(ch, asg, cs, sc.noise_power, G)
    return ContinuousState(cs.p.copy(), g, cs.theta.copy())
