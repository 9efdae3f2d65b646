"""Swap matching for user association (many-to-one) and subchannel assignment (many-to-many).

Utilities are read off a rates table R[i, j, k] (bit/s) evaluated for a candidate
discrete state with carried-over powers:
  association: user i -> sum_k R[i, :, k],  BS j -> sum_{i,k} R[i, j, k]
  subchannels: unit j -> sum_{i,k} R[i, j, k],  subchannel k -> sum_{i,j} R[i, j, k]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import phys
from .phys import Assignment, ContinuousState
from .scenario import ChannelSet, Scenario

RatesFn = Callable[[Assignment, np.ndarray], np.ndarray]

STRICT_RTOL = 1e-9
MAX_SWAPS = 10_000


def user_utility(i, j, gamma, bandwidth, K=None) -> float:
    """sum_k (W/K) log2(1 + gamma[i, j, k])."""
    gamma = np.asarray(gamma, float)
    K = gamma.shape[-1] if K is None else K
    return float(bandwidth / K * np.sum(np.log2(1.0 + gamma[i, j])))


def is_swap_blocking(before, after, rtol=0.0) -> bool:
    """No involved player loses and at least one gains (by more than rtol relative)."""
    b = np.asarray(before, float)
    a = np.asarray(after, float)
    return bool(np.all(a >= b) and np.any(a > b + rtol * np.abs(b)))


def noma_rates(sc: Scenario, G) -> RatesFn:
    """Rates from the true SINR of carried powers, at fixed squared gains G."""
    W, K, s2 = sc.bandwidth, sc.num_subchannels, sc.noise_power

    def fn(asg: Assignment, p):
        P, Ph, Ii = phys.link_terms(asg, p, G)
        s = np.where(asg.served, G * P / (G * Ph + Ii + s2), 0.0)
        return phys.rates_from_sinr(s, W, K)

    return fn


def sorted_order(G, users, j, k):
    return tuple(sorted(users, key=lambda i: (G[i, j, k], i)))


# ----------------------------------------------------------------------------
# matching state and swap bookkeeping


@dataclass
class MatchingState:
    """Binary matching between left players (rows) and right players (columns) with quotas."""

    mu: np.ndarray
    quota_left: tuple     # (min, max) partners per left player
    quota_right: tuple    # (min, max) partners per right player

    def partners_left(self, e):
        return [int(w) for w in np.flatnonzero(self.mu[e])]

    def partners_right(self, w):
        return [int(e) for e in np.flatnonzero(self.mu[:, w])]

    def within_quota(self) -> bool:
        rl, rr = self.mu.sum(axis=1), self.mu.sum(axis=0)
        (a, b), (c, d) = self.quota_left, self.quota_right
        return bool(np.all((rl >= a) & (rl <= b)) and np.all((rr >= c) & (rr <= d)))

    @classmethod
    def association(cls, asg: Assignment, max_per_cell):
        return cls(asg.alpha.astype(bool), (1, 1), (2, max_per_cell))

    @classmethod
    def subchannels(cls, asg: Assignment):
        J, K = asg.beta.shape
        return cls(asg.beta.astype(bool), (1, K), (1, J))


@dataclass
class SwapProposal:
    """Players (e, e2) exchange partners (w, w2); utilities of the four players before/after."""

    kind: str
    move: tuple
    players: tuple
    before: tuple
    after: tuple
    blocking: bool = False

    @property
    def gain(self) -> float:
        return float(np.sum(self.after) - np.sum(self.before))


@dataclass
class SwapGame:
    """Evaluation context shared by the swap search and the stability certificate."""

    kind: str                # "association" or "subchannel"
    G: np.ndarray
    rates: RatesFn
    rtol: float = STRICT_RTOL

    def table(self, asg, p):
        R = self.rates(asg, p)
        if self.kind == "association":
            return R.sum(axis=(1, 2)), R.sum(axis=(0, 2))
        return R.sum(axis=(0, 2)), R.sum(axis=(0, 1))

    def proposals(self, asg: Assignment):
        if self.kind == "association":
            bs = asg.alpha.argmax(axis=1)
            I = len(bs)
            for i in range(I):
                for i2 in range(i + 1, I):
                    if bs[i] != bs[i2]:
                        yield (i, i2)
        else:
            b = asg.beta
            J, K = b.shape
            for j in range(J):
                for j2 in range(j + 1, J):
                    for k in range(K):
                        if not (b[j, k] and not b[j2, k]):
                            continue
                        for k2 in range(K):
                            if b[j2, k2] and not b[j, k2]:
                                yield (j, k, j2, k2)

    def players(self, asg, move):
        """(left e, left e2, right w, right w2) for the move."""
        if self.kind == "association":
            i, i2 = move
            return i, i2, asg.bs_of(i), asg.bs_of(i2)
        j, k, j2, k2 = move
        return j, j2, k, k2

    def apply(self, asg: Assignment, p, move):
        if self.kind == "association":
            return swap_users(asg, p, move[0], move[1], self.G)
        return swap_subchannels(asg, p, *move, self.G)

    def evaluate(self, asg, p, move, base=None) -> SwapProposal:
        e, e2, w, w2 = self.players(asg, move)
        left, right = base if base is not None else self.table(asg, p)
        asg2, p2 = self.apply(asg, p, move)
        l2, r2 = self.table(asg2, p2)
        before = (left[e], left[e2], right[w], right[w2])
        after = (l2[e], l2[e2], r2[w], r2[w2])
        names = ("user", "user", "bs", "bs") if self.kind == "association" else ("unit", "unit", "sub", "sub")
        players = tuple(zip(names, (e, e2, w, w2)))
        prop = SwapProposal(self.kind, move, players, tuple(map(float, before)), tuple(map(float, after)))
        prop.blocking = is_swap_blocking(before, after, self.rtol)
        return prop


def swap_users(asg: Assignment, p, i, i2, G):
    """Users i and i2 exchange BSs; each takes over the other's per-subchannel powers."""
    j, j2 = asg.bs_of(i), asg.bs_of(i2)
    alpha = asg.alpha.copy()
    alpha[i, j], alpha[i2, j2] = 0, 0
    alpha[i, j2], alpha[i2, j] = 1, 1
    q = np.array(p, float, copy=True)
    q[i, j2], q[i2, j] = p[i2, j2], p[i, j]
    q[i, j], q[i2, j2] = 0.0, 0.0
    out = Assignment(alpha, asg.beta.copy(), dict(asg.order))
    for s in (j, j2):
        users = out.users_of(s)
        for k in np.flatnonzero(out.beta[s]):
            out.order[(s, int(k))] = sorted_order(G, users, s, int(k))
    return out, q


def swap_subchannels(asg: Assignment, p, j, k, j2, k2, G):
    """Unit j trades subchannel k for unit j2's subchannel k2; powers follow their unit."""
    beta = asg.beta.copy()
    beta[j, k], beta[j2, k2] = 0, 0
    beta[j, k2], beta[j2, k] = 1, 1
    q = np.array(p, float, copy=True)
    q[:, j, k2], q[:, j2, k] = p[:, j, k], p[:, j2, k2]
    q[:, j, k], q[:, j2, k2] = 0.0, 0.0
    order = dict(asg.order)
    order.pop((j, k), None)
    order.pop((j2, k2), None)
    out = Assignment(asg.alpha.copy(), beta, order)
    out.order[(j, k2)] = sorted_order(G, out.users_of(j), j, k2)
    out.order[(j2, k)] = sorted_order(G, out.users_of(j2), j2, k)
    return out, q


@dataclass
class Stability:
    stable: bool
    witness: SwapProposal | None
    checked: int


def certify_stability(game: SwapGame, asg: Assignment, p) -> Stability:
    """Exhaustive scan over every candidate swap; first swap-blocking pair is the witness."""
    base = game.table(asg, p)
    n = 0
    for move in game.proposals(asg):
        n += 1
        prop = game.evaluate(asg, p, move, base)
        if prop.blocking:
            return Stability(False, prop, n)
    return Stability(True, None, n)


@dataclass
class MatchingOutcome:
    asg: Assignment
    p: np.ndarray
    swaps: list = field(default_factory=list)
    scans: int = 0
    capped: bool = False

    @property
    def num_swaps(self):
        return len(self.swaps)


# ----------------------------------------------------------------------------
# initializations


def equal_power(sc: Scenario, asg: Assignment) -> np.ndarray:
    """P_max split evenly over the served links of each BS."""
    served = asg.served
    cnt = served.sum(axis=(0, 2)).astype(float)
    per = np.where(cnt > 0, sc.power_max / np.maximum(cnt, 1), 0.0)
    return np.where(served, per[None, :, None], 0.0)


def _sorted_orders(asg: Assignment, G):
    J, K = asg.beta.shape
    asg.order = {(j, k): sorted_order(G, asg.users_of(j), j, k)
                 for j in range(J) for k in range(K) if asg.beta[j, k]}
    return asg


def association_preferences(sc: Scenario, G, beta):
    """Estimated rate of user i at BS j with an equal share of P_max and full-power neighbours."""
    I, J, K = G.shape
    nk = np.maximum(beta.sum(axis=1), 1)
    Q = sc.power_max / nk[:, None] * beta
    own = sc.power_max / (sc.max_per_cell * nk)
    Ii = phys.inter_interference(G, Q)
    snr = G * own[None, :, None] / (Ii + sc.noise_power)
    return (sc.bandwidth / K * np.log2(1.0 + snr) * beta[None]).sum(axis=2)


def deferred_acceptance(pref_user, pref_bs, quota_max, quota_min=2):
    """Users propose in preference order; BSs keep their quota_max best proposers.

    BSs left with fewer than quota_min users then recruit their favourite user
    from BSs holding more than quota_min. Ties go to the lower index.
    """
    I, J = pref_user.shape
    if I < quota_min * J:
        raise ValueError(f"need at least {quota_min * J} users for {J} BSs, got {I}")
    if I > quota_max * J:
        raise ValueError("users exceed total cell capacity")
    ranking = [sorted(range(J), key=lambda j: (-pref_user[i, j], j)) for i in range(I)]
    nxt = [0] * I
    held: list[list[int]] = [[] for _ in range(J)]
    free = list(range(I))
    while free:
        i = free.pop(0)
        j = ranking[i][nxt[i]]
        nxt[i] += 1
        held[j].append(i)
        if len(held[j]) > quota_max:
            held[j].sort(key=lambda u: (-pref_bs[u, j], u))
            free.append(held[j].pop())
    while True:
        short = [j for j in range(J) if len(held[j]) < quota_min]
        if not short:
            break
        j = short[0]
        donors = [u for s in range(J) if len(held[s]) > quota_min for u in held[s]]
        u = min(donors, key=lambda u: (-pref_bs[u, j], u))
        held[[s for s in range(J) if u in held[s]][0]].remove(u)
        held[j].append(u)
    alpha = np.zeros((I, J), np.int8)
    for j in range(J):
        alpha[held[j], j] = 1
    return alpha


def initial_association(sc: Scenario, G, beta=None) -> np.ndarray:
    I, J, K = G.shape
    beta = np.ones((J, K), np.int8) if beta is None else np.asarray(beta, np.int8)
    pref = association_preferences(sc, G, beta)
    return deferred_acceptance(pref, pref, sc.max_per_cell)


def initial_subchannels(sc: Scenario, G, alpha, rates_fn: RatesFn | None = None):
    """Each unit takes its favourite subchannel, uncovered subchannels go to their keenest
    unit, then units propose to the rest; a subchannel accepts when its own utility does
    not drop and the proposer gains."""
    I, J, K = G.shape
    alpha = np.asarray(alpha, np.int8)
    rates_fn = noma_rates(sc, G) if rates_fn is None else rates_fn
    cell = alpha.astype(bool)
    load = np.maximum(cell.sum(axis=0), 1)
    snr = G * (sc.power_max / load)[None, :, None] / sc.noise_power
    est = np.array([[np.sum(np.log2(1.0 + snr[cell[:, j], j, k])) for k in range(K)] for j in range(J)])
    beta = np.zeros((J, K), np.int8)
    for j in range(J):
        beta[j, int(np.argmax(est[j]))] = 1
    for k in range(K):
        if not beta[:, k].any():
            beta[int(np.argmax(est[:, k])), k] = 1

    def utilities(b):
        asg = _sorted_orders(Assignment(alpha, b, {}), G)
        R = rates_fn(asg, equal_power(sc, asg))
        return R.sum(axis=(0, 2)), R.sum(axis=(0, 1))

    uj, uk = utilities(beta)
    for j in range(J):
        for k in sorted(range(K), key=lambda k: (-est[j, k], k)):
            if beta[j, k]:
                continue
            b2 = beta.copy()
            b2[j, k] = 1
            vj, vk = utilities(b2)
            if vk[k] >= uk[k] and vj[j] > uj[j] * (1 + STRICT_RTOL):
                beta, uj, uk = b2, vj, vk
    return beta


def initial_assignment(sc: Scenario, G, rates_fn: RatesFn | None = None) -> Assignment:
    """Deferred-acceptance association under full reuse, then subchannel proposals, sorted orders."""
    alpha = initial_association(sc, G)
    beta = initial_subchannels(sc, G, alpha, rates_fn)
    return _sorted_orders(Assignment(alpha, beta, {}), G)


# ----------------------------------------------------------------------------
# swap searches


def associate_users(sc: Scenario, ch: ChannelSet, cs: ContinuousState, asg: Assignment | None = None,
                    rates_fn: RatesFn | None = None, G=None, max_swaps=MAX_SWAPS) -> MatchingOutcome:
    """Swap search over user pairs in lexicographic order, restarting after each executed swap.

    Without an incumbent ``asg`` the association is initialized by deferred acceptance
    (full subchannel reuse, equal power split).
    """
    I, J = sc.num_users, sc.num_bs
    if I < 2 * J:
        raise ValueError(f"need at least two users per BS (I={I}, J={J})")
    G = phys.gains2(ch, cs.theta) if G is None else G
    rates_fn = noma_rates(sc, G) if rates_fn is None else rates_fn
    if asg is None:
        alpha = initial_association(sc, G)
        asg = _sorted_orders(Assignment(alpha, np.ones((J, sc.num_subchannels), np.int8), {}), G)
        p = equal_power(sc, asg)
    else:
        asg, p = asg.copy(), np.where(asg.served, cs.p, 0.0)
    game = SwapGame("association", G, rates_fn)
    out = MatchingOutcome(asg, p)
    while True:
        out.scans += 1
        base = game.table(out.asg, out.p)
        hit = None
        for move in game.proposals(out.asg):
            prop = game.evaluate(out.asg, out.p, move, base)
            if prop.blocking:
                hit = prop
                break
        if hit is None:
            break
        if len(out.swaps) >= max_swaps:
            out.capped = True
            break
        out.asg, out.p = game.apply(out.asg, out.p, hit.move)
        out.swaps.append(hit)
    return out


def assign_subchannels(sc: Scenario, ch: ChannelSet, cs: ContinuousState, asg: Assignment,
                       rates_fn: RatesFn | None = None, G=None, initialize=False,
                       max_swaps=MAX_SWAPS) -> MatchingOutcome:
    """For each unit j pick the swap partner maximizing its own utility among swap-blocking
    candidates, execute, and sweep the units until a full pass finds nothing."""
    J, K = asg.beta.shape
    G = phys.gains2(ch, cs.theta) if G is None else G
    rates_fn = noma_rates(sc, G) if rates_fn is None else rates_fn
    if K == 1:
        b = np.ones((J, 1), np.int8)
        a = _sorted_orders(Assignment(asg.alpha.copy(), b, {}), G)
        return MatchingOutcome(a, equal_power(sc, a) if initialize else np.where(a.served, cs.p, 0.0), [], 1)
    if initialize:
        beta = initial_subchannels(sc, G, asg.alpha, rates_fn)
        a = _sorted_orders(Assignment(asg.alpha.copy(), beta, {}), G)
        p = equal_power(sc, a)
    else:
        a, p = asg.copy(), np.where(asg.served, cs.p, 0.0)
    game = SwapGame("subchannel", G, rates_fn)
    out = MatchingOutcome(a, p)
    while not out.capped:
        out.scans += 1
        moved = False
        for j in range(J):
            base = game.table(out.asg, out.p)
            best = None
            for move in game.proposals(out.asg):
                if j not in (move[0], move[2]):
                    continue
                prop = game.evaluate(out.asg, out.p, move, base)
                if not prop.blocking:
                    continue
                uj = prop.after[0] if move[0] == j else prop.after[1]
                if best is None or uj > best[0]:
                    best = (uj, prop)
            if best is None:
                continue
            if len(out.swaps) >= max_swaps:
                out.capped = True
                break
            out.asg, out.p = game.apply(out.asg, out.p, best[1].move)
            out.swaps.append(best[1])
            moved = True
        if not moved:
            break
    return out
