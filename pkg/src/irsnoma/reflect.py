"""Reflection design by semidefinite relaxation plus decoding-order update.

Conventions: v = [e^{j theta_1}, ..., e^{j theta_M}, 1] and, per link, the lifted
vector w = [a; conj(h)] with a_m = g_m conj(f_m), so that H = w^H v and
|H|^2 = v^H (w w^H) v = tr(C V) + |h|^2 with C = [[a a^H, h a], [conj(h) a^H, 0]].
Any V >= 0 with unit diagonal therefore gives a nonnegative "gain" w^H V w.

The auxiliary gain bounds of the SIC surrogate enter monotonically, so at any
feasible point they can be set equal to the lifted gains; the program is built
directly in V with those substitutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import phys
from .conic import SdpProgram, Status, solve_sdp
from .phys import Assignment, ContinuousState
from .scenario import ChannelSet, Scenario


def nu_bar(theta) -> np.ndarray:
    return np.append(np.exp(1j * np.asarray(theta, float)), 1.0 + 0j)


def link_vectors(ch: ChannelSet) -> np.ndarray:
    """w[i, j, k, :] of length M + 1."""
    a = phys.reflect_coeffs(ch)
    return np.concatenate([a, np.conj(ch.h)[..., None]], axis=-1)


def link_vector(ch: ChannelSet, i, j, k) -> np.ndarray:
    a = ch.g[i, k] * np.conj(ch.f[j, k])
    return np.append(a, np.conj(ch.h[i, j, k]))


def lift_channel(ch: ChannelSet, i, j, k) -> np.ndarray:
    """Hermitian C with nu_bar^H C nu_bar + |h|^2 = |H|^2."""
    a = ch.g[i, k] * np.conj(ch.f[j, k])
    h = ch.h[i, j, k]
    M = a.size
    C = np.zeros((M + 1, M + 1), complex)
    C[:M, :M] = np.outer(a, np.conj(a))
    C[:M, M] = h * a
    C[M, :M] = np.conj(h) * np.conj(a)
    return C


def lifted_gains(ch: ChannelSet, V) -> np.ndarray:
    """w^H V w for every link (equals |H|^2 when V is rank one from nu_bar)."""
    W = link_vectors(ch)
    return np.einsum("ijkm,mn,ijkn->ijk", np.conj(W), V, W).real


def theta_from_vector(v) -> np.ndarray:
    v = np.asarray(v)
    return np.mod(np.angle(v[:-1] / v[-1]), 2 * np.pi)


def selection_metric(ch: ChannelSet, theta) -> float:
    """Sum of |H|^2 over every (i, j, k)."""
    return float(phys.gains2(ch, theta).sum())


def rank_one_check(V, tol=1e-6) -> bool:
    w = np.linalg.eigvalsh(V)
    if w[-1] <= 0:
        return False
    return bool(len(w) < 2 or w[-2] <= tol * w[-1])


def decoding_order(ch: ChannelSet, theta, asg: Assignment, G=None) -> dict:
    """Ascending |H|^2 on every active (j, k); ties broken by user index."""
    if G is None:
        G = phys.gains2(ch, theta)
    order = {}
    J, K = asg.beta.shape
    for j in range(J):
        users = asg.users_of(j)
        for k in range(K):
            if asg.beta[j, k]:
                order[(j, k)] = tuple(sorted(users, key=lambda i: (G[i, j, k], i)))
    return order


# ----------------------------------------------------------------------------
# SDP construction


@dataclass
class LinkTerms:
    """Per-link powers seen by the SINR constraint: own, later-decoded, and BS totals Q[s, k]."""

    own: np.ndarray
    intra: np.ndarray
    Q: np.ndarray
    gamma: np.ndarray
    sic: bool


def noma_terms(asg: Assignment, cs: ContinuousState) -> LinkTerms:
    P = phys.masked_power(asg, cs.p)
    return LinkTerms(P, phys.intra_power(asg, P), P.sum(axis=0), np.where(asg.served, cs.gamma, 0.0), True)


@dataclass
class ReflectionSdp:
    program: SdpProgram
    kinds: list          # "sinr" / "sic" per inequality row
    rows: list           # link or pair key per row
    gscale: float


def build_reflection_sdp(sc: Scenario, ch: ChannelSet, asg: Assignment, cs: ContinuousState,
                         lin_gains=None, terms: LinkTerms | None = None,
                         objective: str | None = None) -> ReflectionSdp:
    """Linear-in-V program: SINR rows for served links, linearized SIC rows for ordered pairs.

    ``lin_gains`` holds the squared gains at the linearization point (default: at cs.theta).
    """
    I, J, K, M = ch.shape
    if lin_gains is None:
        lin_gains = phys.gains2(ch, cs.theta)
    if terms is None:
        terms = noma_terms(asg, cs)
    objective = sc.sdp_objective if objective is None else objective
    gscale = float(np.mean(lin_gains))
    W = link_vectors(ch).reshape(-1, M + 1).T / np.sqrt(gscale)
    nat = I * J * K
    idx = lambda i, j, k: (i * J + j) * K + k
    Gn = lin_gains / gscale
    s2 = sc.noise_power / gscale
    Q, own, intra, gam = terms.Q, terms.own, terms.intra, terms.gamma
    rows_C, rows_c, kinds, keys = [], [], [], []
    served = asg.served
    for i, j, k in zip(*np.nonzero(served)):
        g = gam[i, j, k]
        if g <= 1e-12:
            continue
        row = np.zeros(nat)
        row[idx(i, j, k)] = own[i, j, k] - g * intra[i, j, k]
        for s in range(J):
            if s != j and Q[s, k] > 0:
                row[idx(i, s, k)] -= g * Q[s, k]
        rows_C.append(row)
        rows_c.append(g * s2)
        kinds.append("sinr")
        keys.append((int(i), int(j), int(k)))
    if terms.sic:
        for (j, k), seq in sorted(asg.order.items()):
            for a in range(len(seq)):
                for b in range(a + 1, len(seq)):
                    i, i2 = seq[a], seq[b]
                    row = np.zeros(nat)
                    rhs = 0.0
                    row[idx(i2, j, k)] += s2
                    row[idx(i, j, k)] -= s2
                    for s in range(J):
                        if s == j or Q[s, k] <= 0:
                            continue
                        q = Q[s, k]
                        row[idx(i2, j, k)] += Gn[i, s, k] * q
                        row[idx(i, s, k)] += Gn[i2, j, k] * q
                        row[idx(i, j, k)] -= Gn[i2, s, k] * q
                        row[idx(i2, s, k)] -= Gn[i, j, k] * q
                        rhs += (Gn[i2, j, k] * Gn[i, s, k] - Gn[i, j, k] * Gn[i2, s, k]) * q
                    rows_C.append(row)
                    rows_c.append(rhs)
                    kinds.append("sic")
                    keys.append((j, k, i, i2))
    C = np.array(rows_C).reshape(-1, nat)
    c = np.array(rows_c, float)
    f = np.ones(nat) if objective == "sum_gain" else None
    prog = SdpProgram.from_complex_atoms(W, C, c, f)
    return ReflectionSdp(prog, kinds, keys, gscale)


# ----------------------------------------------------------------------------
# randomization and the co-design step


def gaussian_randomize(V, ch: ChannelSet, samples: int, rng, extra=(), return_all=False):
    """Draw candidates nu = U S^{1/2} r, map to unit-modulus phases, keep the best metric.

    ``extra`` candidate phase vectors (e.g. the incumbent) join the pool.
    """
    if samples < 1:
        raise ValueError("need at least one randomization sample")
    n = V.shape[0]
    w, U = np.linalg.eigh(0.5 * (V + V.conj().T))
    w = np.clip(w, 0.0, None)
    r = (rng.standard_normal((n, samples)) + 1j * rng.standard_normal((n, samples))) / np.sqrt(2.0)
    nus = (U * np.sqrt(w)) @ r
    cands = [theta_from_vector(nus[:, s]) for s in range(samples)]
    cands += [np.mod(np.asarray(t, float), 2 * np.pi) for t in extra]
    metrics = np.array([selection_metric(ch, t) for t in cands])
    best = int(np.argmax(metrics))
    if return_all:
        return cands[best], cands, metrics
    return cands[best]


@dataclass
class CodesignResult:
    theta: np.ndarray
    order: dict
    status: str            # "rank_one", "randomized", "sdp_infeasible", "sdp_failed", "no_irs"
    sdp_status: Status | None = None


def _candidate_ok(sc, ch, asg, cs, terms: LinkTerms, theta):
    """Exact SINR and SIC re-check of a candidate at fixed powers."""
    G = phys.gains2(ch, theta)
    Ii = phys.inter_interference(G, terms.Q)
    sinr = np.where(asg.served, G * terms.own / (G * terms.intra + Ii + sc.noise_power), 0.0)
    if np.any(sinr[asg.served] < terms.gamma[asg.served] * (1 - 1e-9)):
        return False
    if terms.sic:
        for _, m, scale in phys.sic_margins_all(asg, cs.p, G, sc.noise_power):
            if m < -1e-9 * scale:
                return False
    return True


def codesign(sc: Scenario, ch: ChannelSet, asg: Assignment, cs: ContinuousState, prev_theta, rng,
             terms: LinkTerms | None = None, keep_order=False) -> CodesignResult:
    """One SDR pass at the incumbent's gains, rank-one extraction or randomization, then sorting."""
    prev_theta = np.asarray(prev_theta, float)
    M = ch.shape[3]
    order_of = (lambda th: dict(asg.order)) if keep_order else (lambda th: decoding_order(ch, th, asg))
    if M == 0:
        return CodesignResult(prev_theta.copy(), order_of(prev_theta), "no_irs")
    if terms is None:
        terms = noma_terms(asg, cs)
    theta = prev_theta.copy()
    status, sdp_status = "randomized", None
    for _ in range(max(1, sc.sca_passes)):
        lin = phys.gains2(ch, theta)
        sdp = build_reflection_sdp(sc, ch, asg, ContinuousState(cs.p, cs.gamma, theta), lin, terms)
        res = solve_sdp(sdp.program, sc.solver_tol)
        sdp_status = res.status
        if res.status is Status.INFEASIBLE:
            return CodesignResult(theta, order_of(theta), "sdp_infeasible", res.status)
        if res.status is not Status.OPTIMAL:
            return CodesignResult(theta, order_of(theta), "sdp_failed", res.status)
        V = res.V
        if rank_one_check(V):
            w, U = np.linalg.eigh(V)
            cand = [theta_from_vector(U[:, -1])]
            status = "rank_one"
        else:
            _, cand, _ = gaussian_randomize(V, ch, sc.gr_samples, rng, return_all=True)
            # interior-point solutions keep a small residual spectrum even when the
            # optimum is rank one, so the principal direction always competes too
            w, U = np.linalg.eigh(V)
            cand.append(theta_from_vector(U[:, -1]))
            status = "randomized"
        pool = cand + [theta]
        if sc.gr_filter_feasible:
            pool = [t for t in cand if _candidate_ok(sc, ch, asg, cs, terms, t)] + [theta]
        metrics = [selection_metric(ch, t) for t in pool]
        theta = pool[int(np.argmax(metrics))]
    return CodesignResult(theta, order_of(theta), status, sdp_status)
