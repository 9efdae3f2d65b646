"""Combined channels, SINR, rates and SIC margins for a candidate solution.

Array conventions: link arrays are indexed [i, j, k] (user, BS, subchannel).
Most functions come in a vectorized form (``*_all``) used by the optimizers
and a scalar form matching the textbook per-link definitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import ChannelSet, Scenario

LN2 = np.log(2.0)


@dataclass
class Assignment:
    """Discrete state: alpha[i, j], beta[j, k] and decoding orders order[(j, k)].

    ``order[(j, k)]`` lists the users of BS j in decoding sequence (first decoded
    first) and is present for every (j, k) with beta[j, k] = 1.
    """

    alpha: np.ndarray
    beta: np.ndarray
    order: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.int8)
        self.beta = np.asarray(self.beta, dtype=np.int8)
        self.order = {tuple(map(int, key)): tuple(int(u) for u in v) for key, v in self.order.items()}

    def copy(self) -> "Assignment":
        return Assignment(self.alpha.copy(), self.beta.copy(), dict(self.order))

    @property
    def served(self) -> np.ndarray:
        """Boolean mask [i, j, k] of served links."""
        return (self.alpha[:, :, None] * self.beta[None, :, :]).astype(bool)

    def users_of(self, j) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.alpha[:, j])]

    def bs_of(self, i) -> int:
        return int(np.flatnonzero(self.alpha[i])[0])

    def ranks(self) -> np.ndarray:
        """rank[i, j, k] = decoding position, -1 where not served."""
        I, J = self.alpha.shape
        K = self.beta.shape[1]
        r = -np.ones((I, J, K), dtype=int)
        for (j, k), seq in self.order.items():
            for pos, u in enumerate(seq):
                r[u, j, k] = pos
        return r

    def key(self):
        return (self.alpha.tobytes(), self.beta.tobytes(), tuple(sorted(self.order.items())))

    def validate(self, max_per_cell: int | None = None) -> None:
        a, b = self.alpha, self.beta
        if not np.all(a.sum(axis=1) == 1):
            raise ValueError("every user must be associated with exactly one BS")
        load = a.sum(axis=0)
        if np.any(load < 2) or (max_per_cell is not None and np.any(load > max_per_cell)):
            raise ValueError(f"cell loads {load.tolist()} violate the cell-size bounds")
        if np.any(b.sum(axis=1) < 1) or np.any(b.sum(axis=0) < 1):
            raise ValueError("every BS and every subchannel needs at least one match")
        J, K = b.shape
        for j in range(J):
            for k in range(K):
                if b[j, k]:
                    seq = self.order.get((j, k))
                    if seq is None or sorted(seq) != self.users_of(j):
                        raise ValueError(f"decoding order on ({j}, {k}) is not a permutation of the cell")


@dataclass
class ContinuousState:
    """Powers p[i, j, k] (W), SINR targets gamma[i, j, k] and IRS phases theta[m]."""

    p: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray

    def copy(self) -> "ContinuousState":
        return ContinuousState(self.p.copy(), self.gamma.copy(), self.theta.copy())


# ----------------------------------------------------------------------------
# vectorized evaluation


def reflect_coeffs(ch: ChannelSet) -> np.ndarray:
    """a[i, j, k, m] = g[i, k, m] conj(f[j, k, m]) so that H = h + a^H e^{j theta}."""
    return ch.g[:, None, :, :] * np.conj(ch.f[None, :, :, :])


def combined_gains(ch: ChannelSet, theta) -> np.ndarray:
    """H[i, j, k] = h + sum_m conj(g_m) e^{j theta_m} f_m for every link."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (ch.f.shape[-1],):
        raise ValueError("theta length must equal the number of IRS elements")
    if theta.size == 0:
        return ch.h.copy()
    v = np.exp(1j * theta)
    return ch.h + np.einsum("ikm,jkm,m->ijk", np.conj(ch.g), ch.f, v)


def gains2(ch: ChannelSet, theta) -> np.ndarray:
    H = combined_gains(ch, theta)
    return H.real ** 2 + H.imag ** 2


def masked_power(asg: Assignment, p) -> np.ndarray:
    return np.where(asg.served, p, 0.0)


def intra_power(asg: Assignment, p) -> np.ndarray:
    """Sum of powers of users decoded after i on (j, k)."""
    P = masked_power(asg, p)
    out = np.zeros_like(P)
    for (j, k), seq in asg.order.items():
        tail = 0.0
        for u in reversed(seq):
            out[u, j, k] = tail
            tail += P[u, j, k]
    return out


def inter_interference(G, Q) -> np.ndarray:
    """I_inter[i, j, k] = sum_{s != j} G[i, s, k] Q[s, k] with Q[s, k] the total power of BS s on k."""
    tot = np.einsum("isk,sk->ik", G, Q)
    return tot[:, None, :] - G * Q[None, :, :]


def link_terms(asg: Assignment, p, G):
    """(own power, intra power, inter-cell interference) per link, NOMA model."""
    P = masked_power(asg, p)
    Q = P.sum(axis=0)
    return P, intra_power(asg, P), inter_interference(G, Q)


def sinr_all(ch: ChannelSet, asg: Assignment, cs: ContinuousState, noise_power, G=None) -> np.ndarray:
    if G is None:
        G = gains2(ch, cs.theta)
    P, Ph, Ii = link_terms(asg, cs.p, G)
    s = G * P / (G * Ph + Ii + noise_power)
    return np.where(asg.served, s, 0.0)


def rates_from_sinr(sinr, bandwidth, K) -> np.ndarray:
    return bandwidth / K * np.log2(1.0 + sinr)


def rates_all(sc: Scenario, ch: ChannelSet, asg: Assignment, cs: ContinuousState, G=None) -> np.ndarray:
    return rates_from_sinr(sinr_all(ch, asg, cs, sc.noise_power, G), sc.bandwidth, sc.num_subchannels)


def sic_margins_all(asg: Assignment, p, G, noise_power, adjacent=False):
    """List of ((j, k, i, i2), margin, scale) for ordered pairs i before i2.

    ``scale`` is a magnitude reference for relative tolerance checks.
    """
    P = masked_power(asg, p)
    Ii = inter_interference(G, P.sum(axis=0))
    out = []
    for (j, k), seq in sorted(asg.order.items()):
        n = len(seq)
        for a in range(n):
            later = range(a + 1, min(a + 2, n)) if adjacent else range(a + 1, n)
            for b in later:
                i, i2 = seq[a], seq[b]
                x = G[i2, j, k] * (Ii[i, j, k] + noise_power)
                y = G[i, j, k] * (Ii[i2, j, k] + noise_power)
                out.append(((j, k, i, i2), x - y, x + y))
    return out


# ----------------------------------------------------------------------------
# per-link operations


def _check_served(asg: Assignment, i, j, k):
    if not (asg.alpha[i, j] and asg.beta[j, k]):
        raise ValueError(f"user {i} is not served on BS {j}, subchannel {k}")


def combined_gain(ch: ChannelSet, theta, i, j, k) -> complex:
    I, J, K, M = ch.shape
    if not (0 <= i < I and 0 <= j < J and 0 <= k < K):
        raise IndexError("link index out of range")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (M,):
        raise ValueError("theta length must equal the number of IRS elements")
    return complex(ch.h[i, j, k] + np.sum(np.conj(ch.g[i, k]) * np.exp(1j * theta) * ch.f[j, k]))


def sinr(ch: ChannelSet, asg: Assignment, cs: ContinuousState, i, j, k, noise_power) -> float:
    _check_served(asg, i, j, k)
    return float(sinr_all(ch, asg, cs, noise_power)[i, j, k])


def rate(sc: Scenario, ch: ChannelSet, asg: Assignment, cs: ContinuousState, i, j, k) -> float:
    if not (asg.alpha[i, j] and asg.beta[j, k]):
        return 0.0
    return float(rates_all(sc, ch, asg, cs)[i, j, k])


def sic_margin(ch: ChannelSet, asg: Assignment, cs: ContinuousState, j, k, i, i2, noise_power) -> float:
    """|H_i2|^2 (I_inter(i) + s2) - |H_i|^2 (I_inter(i2) + s2); >= 0 means i2 can decode i."""
    _check_served(asg, i, j, k)
    _check_served(asg, i2, j, k)
    G = gains2(ch, cs.theta)
    Ii = inter_interference(G, masked_power(asg, cs.p).sum(axis=0))
    return float(G[i2, j, k] * (Ii[i, j, k] + noise_power) - G[i, j, k] * (Ii[i2, j, k] + noise_power))


def objective(sc: Scenario, ch: ChannelSet, asg: Assignment, cs: ContinuousState) -> float:
    return float(rates_all(sc, ch, asg, cs).sum())


# ----------------------------------------------------------------------------
# constraint audit


@dataclass
class Audit:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def audit(sc: Scenario, ch: ChannelSet, asg: Assignment, cs: ContinuousState, tol=1e-4) -> Audit:
    """Check every constraint of the sum-rate problem directly from the physics."""
    bad = []
    try:
        asg.validate(sc.max_per_cell)
    except ValueError as e:
        bad.append(("assignment", str(e)))
        return Audit(False, bad)
    served = asg.served
    if np.any(cs.p < -tol * sc.power_max):
        bad.append(("p>=0", float(cs.p.min())))
    if np.any(np.abs(cs.p[~served]) > 0):
        bad.append(("p unserved", float(np.abs(cs.p[~served]).max())))
    bs_power = masked_power(asg, cs.p).sum(axis=(0, 2))
    for j, pw in enumerate(bs_power):
        if pw > sc.power_max * (1 + tol):
            bad.append(("power", j, float(pw)))
    G = gains2(ch, cs.theta)
    R = rates_all(sc, ch, asg, cs, G)
    for i, r in enumerate(R.sum(axis=(1, 2))):
        if r < sc.rate_min * (1 - tol):
            bad.append(("rate", i, float(r)))
    for key, m, scale in sic_margins_all(asg, cs.p, G, sc.noise_power):
        if m < -tol * scale:
            bad.append(("sic", key, float(m / scale)))
    return Audit(not bad, bad)
