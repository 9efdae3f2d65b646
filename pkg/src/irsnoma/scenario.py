"""Experiment description and seeded channel generation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def dbm2watt(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def watt2dbm(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float)) + 30.0


def _pos(a, n, name):
    a = np.asarray(a, dtype=float)
    if a.shape != (n, 3):
        raise ValueError(f"{name} must have shape ({n}, 3), got {a.shape}")
    return a


@dataclass
class Scenario:
    """Geometry, radio constants and algorithm settings for one experiment.

    Everything is stored in linear SI units. Use ``from_config`` for dB/dBm input.
    """

    num_users: int
    num_bs: int
    num_subchannels: int
    num_elements: int
    user_pos: np.ndarray
    bs_pos: np.ndarray
    irs_pos: np.ndarray
    pathloss_ref: float = 1e-3
    a_bu: float = 3.2
    a_iu: float = 2.6
    a_bi: float = 2.2
    rician_k: float = 2.0
    bandwidth: float = 3e6
    noise_power: float = 1e-11
    rate_min: float = 5e5
    power_max: float = float(dbm2watt(23.0))
    max_per_cell: int = 2
    p_static: float = 0.0
    # algorithm settings
    eps: float = 1e-4            # relative objective change for the outer loop
    power_eps: float = 1e-4      # relative utility change for the CUB loop
    feas_eps: float = 1e-6       # slack threshold of the feasibility search
    solver_tol: float = 1e-6
    max_outer: int = 10          # N1
    max_power_iter: int = 50     # N2
    max_feas_iter: int = 40      # N3
    gr_samples: int = 50         # N4
    sca_passes: int = 1
    sdp_objective: str = "sum_gain"
    gr_filter_feasible: bool = False
    orders: str = "all"
    enum_cap: int = 10_000
    seed: int = 0

    def __post_init__(self):
        self.user_pos = _pos(self.user_pos, self.num_users, "user_pos")
        self.bs_pos = _pos(self.bs_pos, self.num_bs, "bs_pos")
        self.irs_pos = np.asarray(self.irs_pos, dtype=float).reshape(3)
        self.validate()

    def validate(self):
        I, J, K, M = self.num_users, self.num_bs, self.num_subchannels, self.num_elements
        if min(I, J, K) < 1 or M < 0:
            raise ValueError("dimensions must be positive")
        if self.max_per_cell < 2:
            raise ValueError("max_per_cell must be at least 2")
        if I < 2 * J:
            raise ValueError(f"need at least two users per BS (I={I}, J={J})")
        if I > self.max_per_cell * J:
            raise ValueError(f"I={I} users cannot fit in {J} cells of size {self.max_per_cell}")
        for name in ("pathloss_ref", "bandwidth", "noise_power", "power_max"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive")
        if self.rate_min < 0 or self.p_static < 0 or self.rician_k < 0:
            raise ValueError("rate_min, p_static and rician_k must be nonnegative")
        if self.sdp_objective not in ("sum_gain", "none"):
            raise ValueError("sdp_objective must be 'sum_gain' or 'none'")
        if self.orders not in ("all", "sorted"):
            raise ValueError("orders must be 'all' or 'sorted'")

    @property
    def shape(self):
        return self.num_users, self.num_bs, self.num_subchannels, self.num_elements

    def replace(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)

    def with_elements(self, M: int) -> "Scenario":
        return self.replace(num_elements=int(M))

    # geometry ------------------------------------------------------------
    @classmethod
    def layout(cls, num_users=6, num_bs=3, num_subchannels=3, num_elements=100,
               user_y=30.0, irs_pos=(200.0, 50.0, 20.0), **kw) -> "Scenario":
        """Line layout: users at (50i, y, 0), BSs at (100j, 0, 20), i, j starting at 1."""
        users = [(50.0 * (i + 1), float(user_y), 0.0) for i in range(num_users)]
        bss = [(100.0 * (j + 1), 0.0, 20.0) for j in range(num_bs)]
        return cls(num_users=num_users, num_bs=num_bs, num_subchannels=num_subchannels,
                   num_elements=num_elements, user_pos=users, bs_pos=bss,
                   irs_pos=irs_pos, **kw)

    def distances(self):
        """(d_bu[i, j], d_iu[i], d_bi[j]) in meters."""
        d_bu = np.linalg.norm(self.user_pos[:, None, :] - self.bs_pos[None, :, :], axis=-1)
        d_iu = np.linalg.norm(self.user_pos - self.irs_pos, axis=-1)
        d_bi = np.linalg.norm(self.bs_pos - self.irs_pos, axis=-1)
        return d_bu, d_iu, d_bi

    # config --------------------------------------------------------------
    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "Scenario":
        """Build from a key-value mapping with dB/dBm radio inputs (see README)."""
        cfg = dict(cfg)
        kw: dict[str, Any] = {}
        conv = {
            "pathloss_ref_db": ("pathloss_ref", lambda v: float(db2lin(v))),
            "noise_power_dbm": ("noise_power", lambda v: float(dbm2watt(v))),
            "power_max_dbm": ("power_max", lambda v: float(dbm2watt(v))),
            "p_static_w": ("p_static", float),
            "bandwidth_hz": ("bandwidth", float),
            "rate_min_bps": ("rate_min", float),
        }
        for key, (name, fn) in conv.items():
            if key in cfg:
                kw[name] = fn(cfg.pop(key))
        names = {f.name for f in dataclasses.fields(cls)}
        geometry = {}
        for key in ("user_y", "irs_pos"):
            if key in cfg:
                geometry[key] = cfg.pop(key)
        unknown = set(cfg) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw.update(cfg)
        if "user_pos" in kw and "bs_pos" in kw:
            if "irs_pos" in geometry:
                kw["irs_pos"] = geometry["irs_pos"]
            if "user_y" in geometry:
                raise ValueError("user_y only applies to the default line layout")
            return cls(**kw)
        dims = {k: kw.pop(k) for k in ("num_users", "num_bs", "num_subchannels", "num_elements")
                if k in kw}
        return cls.layout(**dims, **geometry, **kw)


@dataclass
class ChannelSet:
    """Realized channels: h[i, j, k], f[j, k, m] (BS to IRS), g[i, k, m] (IRS to user)."""

    h: np.ndarray
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        I, J, K = self.h.shape
        M = self.f.shape[-1]
        if self.f.shape != (J, K, M) or self.g.shape != (I, K, M):
            raise ValueError("inconsistent channel shapes")

    @property
    def shape(self):
        I, J, K = self.h.shape
        return I, J, K, self.f.shape[-1]

    def without_irs(self) -> "ChannelSet":
        """Same direct links with the reflection path removed (M = 0)."""
        I, J, K = self.h.shape
        return ChannelSet(self.h.copy(), np.zeros((J, K, 0), complex), np.zeros((I, K, 0), complex))


def path_loss(d, a, ref=1e-3):
    """ref * d^-a; d in meters."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be positive")
    out = ref * d ** (-float(a))
    return float(out) if out.ndim == 0 else out


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(seed))


def trial_streams(seed: int, trial: int):
    """Independent (channel, algorithm) seed sequences for one trial."""
    root = np.random.SeedSequence(int(seed), spawn_key=(int(trial),))
    return root.spawn(2)


def cn(rng, shape):
    """Circularly-symmetric complex Gaussian with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def small_scale(rng, shape, kappa):
    """Rician fading F with all-ones LoS component; kappa=0 is Rayleigh, inf is pure LoS."""
    nlos = cn(rng, shape)
    if np.isinf(kappa):
        return np.ones(shape, complex)
    return np.sqrt(kappa / (1.0 + kappa)) + np.sqrt(1.0 / (1.0 + kappa)) * nlos


def sample_channels(sc: Scenario, rng_seed) -> ChannelSet:
    """Draw one channel realization; h is drawn first so it does not depend on M."""
    rng = make_rng(rng_seed)
    I, J, K, M = sc.shape
    d_bu, d_iu, d_bi = sc.distances()
    pl_bu = path_loss(d_bu, sc.a_bu, sc.pathloss_ref)
    pl_iu = path_loss(d_iu, sc.a_iu, sc.pathloss_ref)
    pl_bi = path_loss(d_bi, sc.a_bi, sc.pathloss_ref)
    h = np.sqrt(pl_bu)[:, :, None] * small_scale(rng, (I, J, K), 0.0)
    f = np.sqrt(pl_bi)[:, None, None] * small_scale(rng, (J, K, M), sc.rician_k)
    g = np.sqrt(pl_iu)[:, None, None] * small_scale(rng, (I, K, M), 0.0)
    return ChannelSet(h, f, g)
