"""Small log-barrier interior-point solvers.

Two problem classes:

* ``ConvexProgram``: maximize sum_q c_q log(1 + x_q) + e^T x subject to affine,
  convex-quadratic and log-rate constraints. Dense Newton on the barrier.
* ``SdpProgram``: real symmetric X >= 0 with unit diagonal and inequalities
  tr(B_l X) >= c_l, optionally maximizing tr(F X). Every B_l and F is kept as a
  weighted sum of rank-one "atoms" a a^T, so the Newton system only needs the
  atom Gram matrix A^T X A and never forms the n^2 x n^2 Hessian.

Hermitian problems of order n are embedded as real problems of order 2n via
C -> [[Re C, -Im C], [Im C, Re C]]. A complex rank-one atom w w^H maps to the two
real atoms u = [Re w; Im w], v = [-Im w; Re w] with weight 1/2 each, which keeps
tr(W V) = tr(W_real X) (no factor of two) when X is the embedding of V.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

NEWTON_TOL = 1e-8
MU = 10.0
MAX_NEWTON = 600
LOOSE_TOL = 1e-1
PHASE1_BOX = 1e3        # phase-one search box, relative to the start point


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


# ----------------------------------------------------------------------------
# convex programs


@dataclass
class ConvexProgram:
    n: int
    lower: np.ndarray        # lower bounds, -inf for free
    obj_log: np.ndarray      # c >= 0
    obj_lin: np.ndarray      # e
    A: np.ndarray            # A x <= b
    b: np.ndarray
    qa: np.ndarray           # qa x + sum_r qw (qU x + qu0)^2 <= qrhs
    qrhs: np.ndarray
    qw: np.ndarray
    qU: np.ndarray
    qu0: np.ndarray
    lW: np.ndarray           # sum_q lW log(1 + x_q) + lA x >= lrhs
    lrhs: np.ndarray
    lA: np.ndarray

    @property
    def num_constraints(self):
        return int(np.isfinite(self.lower).sum()) + len(self.b) + len(self.qrhs) + len(self.lrhs)

    def uses_log(self):
        return (self.obj_log > 0) | (self.lW > 0).any(axis=0)

    def value(self, x):
        return float(self.obj_log @ np.log1p(x) + self.obj_lin @ x)

    def residuals(self, x):
        """Constraint values g(x) (feasible iff all <= 0)."""
        return _ConvexOracle(self).g(x)


class ProgramBuilder:
    """Incremental construction of a ConvexProgram with convexity checks."""

    def __init__(self, n: int, lower=None):
        self.n = n
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float).copy()
        self.obj_log = np.zeros(n)
        self.obj_lin = np.zeros(n)
        self._lin = []
        self._quad = []
        self._log = []

    def _vec(self, coefs):
        v = np.zeros(self.n)
        if isinstance(coefs, dict):
            for q, c in coefs.items():
                v[q] += c
        else:
            v += np.asarray(coefs, float)
        return v

    def maximize_log(self, q, w=1.0):
        if w < 0:
            raise ValueError("log objective weight must be nonnegative (concavity)")
        self.obj_log[q] += w

    def maximize_linear(self, coefs):
        self.obj_lin += self._vec(coefs)

    def add_le(self, coefs, rhs):
        """coefs . x <= rhs"""
        self._lin.append((self._vec(coefs), float(rhs)))

    def add_ge(self, coefs, rhs):
        self.add_le(-self._vec(coefs), -float(rhs))

    def add_quadratic(self, coefs, squares, rhs):
        """coefs . x + sum_r w_r (u_r . x + u0_r)^2 <= rhs, every w_r >= 0."""
        sq = []
        for w, u, u0 in squares:
            if not w >= 0:
                raise ValueError("negative quadratic weight: constraint would be non-convex")
            sq.append((float(w), self._vec(u), float(u0)))
        if not sq:
            self.add_le(coefs, rhs)
            return
        self._quad.append((self._vec(coefs), sq, float(rhs)))

    def add_log_rate(self, coefs, rhs, linear=None):
        """sum_q w_q log(1 + x_q) + linear . x >= rhs, w_q >= 0."""
        v = self._vec(coefs)
        if np.any(v < 0):
            raise ValueError("negative log weight: constraint would be non-convex")
        lin = np.zeros(self.n) if linear is None else self._vec(linear)
        self._log.append((v, float(rhs), lin))

    def build(self) -> ConvexProgram:
        n = self.n
        A = np.array([c for c, _ in self._lin]).reshape(-1, n)
        b = np.array([r for _, r in self._lin], float)
        R = max([len(s) for _, s, _ in self._quad], default=1)
        L = len(self._quad)
        qa = np.zeros((L, n)); qrhs = np.zeros(L)
        qw = np.zeros((L, R)); qU = np.zeros((L, R, n)); qu0 = np.zeros((L, R))
        for l, (c, sq, rhs) in enumerate(self._quad):
            qa[l] = c; qrhs[l] = rhs
            for r, (w, u, u0) in enumerate(sq):
                qw[l, r] = w; qU[l, r] = u; qu0[l, r] = u0
        lW = np.array([c for c, _, _ in self._log]).reshape(-1, n)
        lrhs = np.array([r for _, r, _ in self._log], float)
        lA = np.array([a for _, _, a in self._log]).reshape(-1, n)
        return ConvexProgram(n, self.lower.copy(), self.obj_log.copy(), self.obj_lin.copy(),
                             A, b, qa, qrhs, qw, qU, qu0, lW, lrhs, lA)


class _ConvexOracle:
    """Constraint values, Jacobian and curvature for a ConvexProgram."""

    def __init__(self, p: ConvexProgram):
        self.p = p
        self.bidx = np.flatnonzero(np.isfinite(p.lower))
        self.logmask = p.uses_log()
        # the log domain 1 + x > 0 acts as an implicit lower bound
        self.lower = np.where(self.logmask, np.maximum(p.lower, -1.0), p.lower)
        self.bidx = np.flatnonzero(np.isfinite(self.lower))
        self.m = len(self.bidx) + len(p.b) + len(p.qrhs) + len(p.lrhs)
        n = p.n
        J = [-np.eye(n)[self.bidx], p.A]
        self.static_J = np.vstack(J) if len(J) else np.zeros((0, n))
        L, R = p.qw.shape
        # flattened square terms: row (l, r) of U is qU[l, r]
        self.U = p.qU.reshape(L * R, n)
        self.u0 = p.qu0.reshape(L * R)
        self.w = p.qw.reshape(L * R)
        self.R = R

    def in_domain(self, x):
        return bool(np.all(1.0 + x[self.logmask] > 0))

    def g(self, x):
        p = self.p
        gb = self.lower[self.bidx] - x[self.bidx]
        ga = p.A @ x - p.b
        aff = self.U @ x + self.u0
        gq = p.qa @ x + (self.w * aff ** 2).reshape(-1, self.R).sum(axis=1) - p.qrhs
        gl = p.lrhs - p.lW @ self._log1p(x) - p.lA @ x
        return np.concatenate([gb, ga, gq, gl])

    def _log1p(self, x):
        return np.log1p(np.where(self.logmask, x, 0.0))

    def _inv1(self, x):
        return np.where(self.logmask, 1.0 / (1.0 + np.where(self.logmask, x, 0.0)), 0.0)

    def full(self, x):
        """g, J and a callable weights -> sum_l weights_l * Hess g_l."""
        p = self.p
        aff = self.U @ x + self.u0
        wa = self.w * aff
        gb = self.lower[self.bidx] - x[self.bidx]
        ga = p.A @ x - p.b
        gq = p.qa @ x + (wa * aff).reshape(-1, self.R).sum(axis=1) - p.qrhs
        inv1 = self._inv1(x)
        gl = p.lrhs - p.lW @ self._log1p(x) - p.lA @ x
        Jq = p.qa + 2.0 * (wa.reshape(-1, self.R, 1) * self.U.reshape(-1, self.R, p.n)).sum(axis=1)
        Jl = -p.lW * inv1[None, :] - p.lA
        g = np.concatenate([gb, ga, gq, gl])
        J = np.vstack([self.static_J, Jq, Jl])
        nb = len(gb) + len(ga)
        nq = len(gq)

        def hess(wts):
            wq = wts[nb:nb + nq]
            wl = wts[nb + nq:]
            if nq:
                s = 2.0 * self.w * np.repeat(wq, self.R)
                H = self.U.T @ (self.U * s[:, None])
            else:
                H = 0.0
            d = (wl @ p.lW) * inv1 ** 2 if len(wl) else np.zeros(p.n)
            return H + np.diag(d)

        return g, J, hess

    def obj(self, x):
        p = self.p
        inv1 = self._inv1(x)
        f = p.obj_log @ self._log1p(x) + p.obj_lin @ x
        grad = p.obj_log * inv1 + p.obj_lin
        hess = -np.diag(p.obj_log * inv1 ** 2)
        return f, grad, hess


class _PhaseOne:
    """min s over (x, s): g_l(x) <= s, s >= -1, |x - x0| <= box.

    The box keeps the centering problem bounded when the satisfied constraints
    leave a feasible ray along which their barrier keeps decreasing.
    """

    def __init__(self, base: _ConvexOracle, x0):
        self.base = base
        self.n = base.p.n
        self.x0 = np.asarray(x0, float)
        self.box = PHASE1_BOX * (1.0 + np.abs(self.x0))

    def in_domain(self, y):
        return self.base.in_domain(y[:-1])

    def _box(self, x):
        d = x - self.x0
        return np.concatenate([d - self.box, -d - self.box])

    def g(self, y):
        return np.concatenate([self.base.g(y[:-1]) - y[-1], [-1.0 - y[-1]], self._box(y[:-1])])

    def full(self, y):
        g, J, hess = self.base.full(y[:-1])
        m = len(g)
        n = self.n
        g = np.concatenate([g - y[-1], [-1.0 - y[-1]], self._box(y[:-1])])
        J2 = np.zeros((m + 1 + 2 * n, n + 1))
        J2[:m, :-1] = J
        J2[:m, -1] = -1.0
        J2[m, -1] = -1.0
        J2[m + 1:m + 1 + n, :-1] = np.eye(n)
        J2[m + 1 + n:, :-1] = -np.eye(n)

        def hess2(w):
            H = np.zeros((self.n + 1, self.n + 1))
            H[:-1, :-1] = hess(w[:m])
            return H

        return g, J2, hess2

    def obj(self, y):
        grad = np.zeros(self.n + 1)
        grad[-1] = -1.0
        return -y[-1], grad, np.zeros((self.n + 1, self.n + 1))


def _solve_sym(H, rhs):
    try:
        c = sla.cho_factor(H, check_finite=False)
        return sla.cho_solve(c, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        reg = 1e-12 * max(1.0, np.abs(np.diag(H)).max())
        return np.linalg.lstsq(H + reg * np.eye(len(H)), rhs, rcond=None)[0]


def _barrier_value(orc, y, t):
    if not orc.in_domain(y):
        return np.inf
    g = orc.g(y)
    if np.any(g >= 0) or not np.all(np.isfinite(g)):
        return np.inf
    return -t * orc.obj(y)[0] - np.sum(np.log(-g))


def _center(orc, y, t, budget, ntol=NEWTON_TOL, early=None):
    """Newton centering; returns (y, newton steps used, converged flag).

    ``early(y)`` true ends the centering at once (phase one stops as soon as it finds a
    strictly feasible point; its barrier can be unbounded along feasible rays)."""
    used = 0
    while used < budget:
        if early is not None and early(y):
            return y, used, True
        f, gf, Hf = orc.obj(y)
        g, J, hess = orc.full(y)
        d = 1.0 / (-g)
        grad = -t * gf + J.T @ d
        H = -t * Hf + (J.T * d ** 2) @ J + hess(d)
        dy = _solve_sym(H, -grad)
        lam2 = float(-grad @ dy)
        used += 1
        if not np.isfinite(lam2) or lam2 / 2.0 <= ntol:
            return y, used, True
        phi0 = -t * f + np.sum(np.log(d))
        # convexity: g(y + a dy) >= g + a J dy, so this cap is necessary for feasibility
        jd = J @ dy
        pos = jd > 0
        step = min(1.0, 0.99 * float(np.min(-g[pos] / jd[pos]))) if np.any(pos) else 1.0
        slope = float(grad @ dy)
        while step > 1e-14:
            phi = _barrier_value(orc, y + step * dy, t)
            if phi <= phi0 + 0.01 * step * slope:
                break
            step *= 0.5
        else:
            return y, used, False
        y = y + step * dy
    return y, used, False


def _barrier(orc, y, m, tol, t0=1.0, stop=None, early=None):
    """Path following; intermediate centerings are loose, the final one is tight."""
    t = t0
    total = 0
    while True:
        last = m / t < tol
        y, used, ok = _center(orc, y, t, MAX_NEWTON - total, NEWTON_TOL if last else LOOSE_TOL, early)
        total += used
        if stop is not None:
            verdict = stop(y, t)
            if verdict is not None:
                return y, t, total, verdict
        if m / t < tol:
            return y, t, total, Status.OPTIMAL
        if total >= MAX_NEWTON:
            return y, t, total, Status.ITERATION_LIMIT
        t *= MU


@dataclass
class ConvexResult:
    x: np.ndarray
    value: float
    status: Status
    gap: float
    newton: int


def _default_start(p: ConvexProgram):
    x = np.where(np.isfinite(p.lower), p.lower + 1.0, 0.0)
    return x


def solve_convex(p: ConvexProgram, tol=1e-6, x0=None, t0=1.0) -> ConvexResult:
    """Maximize the program's concave objective; phase-1 runs if x0 is not strictly feasible."""
    orc = _ConvexOracle(p)
    x = _default_start(p) if x0 is None else np.asarray(x0, float).copy()
    if not orc.in_domain(x):
        x = np.where(orc.logmask & (x <= -1), 0.0, x)
    newton = 0
    m = orc.m
    g0 = orc.g(x)
    if m and not np.all(g0 < 0):
        ph = _PhaseOne(orc, x)
        y = np.append(x, max(g0.max(), 0.0) + 1.0)

        def stop(y, t):
            if y[-1] < 0:
                return Status.OPTIMAL
            if y[-1] - (m + 1 + 2 * p.n) / t > tol:
                return Status.INFEASIBLE
            return None

        y, t, used, st = _barrier(ph, y, m + 1 + 2 * p.n, tol, stop=stop, early=lambda y: y[-1] < -tol)
        newton += used
        x = y[:-1]
        if st is Status.INFEASIBLE or (st is Status.OPTIMAL and y[-1] > tol):
            return ConvexResult(x, p.value(x), Status.INFEASIBLE, np.inf, newton)
        if st is Status.ITERATION_LIMIT:
            return ConvexResult(x, p.value(x), Status.ITERATION_LIMIT, np.inf, newton)
        if y[-1] >= 0:
            # feasible set without interior: return the boundary point
            return ConvexResult(x, p.value(x), Status.OPTIMAL, (m + 1) / t, newton)
    if m == 0:
        raise ValueError("program has no constraints; objective may be unbounded")
    x, t, used, st = _barrier(orc, x, m, tol, t0)
    newton += used
    return ConvexResult(x, p.value(x), st, m / t, newton)


# ----------------------------------------------------------------------------
# semidefinite programs


@dataclass
class SdpProgram:
    """Real symmetric program of order N with unit diagonal.

    B_l = sum_x C[l, x] a_x a_x^T,  F = sum_x f[x] a_x a_x^T,  a_x = atoms[:, x].
    Constraints: tr(B_l X) >= c_l, diag(X) = 1, X >= 0; maximize tr(F X).
    """

    atoms: np.ndarray
    C: np.ndarray
    c: np.ndarray
    f: np.ndarray

    @property
    def order(self):
        return self.atoms.shape[0]

    def B(self, l):
        return (self.atoms * self.C[l]) @ self.atoms.T

    def F(self):
        return (self.atoms * self.f) @ self.atoms.T

    def lhs(self, X):
        gz = np.einsum("nx,nm,mx->x", self.atoms, X, self.atoms)
        return self.C @ gz

    def residuals(self, X):
        """c_l - tr(B_l X) (feasible iff all <= 0)."""
        return self.c - self.lhs(X)

    @classmethod
    def from_dense(cls, B_list, c, F=None, order=None):
        """Factor dense symmetric matrices into signed rank-one atoms."""
        mats = list(B_list) + ([F] if F is not None else [])
        N = order if order is not None else mats[0].shape[0]
        atoms, C, fvec = [], [], []
        L = len(B_list)
        coef_rows = []
        for idx, Mx in enumerate(mats):
            Mx = 0.5 * (np.asarray(Mx, float) + np.asarray(Mx, float).T)
            w, U = np.linalg.eigh(Mx)
            keep = np.abs(w) > 1e-14 * max(1.0, np.abs(w).max())
            for wi, ui in zip(w[keep], U[:, keep].T):
                atoms.append(ui)
                coef_rows.append((idx, wi))
        A = np.array(atoms).T.reshape(N, -1)
        C = np.zeros((L, A.shape[1]))
        f = np.zeros(A.shape[1])
        for x, (idx, wi) in enumerate(coef_rows):
            if idx < L:
                C[idx, x] = wi
            else:
                f[x] = wi
        return cls(A, C, np.asarray(c, float).reshape(L), f)

    @classmethod
    def from_complex_atoms(cls, W, C, c, f=None):
        """Realify a Hermitian program whose matrices are sums of w w^H (w = W[:, x])."""
        W = np.asarray(W, complex)
        u = np.vstack([W.real, W.imag])
        v = np.vstack([-W.imag, W.real])
        atoms = np.hstack([u, v])
        C = np.asarray(C, float)
        C2 = 0.5 * np.hstack([C, C])
        f = np.zeros(W.shape[1]) if f is None else np.asarray(f, float)
        return cls(atoms, C2, np.asarray(c, float), 0.5 * np.concatenate([f, f]))


def realify(C):
    C = np.asarray(C, complex)
    return np.block([[C.real, -C.imag], [C.imag, C.real]])


def complexify(X):
    n = X.shape[0] // 2
    re = 0.5 * (X[:n, :n] + X[n:, n:])
    im = 0.5 * (X[n:, :n] - X[:n, n:])
    return re + 1j * im


@dataclass
class SdpResult:
    X: np.ndarray
    status: Status
    margin: float   # phase-one max-min slack (normalized units); > 0 means strict interior
    newton: int

    @property
    def V(self):
        return complexify(self.X)


class _SdpState:
    def __init__(self, prog: SdpProgram, F_on: bool):
        self.A = prog.atoms
        self.C = prog.C
        self.c = prog.c
        self.f = prog.f if F_on else np.zeros(prog.atoms.shape[1])
        self.N = prog.order
        self.L = len(prog.c)


def _chol_logdet(X):
    try:
        Lc = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(Lc)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return None
    return 2.0 * np.sum(np.log(d))


def _sdp_center(st: _SdpState, X, s, t, phase1, budget):
    A, C, c = st.A, st.C, st.c
    N, L = st.N, st.L
    dvec = -np.ones(L) if phase1 else np.zeros(L)
    used = 0
    while used < budget:
        Y = X @ A
        Z = A.T @ Y
        gz = np.diag(Z).copy()
        r = C @ gz - c + dvec * s
        if np.any(r <= 0):
            return X, s, used, False
        inv_r = 1.0 / r
        om = t * st.f + C.T @ inv_r
        Z2 = Z * Z
        Y2 = Y * Y
        QBB = C @ Z2 @ C.T
        QBA = C @ Y2.T
        QAA = X * X
        rhs_B = C @ (gz + Z2 @ om)
        rhs_A = np.diag(X) + Y2 @ om
        q = 1 if phase1 else 0
        K = np.zeros((L + N + q, L + N + q))
        K[:L, :L] = QBB + np.diag(r * r)
        K[:L, L:L + N] = QBA
        K[L:L + N, :L] = QBA.T
        K[L:L + N, L:L + N] = QAA
        rhs = np.concatenate([rhs_B, rhs_A])
        if phase1:
            g_s = -t - dvec @ inv_r
            K[:L, -1] = -dvec
            K[-1, :L] = dvec
            rhs = np.append(rhs, -g_s)
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        u = sol[:L]
        w = sol[L:L + N]
        ds = sol[-1] if phase1 else 0.0
        D1 = om - C.T @ u
        Delta = X + (Y * D1) @ Y.T - (X * w) @ X
        Delta = 0.5 * (Delta + Delta.T)
        adA = np.einsum("nx,nm,mx->x", A, Delta, A)
        dr = C @ adA + dvec * ds
        dobj = st.f @ adA + (ds if phase1 else 0.0)
        tr_xinv_delta = N + D1 @ gz - w @ np.diag(X)
        gX_delta = -t * (st.f @ adA) - tr_xinv_delta - inv_r @ (C @ adA)
        g_s_val = (-t - dvec @ inv_r) if phase1 else 0.0
        lam2 = -(gX_delta + g_s_val * ds)
        used += 1
        if not np.isfinite(lam2) or lam2 / 2.0 <= NEWTON_TOL:
            return X, s, used, True
        ld0 = _chol_logdet(X)
        obj0 = st.f @ gz + (s if phase1 else 0.0)
        phi0 = -t * obj0 - ld0 - np.sum(np.log(r))
        neg = dr < 0
        step = min(1.0, 0.99 * np.min(-r[neg] / dr[neg])) if np.any(neg) else 1.0
        while step > 1e-14:
            Xn = X + step * Delta
            ld = _chol_logdet(Xn)
            if ld is not None:
                rn = r + step * dr
                if np.all(rn > 0):
                    phi = -t * (obj0 + step * dobj) - ld - np.sum(np.log(rn))
                    if phi <= phi0 - 0.01 * step * lam2:
                        break
            step *= 0.5
        else:
            return X, s, used, False
        X = X + step * Delta
        X = 0.5 * (X + X.T)
        s = s + step * ds
    return X, s, used, False


def _normalize_sdp(p: SdpProgram) -> SdpProgram:
    an = np.sum(p.atoms ** 2, axis=0)
    scale = np.maximum(np.abs(p.C) @ an, np.abs(p.c))
    scale = np.where(scale > 0, scale, 1.0)
    C = p.C / scale[:, None]
    c = p.c / scale
    fs = np.abs(p.f) @ an
    f = p.f * (p.order / fs) if fs > 0 else p.f
    return SdpProgram(p.atoms, C, c, f)


def _unit_diag(X):
    d = np.sqrt(np.clip(np.diag(X), 1e-300, None))
    X = X / d[:, None] / d[None, :]
    return 0.5 * (X + X.T)


def solve_sdp(p: SdpProgram, tol=1e-6) -> SdpResult:
    """Phase one maximizes the smallest constraint slack; phase two maximizes tr(F X)
    (or finds the analytic center when F = 0)."""
    p = _normalize_sdp(p)
    N, L = p.order, len(p.c)
    X = np.eye(N)
    newton = 0
    margin = np.inf
    if L:
        st1 = _SdpState(p, False)
        gz = np.sum(p.atoms ** 2, axis=0)
        s = float(np.min(p.C @ gz - p.c)) - 1.0
        t = 1.0
        m = N + L
        while True:
            X, s, used, ok = _sdp_center(st1, X, s, t, True, MAX_NEWTON - newton)
            newton += used
            if s > 0:
                margin = s
                break
            if s + m / t < -tol:
                return SdpResult(_unit_diag(X), Status.INFEASIBLE, s, newton)
            if m / t < tol:
                margin = s
                return SdpResult(_unit_diag(X), Status.OPTIMAL, s, newton)
            if newton >= MAX_NEWTON:
                return SdpResult(_unit_diag(X), Status.ITERATION_LIMIT, s, newton)
            t *= MU
    st2 = _SdpState(p, True)
    m = N + L
    if not np.any(st2.f):
        X, _, used, ok = _sdp_center(st2, X, 0.0, 0.0, False, MAX_NEWTON)
        newton += used
        return SdpResult(_unit_diag(X), Status.OPTIMAL if ok else Status.ITERATION_LIMIT, margin, newton)
    t = 1.0
    status = Status.OPTIMAL
    while True:
        X, _, used, ok = _sdp_center(st2, X, 0.0, t, False, MAX_NEWTON - newton)
        newton += used
        if m / t < tol * N:
            break
        if newton >= MAX_NEWTON:
            status = Status.ITERATION_LIMIT
            break
        t *= MU
    return SdpResult(_unit_diag(X), status, margin, newton)
