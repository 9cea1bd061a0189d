"""Time stepping for  M u'' + C u' + K u = s(t) g.

Two schemes: explicit central differences with a consistent mass matrix
(one sparse LU factorization, reused every step) and the trapezoidal rule
(Newmark beta = 1/4, gamma = 1/2).  Dirichlet DOFs are removed from the
system, so their entries stay exactly zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import CoupledSystem
from .discretization import CellGrid, field_operator

log = logging.getLogger(__name__)

PRESSURE = "fluid-pressure"
DISPLACEMENT = "structure-displacement"

INSTABILITY_FACTOR = 1e12


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")

    @classmethod
    def from_duration(cls, dt, duration):
        return cls(float(dt), int(round(duration / dt)))

    @property
    def duration(self):
        return self.dt * self.n_steps

    def time(self, n):
        return n * self.dt


@dataclass
class Probe:
    """A point observer acting on the coupled vector [d, Psi].

    Pressure probes report rho_f * Psi_dot; displacement probes report |d|.
    """
    name: str
    kind: str
    location: tuple
    operator: sp.csr_matrix
    scale: float = 1.0
    group: str = ""

    def sample(self, u, v):
        if self.kind == PRESSURE:
            return self.scale * float(self.operator @ v)
        d = self.operator @ u
        return float(np.hypot(*d)) if len(d) == 2 else float(abs(d[0]))


def make_probe(name, kind, location, grid_s: CellGrid, grid_f: CellGrid, rho_f=1.0, group=""):
    """Probe for a fluid pressure or structure displacement at ``location``."""
    loc = np.asarray(location, dtype=float)[None, :]
    n_s, n_f = grid_s.n_dofs, grid_f.n_dofs
    if kind == PRESSURE:
        op = field_operator(grid_f, loc)
        op = sp.hstack([sp.csr_matrix((1, n_s)), op], format="csr")
        return Probe(name, kind, tuple(location), op, rho_f, group)
    if kind == DISPLACEMENT:
        op = field_operator(grid_s, loc)
        op = sp.hstack([op, sp.csr_matrix((2, n_f))], format="csr")
        return Probe(name, kind, tuple(location), op, 1.0, group)
    raise ValueError(f"unknown observer kind {kind!r}")


@dataclass
class ObserverRecords:
    names: list
    kinds: list
    locations: list
    groups: list
    times: np.ndarray
    data: np.ndarray          # (n_samples, n_observers)
    stride: int = 1
    dt: float = 0.0
    meta: dict = field(default_factory=dict)

    def column(self, name):
        return self.data[:, self.names.index(name)]

    def group(self, name):
        idx = [i for i, g in enumerate(self.groups) if g == name]
        return self.data[:, idx]


class _Recorder:
    """Samples probes on the reduced (free-DOF) state vectors."""

    def __init__(self, probes, tg, stride, free, n_full, callback=None, snapshot_stride=0):
        self.probes = probes
        self.stride = max(1, int(stride))
        self.tg = tg
        n = tg.n_steps // self.stride + 1
        self.times = np.zeros(n)
        self.data = np.zeros((n, len(probes)))
        self.ops = (sp.vstack([p.operator for p in probes], format="csc")[:, free].tocsr()
                    if probes else None)
        self.free = free
        self.n_full = n_full
        self.callback = callback
        self.snapshot_stride = snapshot_stride

    def __call__(self, n, u, v):
        if self.callback is not None and self.snapshot_stride and n % self.snapshot_stride == 0:
            self.callback(n, self.tg.time(n), _expand(self.free, self.n_full, u),
                          _expand(self.free, self.n_full, v))
        if n % self.stride:
            return
        k = n // self.stride
        self.times[k] = self.tg.time(n)
        if self.ops is None:
            return
        pu = self.ops @ u
        pv = self.ops @ v
        row = 0
        for i, p in enumerate(self.probes):
            m = p.operator.shape[0]
            if p.kind == PRESSURE:
                self.data[k, i] = p.scale * pv[row]
            else:
                self.data[k, i] = np.hypot(*pu[row:row + m]) if m == 2 else abs(pu[row])
            row += m
        # -0.0 prints as "-0"
        self.data[k] += 0.0

    def records(self, dt):
        p = self.probes
        return ObserverRecords([q.name for q in p], [q.kind for q in p],
                               [q.location for q in p], [q.group for q in p],
                               self.times, self.data, self.stride, dt)


def _reduced(sys: CoupledSystem):
    free = sys.free()
    M = sys.mass()[free][:, free].tocsc()
    K = sys.stiffness()[free][:, free].tocsc()
    C = sys.damping()[free][:, free].tocsc()
    return free, M, C, K


def _factorize(A, what):
    """Sparse LU of a structurally symmetric matrix.

    Minimum degree on A + A^T with diagonal pivoting keeps the fill about
    three times lower than COLAMD for these grids; COLAMD with partial
    pivoting is the fallback when a zero pivot shows up.
    """
    A = A.tocsc()
    try:
        return spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                         options=dict(SymmetricMode=True))
    except RuntimeError:
        pass
    try:
        return spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"singular effective matrix ({what}): {exc}") from None


def _signal_values(excitation, tg):
    if excitation is None:
        return np.zeros(tg.n_steps + 2)
    t = tg.dt * np.arange(tg.n_steps + 2)
    return np.asarray(excitation(t), dtype=float) * np.ones_like(t)


class _Watchdog:
    """Flags blow-up: non-finite state, or |u| beyond INSTABILITY_FACTOR
    times the largest response seen up to the excitation peak."""

    def __init__(self, signal, u0, every=64):
        self.peak_step = int(np.argmax(np.abs(signal))) if np.any(signal) else 0
        self.ref = float(np.max(np.abs(u0))) if len(u0) else 0.0
        self.every = every

    def __call__(self, n, u):
        if n <= self.peak_step:
            self.ref = max(self.ref, float(np.max(np.abs(u))) if len(u) else 0.0)
            return
        if n % self.every:
            return
        norm = float(np.max(np.abs(u))) if len(u) else 0.0
        if not np.isfinite(norm) or (self.ref > 0 and norm > INSTABILITY_FACTOR * self.ref):
            raise SolverError(f"instability detected at step {n} (|u| = {norm:.3e})")


def _expand(free, n, x):
    out = np.zeros(n)
    out[free] = x
    return out


def central_difference_run(sys: CoupledSystem, tg: TimeGrid, excitation=None, observers=(),
                           stride=1, u0=None, v0=None, callback=None, snapshot_stride=0,
                           return_state=False):
    """Explicit central differences with midpoint velocity in the C term.

    Increment form: A (u_{n+1} - u_n) = f_n - K u_n + B (u_n - u_{n-1}) with
    A = M/dt^2 + C/(2 dt) and B = M/dt^2 - C/(2 dt).
    """
    dt = tg.dt
    free, M, C, K = _reduced(sys)
    n = sys.n
    g = sys.load()[free]
    s = _signal_values(excitation, tg)
    u = np.zeros(len(free)) if u0 is None else np.asarray(u0, float)[free].copy()
    v = np.zeros(len(free)) if v0 is None else np.asarray(v0, float)[free].copy()

    A = (M / dt**2 + C / (2 * dt)).tocsc()
    B = (M / dt**2 - C / (2 * dt)).tocsr()
    K = K.tocsr()
    lu = _factorize(A, "central difference")

    f0 = s[0] * g
    rhs0 = f0 - C @ v - K @ u
    if np.any(rhs0):
        a0 = _factorize(M, "mass").solve(rhs0)
    else:
        a0 = np.zeros_like(u)
    prev_inc = dt * v - 0.5 * dt**2 * a0          # u_0 - u_{-1}

    rec = _Recorder(list(observers), tg, stride, free, n, callback, snapshot_stride)
    watch = _Watchdog(s[:tg.n_steps + 1], u)
    for step in range(tg.n_steps + 1):
        inc = lu.solve(s[step] * g - K @ u + B @ prev_inc)
        vel = (inc + prev_inc) / (2 * dt)
        rec(step, u, vel)
        watch(step, u)
        u = u + inc
        prev_inc = inc
    records = rec.records(dt)
    if return_state:
        return records, _expand(free, n, u)
    return records


def trapezoidal_run(sys: CoupledSystem, tg: TimeGrid, excitation=None, observers=(),
                    stride=1, u0=None, v0=None, callback=None, snapshot_stride=0,
                    beta=0.25, gamma=0.5, energy_log=None):
    """Newmark predictor-corrector (trapezoidal rule by default)."""
    dt = tg.dt
    free, M, C, K = _reduced(sys)
    n = sys.n
    g = sys.load()[free]
    s = _signal_values(excitation, tg)
    u = np.zeros(len(free)) if u0 is None else np.asarray(u0, float)[free].copy()
    v = np.zeros(len(free)) if v0 is None else np.asarray(v0, float)[free].copy()
    K = K.tocsr()
    C = C.tocsr()

    rhs0 = s[0] * g - C @ v - K @ u
    a = _factorize(M, "mass").solve(rhs0) if np.any(rhs0) else np.zeros_like(u)
    lu = _factorize((M + gamma * dt * C + beta * dt**2 * K).tocsc(), "trapezoidal")

    rec = _Recorder(list(observers), tg, stride, free, n, callback, snapshot_stride)
    watch = _Watchdog(s[:tg.n_steps + 1], u)
    Mr = M.tocsr()
    for step in range(tg.n_steps + 1):
        rec(step, u, v)
        if energy_log is not None:
            energy_log.append(0.5 * (v @ (Mr @ v) + u @ (K @ u)))
        watch(step, u)
        if step == tg.n_steps:
            break
        u_pred = u + dt * v + (0.5 - beta) * dt**2 * a
        v_pred = v + (1 - gamma) * dt * a
        a = lu.solve(s[step + 1] * g - C @ v_pred - K @ u_pred)
        u = u_pred + beta * dt**2 * a
        v = v_pred + gamma * dt * a
    return rec.records(dt)


def recover_pressure(grid_f: CellGrid, psi_rate, rho_f, points):
    """Pressure rho_f * Psi_dot at physical points."""
    op = field_operator(grid_f, points)
    return rho_f * (op @ np.asarray(psi_rate, dtype=float))


def max_generalized_eigenvalue(M, K, iterations=200, tol=1e-6, seed=0):
    """Power-iteration estimate of the largest eigenvalue of K x = lam M x.

    Diagnostic only; the critical central-difference step is about
    2 / sqrt(lam).
    """
    lu = _factorize(sp.csc_matrix(M), "mass")
    x = np.random.default_rng(seed).standard_normal(M.shape[0])
    lam = 0.0
    for _ in range(iterations):
        y = lu.solve(K @ x)
        new = float(x @ (K @ x)) / float(x @ (M @ x))
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return new
        x = y / norm
        if lam and abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return lam


def critical_time_step(sys: CoupledSystem, **kw):
    """Largest stable central-difference step of the uncoupled blocks."""
    free_s = np.setdiff1d(np.arange(sys.n_s), sys.fixed_s)
    free_f = np.setdiff1d(np.arange(sys.n_f), sys.fixed_f)
    lam_s = max_generalized_eigenvalue(sys.Ms[free_s][:, free_s], sys.Ks[free_s][:, free_s], **kw)
    lam_f = max_generalized_eigenvalue(sys.Mf[free_f][:, free_f], sys.Kf[free_f][:, free_f], **kw)
    return 2.0 / np.sqrt(max(lam_s, lam_f))
