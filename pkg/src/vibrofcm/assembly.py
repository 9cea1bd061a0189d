"""Sparse assembly of mass, stiffness, interface coupling and load terms.

Local cell matrices are built from the quadrature set of the field; uncut
cells share one reference matrix scaled by their alpha.  Global matrices
are merged from a triplet stream and symmetrized, so M == M.T bitwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import eval_shapes, gauss_rule
from .discretization import SIDES, CellGrid, QuadratureSet
from .geometry import GeometryError, SegmentSet

PLANE_STRESS = "plane-stress"
PLANE_STRAIN = "plane-strain"


@dataclass(frozen=True)
class Material:
    """Linear elastic structure and acoustic fluid parameters (SI units)."""
    rho_s: float
    E: float
    nu: float
    rho_f: float
    kappa_f: float
    model: str = PLANE_STRESS

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ValueError("; ".join(errors))

    def problems(self):
        errors = []
        for name in ("rho_s", "E", "rho_f", "kappa_f"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                errors.append(f"{name} must be positive")
        if not -1.0 < self.nu < 0.5:
            errors.append("nu must lie in (-1, 0.5)")
        if self.model not in (PLANE_STRESS, PLANE_STRAIN):
            errors.append(f"unknown model {self.model!r}")
        return errors

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def kappa(self):
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def c_pressure(self):
        return np.sqrt((self.kappa + 4.0 * self.mu / 3.0) / self.rho_s)

    @property
    def c_shear(self):
        return np.sqrt(self.mu / self.rho_s)

    @property
    def c(self):
        """Speed of sound in the fluid."""
        return np.sqrt(self.kappa_f / self.rho_f)

    def elasticity(self):
        """Constitutive matrix in Voigt notation (xx, yy, xy engineering shear)."""
        E, nu = self.E, self.nu
        if self.model == PLANE_STRESS:
            return E / (1 - nu**2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])
        f = E / ((1 + nu) * (1 - 2 * nu))
        return f * np.array([[1 - nu, nu, 0], [nu, 1 - nu, 0], [0, 0, (1 - 2 * nu) / 2]])


# ---------------------------------------------------------------------------
# local kernels
# ---------------------------------------------------------------------------

def _physical_gradients(grid, ref):
    N, dN = eval_shapes(grid.shapes, ref)
    return N, dN / grid.jacobian()


def _strain_matrix(dN):
    """B (n, 3, 2m) from physical gradients (n, m, 2)."""
    n, m, _ = dN.shape
    B = np.zeros((n, 3, 2 * m))
    B[:, 0, 0::2] = dN[:, :, 0]
    B[:, 1, 1::2] = dN[:, :, 1]
    B[:, 2, 0::2] = dN[:, :, 1]
    B[:, 2, 1::2] = dN[:, :, 0]
    return B


def _local_mass(grid, ref, w):
    N, _ = eval_shapes(grid.shapes, ref)
    m = N.T @ (w[:, None] * N)
    m = 0.5 * (m + m.T)
    if grid.n_components == 2:
        m = np.kron(m, np.eye(2))
    return m


def _local_laplace(grid, ref, w):
    _, G = _physical_gradients(grid, ref)
    k = np.einsum("q,qik,qjk->ij", w, G, G)
    return 0.5 * (k + k.T)


def _local_elastic(grid, ref, w, D):
    _, G = _physical_gradients(grid, ref)
    B = _strain_matrix(G)
    k = np.einsum("q,qai,ab,qbj->ij", w, B, D, B, optimize=True)
    return 0.5 * (k + k.T)


def _assemble_cells(quad: QuadratureSet, kernel, check_components=None):
    grid = quad.grid
    if check_components is not None and grid.n_components != check_components:
        raise ValueError("dimension mismatch: grid has "
                         f"{grid.n_components} components, expected {check_components}")
    area = np.prod(grid.jacobian())
    dofs = grid.cell_dofs
    n = grid.n_dofs
    uniform = np.flatnonzero(~np.isnan(quad.cell_alpha))
    ref_local = kernel(quad.std_ref, quad.std_weights * area)
    rows, cols, vals = [], [], []
    if len(uniform):
        d = dofs[uniform]
        rows.append(np.repeat(d, d.shape[1], axis=1).ravel())
        cols.append(np.tile(d, (1, d.shape[1])).ravel())
        vals.append((quad.cell_alpha[uniform, None, None] * ref_local).ravel())
    for k, c in enumerate(quad.special):
        s = slice(quad.offsets[k], quad.offsets[k + 1])
        local = kernel(quad.ref[s], quad.weights[s] * quad.alpha[s])
        d = dofs[c]
        rows.append(np.repeat(d, len(d)))
        cols.append(np.tile(d, len(d)))
        vals.append(local.ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    A = 0.5 * (A + A.T)
    A.sort_indices()
    return A.tocsr()


def assemble_mass(grid: CellGrid, quad: QuadratureSet, density_factor: float = 1.0):
    """M = sum w alpha factor N^T N (structure: factor rho_s; fluid: 1)."""
    if quad.grid != grid:
        raise ValueError("dimension mismatch: quadrature built for another grid")
    return density_factor * _assemble_cells(quad, lambda r, w: _local_mass(grid, r, w))


def assemble_stiffness_structure(grid: CellGrid, quad: QuadratureSet, mat: Material):
    """K_s = sum w alpha B^T C B with the Voigt constitutive matrix of ``mat``."""
    if quad.grid != grid:
        raise ValueError("dimension mismatch: quadrature built for another grid")
    D = mat.elasticity()
    return _assemble_cells(quad, lambda r, w: _local_elastic(grid, r, w, D), 2)


def assemble_stiffness_fluid(grid: CellGrid, quad: QuadratureSet, mat_or_c):
    """K_f = sum w alpha c^2 G^T G."""
    if quad.grid != grid:
        raise ValueError("dimension mismatch: quadrature built for another grid")
    c = mat_or_c.c if isinstance(mat_or_c, Material) else float(mat_or_c)
    return (c * c) * _assemble_cells(quad, lambda r, w: _local_laplace(grid, r, w), 1)


# ---------------------------------------------------------------------------
# interface coupling
# ---------------------------------------------------------------------------

def line_points(a, b, n_gp):
    """Gauss points (n_seg * n_gp, 2) and weights (m) on straight segments."""
    rule = gauss_rule(n_gp)
    t = 0.5 * (rule.points + 1.0)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    length = np.hypot(*(b - a).T)
    w = 0.5 * length[:, None] * rule.weights[None, :]
    return pts.reshape(-1, 2), w.ravel()


def assemble_coupling(grid_s: CellGrid, grid_f: CellGrid, segments: SegmentSet,
                      n_gp_line: int | None = None):
    """Ccoup = int_interface N_s^T n N_f (structure rows, fluid columns)."""
    if grid_s.n_components != 2 or grid_f.n_components != 1:
        raise ValueError("dimension mismatch: expects (structure, fluid) grids")
    shape = (grid_s.n_dofs, grid_f.n_dofs)
    if len(segments) == 0:
        return sp.csr_matrix(shape)
    n_gp = grid_s.degree + 1 if n_gp_line is None else n_gp_line
    pts, w = line_points(segments.a, segments.b, n_gp)
    normal = np.repeat(segments.normal, n_gp, axis=0)
    try:
        cs, rs = grid_s.locate(pts)
        cf, rf = grid_f.locate(pts)
    except GeometryError:
        raise GeometryError("segment outside extended domain") from None
    Ns, _ = eval_shapes(grid_s.shapes, rs)
    Nf, _ = eval_shapes(grid_f.shapes, rf)
    left = (Ns[:, :, None] * normal[:, None, :]).reshape(len(pts), -1)   # (q, 2 ms)
    vals = w[:, None, None] * left[:, :, None] * Nf[:, None, :]
    ds = grid_s.cell_dofs[cs]
    df = grid_f.cell_dofs[cf]
    rows = np.broadcast_to(ds[:, :, None], vals.shape)
    cols = np.broadcast_to(df[:, None, :], vals.shape)
    C = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    C.sum_duplicates()
    return C


# ---------------------------------------------------------------------------
# loads
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryLoad:
    """Constant datum on an outer grid side, optionally limited to an interval.

    Structure grids: ``value`` is the traction vector per unit signal.
    Fluid grids: ``value`` is the normal velocity v.n per unit signal; the
    load integrates c^2 v.n N.
    """
    side: str
    value: tuple
    interval: tuple | None = None


def _side_points(grid, side, n_gp, interval=None):
    """Gauss points on one outer side: (cells, reference coords, weights)."""
    if side not in SIDES:
        raise ValueError(f"unsupported load region: {side!r}")
    nx, ny = grid.n_cells
    rule = gauss_rule(n_gp)
    if side in ("bottom", "top"):
        i = np.arange(nx)
        cells = i if side == "bottom" else (ny - 1) * nx + i
        fixed, axis, h = (-1.0 if side == "bottom" else 1.0), 0, grid.cell_size[0]
    else:
        j = np.arange(ny)
        cells = j * nx if side == "left" else j * nx + nx - 1
        fixed, axis, h = (-1.0 if side == "left" else 1.0), 1, grid.cell_size[1]
    cells = np.repeat(cells, n_gp)
    s = np.tile(rule.points, len(cells) // n_gp)
    w = np.tile(rule.weights, len(cells) // n_gp) * 0.5 * h
    ref = np.empty((len(s), 2))
    ref[:, axis] = s
    ref[:, 1 - axis] = fixed
    if interval is not None:
        lower, _ = grid.cell_bounds(cells)
        coord = lower[:, axis] + 0.5 * (s + 1.0) * h
        keep = (coord >= interval[0]) & (coord <= interval[1])
        cells, ref, w = cells[keep], ref[keep], w[keep]
    return cells, ref, w


def assemble_loads(grid: CellGrid, quad: QuadratureSet | None = None, body_term=None,
                   traction_spec: BoundaryLoad | None = None, c: float = 1.0,
                   n_gp: int | None = None):
    """Spatial load vector g; the time-dependent load is f(t) = s(t) g.

    ``body_term`` is a constant (scalar / 2-vector) or a callable of points,
    integrated with the indicator weights of ``quad``.  ``c`` scales fluid
    boundary fluxes by c^2.
    """
    g = np.zeros(grid.n_dofs)
    nc = grid.n_components
    n_gp = grid.degree + 1 if n_gp is None else n_gp
    if body_term is not None:
        if quad is None:
            raise ValueError("body loads need a quadrature set")
        for cidx in range(grid.n_total_cells):
            q = quad.cell(cidx)
            b = body_term(q.points) if callable(body_term) else \
                np.broadcast_to(np.asarray(body_term, float), (len(q.points), nc))
            b = np.asarray(b, float).reshape(len(q.points), nc)
            N, _ = eval_shapes(grid.shapes, q.ref)
            loc = ((q.weights * q.alpha)[:, None, None] * N[:, :, None] * b[:, None, :]).sum(axis=0)
            np.add.at(g, grid.cell_dofs[cidx], loc.ravel())
    if traction_spec is not None:
        value = np.atleast_1d(np.asarray(traction_spec.value, dtype=float))
        if value.shape != (nc,):
            raise ValueError(f"load datum needs {nc} component(s)")
        cells, ref, w = _side_points(grid, traction_spec.side, n_gp, traction_spec.interval)
        N, _ = eval_shapes(grid.shapes, ref)
        scale = c * c if nc == 1 else 1.0
        loc = scale * w[:, None, None] * N[:, :, None] * value[None, None, :]
        np.add.at(g, grid.cell_dofs[cells].ravel(), loc.reshape(len(cells), -1).ravel())
    return g


# ---------------------------------------------------------------------------
# coupled system
# ---------------------------------------------------------------------------

@dataclass
class CoupledSystem:
    """Blocks of  M u'' + C u' + K u = s(t) g  with u = [d, Psi].

    The coupling block is stored once as ``Ccoup``; C_s = rho_f Ccoup and
    C_f = -c^2 Ccoup^T are applied with scalars.
    """
    Ms: sp.csr_matrix
    Mf: sp.csr_matrix
    Ks: sp.csr_matrix
    Kf: sp.csr_matrix
    Ccoup: sp.csr_matrix
    rho_f: float
    c: float
    g_s: np.ndarray = None
    g_f: np.ndarray = None
    fixed_s: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    fixed_f: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        if self.g_s is None:
            self.g_s = np.zeros(self.n_s)
        if self.g_f is None:
            self.g_f = np.zeros(self.n_f)
        if self.Ccoup.shape != (self.n_s, self.n_f):
            raise ValueError("dimension mismatch in coupling block")

    @property
    def n_s(self):
        return self.Ms.shape[0]

    @property
    def n_f(self):
        return self.Mf.shape[0]

    @property
    def n(self):
        return self.n_s + self.n_f

    def mass(self):
        return sp.block_diag([self.Ms, self.Mf], format="csr")

    def stiffness(self):
        return sp.block_diag([self.Ks, self.Kf], format="csr")

    def damping(self):
        return sp.bmat([[None, self.rho_f * self.Ccoup],
                        [-(self.c**2) * self.Ccoup.T, None]], format="csr")

    def apply_coupling(self, v):
        """C @ v without forming C."""
        vs, vf = v[:self.n_s], v[self.n_s:]
        return np.concatenate([self.rho_f * (self.Ccoup @ vf),
                               -(self.c**2) * (self.Ccoup.T @ vs)])

    def load(self):
        return np.concatenate([self.g_s, self.g_f])

    def fixed(self):
        return np.concatenate([self.fixed_s, self.n_s + self.fixed_f]).astype(int)

    def free(self):
        mask = np.ones(self.n, dtype=bool)
        mask[self.fixed()] = False
        return np.flatnonzero(mask)

    def energy(self, u, v):
        """(structure, fluid) energies 1/2 v^T M v + 1/2 u^T K u per block."""
        s, f = slice(0, self.n_s), slice(self.n_s, self.n)
        es = 0.5 * (v[s] @ (self.Ms @ v[s]) + u[s] @ (self.Ks @ u[s]))
        ef = 0.5 * (v[f] @ (self.Mf @ v[f]) + u[f] @ (self.Kf @ u[f]))
        return es, ef


def write_triplets(path, A):
    """Plain-text coordinate dump: 'rows cols nnz' then 0-based 'i j value'."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for k in order:
            fh.write(f"{A.row[k]} {A.col[k]} {A.data[k]:.17g}\n")


def read_triplets(path):
    with open(path) as fh:
        rows, cols, _ = (int(v) for v in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((rows, cols))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(rows, cols))
