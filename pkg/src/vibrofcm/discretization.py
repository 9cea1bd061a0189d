"""Cartesian extended-domain grids, DOF numbering and cut-cell quadrature."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import ShapeSet2D, TRUNK, eval_shapes, interior_mode_count, tensor_rule
from .geometry import (ZERO_NUDGE, GeometryError, build_quadtrees, classify_cells,
                       evaluate)

STRUCTURE = "structure"
FLUID = "fluid"
ALPHA_MIN = 1e-8

SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class CellGrid:
    origin: tuple
    cell_size: tuple
    n_cells: tuple
    degree: int
    space: str = TRUNK
    n_components: int = 1

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "cell_size", tuple(float(v) for v in self.cell_size))
        object.__setattr__(self, "n_cells", tuple(int(v) for v in self.n_cells))
        if min(self.n_cells) < 1:
            raise ValueError("grid needs at least one cell per direction")
        if min(self.cell_size) <= 0:
            raise ValueError("cell size must be positive")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.n_components not in (1, 2):
            raise ValueError("n_components must be 1 or 2")

    @property
    def nx(self):
        return self.n_cells[0]

    @property
    def ny(self):
        return self.n_cells[1]

    @property
    def n_total_cells(self):
        return self.nx * self.ny

    @property
    def cell_area(self):
        return self.cell_size[0] * self.cell_size[1]

    @property
    def extent(self):
        """((x0, y0), (x1, y1)) of the extended domain."""
        x0, y0 = self.origin
        return ((x0, y0), (x0 + self.nx * self.cell_size[0], y0 + self.ny * self.cell_size[1]))

    @cached_property
    def shapes(self):
        return ShapeSet2D(self.degree, self.space)

    @property
    def n_local(self):
        return len(self.shapes) * self.n_components

    def cell_bounds(self, cells=None):
        """Lower and upper corners (n, 2) of the given (default: all) cells."""
        cells = np.arange(self.n_total_cells) if cells is None else np.asarray(cells)
        i, j = cells % self.nx, cells // self.nx
        # both corners from the vertex lattice, so neighbouring cells share
        # bit-identical edge coordinates
        hx, hy = self.cell_size
        x0, y0 = self.origin
        lower = np.column_stack([x0 + i * hx, y0 + j * hy])
        upper = np.column_stack([x0 + (i + 1) * hx, y0 + (j + 1) * hy])
        return lower, upper

    @property
    def n_dofs(self):
        return self.numbering[0]

    @cached_property
    def numbering(self):
        return _number_dofs(self)

    @property
    def cell_dofs(self):
        return self.numbering[1]

    def locate(self, points, tol=1e-9):
        """Cell index and reference coordinates of physical points.

        Points up to ``tol`` cell sizes outside the extended domain are
        clamped onto it; anything further out is an error.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = np.array(self.cell_size)
        s = (pts - np.array(self.origin)) / h
        n = np.array(self.n_cells)
        if ((s < -tol) | (s > n + tol)).any():
            raise GeometryError("point outside extended domain")
        s = np.clip(s, 0.0, n)
        idx = np.minimum(np.floor(s).astype(int), n - 1)
        ref = 2.0 * (s - idx) - 1.0
        return idx[:, 1] * self.nx + idx[:, 0], ref

    def vertex_points(self):
        """Grid vertices (row-major, x fastest) as an ((nx+1)(ny+1), 2) array."""
        x = self.origin[0] + self.cell_size[0] * np.arange(self.nx + 1)
        y = self.origin[1] + self.cell_size[1] * np.arange(self.ny + 1)
        X, Y = np.meshgrid(x, y, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    def jacobian(self):
        """Diagonal of d(x)/d(xi) for the affine cell map."""
        return 0.5 * np.array(self.cell_size)


def dof_count(grid: CellGrid) -> int:
    """Closed-form DOF count: shared vertices, edges and interiors."""
    nx, ny, p = grid.nx, grid.ny, grid.degree
    scalar = ((nx + 1) * (ny + 1) + (p - 1) * (nx * (ny + 1) + ny * (nx + 1))
              + nx * ny * interior_mode_count(p, grid.space))
    return grid.n_components * scalar


def _number_dofs(grid):
    nx, ny, p = grid.nx, grid.ny, grid.degree
    ne = p - 1
    n_vert = (nx + 1) * (ny + 1)
    n_hor = nx * (ny + 1)
    n_ver = (nx + 1) * ny
    n_int = interior_mode_count(p, grid.space)
    hor0 = n_vert
    ver0 = hor0 + n_hor * ne
    int0 = ver0 + n_ver * ne
    total_scalar = int0 + nx * ny * n_int

    cells = np.arange(nx * ny)
    i, j = cells % nx, cells // nx
    cols = []
    for mode in grid.shapes.modes:
        if mode.kind == "vertex":
            di, dj = ((0, 0), (1, 0), (1, 1), (0, 1))[mode.entity]
            cols.append((j + dj) * (nx + 1) + i + di)
        elif mode.kind == "edge":
            if mode.entity in (0, 2):          # bottom / top: horizontal edges
                e = (j + (mode.entity == 2)) * nx + i
                cols.append(hor0 + e * ne + mode.slot)
            else:                              # right / left: vertical edges
                e = j * (nx + 1) + i + (mode.entity == 1)
                cols.append(ver0 + e * ne + mode.slot)
        else:
            cols.append(int0 + cells * n_int + mode.slot)
    scalar = np.stack(cols, axis=1)
    nc = grid.n_components
    dofs = (scalar[:, :, None] * nc + np.arange(nc)).reshape(len(cells), -1)
    return total_scalar * nc, dofs


def number_dofs(grid: CellGrid):
    """(total DOFs, cell_to_global (ncells, n_local)).

    Local order is mode-major with components interleaved; global order is
    vertices (row-major), horizontal edges, vertical edges, interiors.
    """
    return grid.numbering


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellQuadrature:
    points: np.ndarray    # (n, 2) physical coordinates
    ref: np.ndarray       # (n, 2) reference coordinates in the owning cell
    weights: np.ndarray   # (n,) physical weights (m^2), alpha not applied
    alpha: np.ndarray     # (n,)


@dataclass(frozen=True)
class QuadratureSet:
    """Indicator-weighted domain quadrature for one field.

    Cells with ``cell_alpha`` not NaN use the standard tensor rule with a
    single alpha; the remaining cells (``special``) store their points
    explicitly in CSR-like arrays.
    """
    grid: CellGrid
    side: str
    alpha_min: float
    std_ref: np.ndarray
    std_weights: np.ndarray     # reference weights, sum 4
    cell_alpha: np.ndarray      # (ncells,), NaN for special cells
    special: np.ndarray         # special cell ids, ascending
    offsets: np.ndarray         # (len(special) + 1,)
    ref: np.ndarray
    weights: np.ndarray
    alpha: np.ndarray

    def cell(self, c) -> CellQuadrature:
        a = self.cell_alpha[c]
        lower, _ = self.grid.cell_bounds([c])
        jac = self.grid.jacobian()
        if np.isnan(a):
            k = np.searchsorted(self.special, c)
            s = slice(self.offsets[k], self.offsets[k + 1])
            ref, w, alpha = self.ref[s], self.weights[s], self.alpha[s]
        else:
            ref = self.std_ref
            w = self.std_weights * np.prod(jac)
            alpha = np.full(len(ref), a)
        pts = lower[0] + (ref + 1.0) * jac
        return CellQuadrature(pts, ref, w, alpha)

    def total(self, with_alpha=True):
        """Sum of weights (times alpha) over the whole grid."""
        area = np.prod(self.grid.jacobian())
        uniform = ~np.isnan(self.cell_alpha)
        std = self.std_weights.sum() * area
        if with_alpha:
            s = std * self.cell_alpha[uniform].sum()
            return s + (self.weights * self.alpha).sum()
        return std * uniform.sum() + self.weights.sum()


def indicator(phi, side, alpha_min):
    """Alpha values for ``side`` from level-set samples (phi == 0 is structure)."""
    inside = np.where(phi == 0.0, ZERO_NUDGE, phi) > 0
    if side == FLUID:
        inside = ~inside
    elif side != STRUCTURE:
        raise ValueError(f"unknown side {side!r}")
    return np.where(inside, 1.0, alpha_min)


def build_quadrature(grid: CellGrid, ls, side: str, depth: int | None = None,
                     n_gp: int | None = None, alpha_min: float = ALPHA_MIN,
                     resolution: int = 10, leaf_samples: int = 5) -> QuadratureSet:
    """Tensor Gauss rules on uncut cells, per-leaf rules on quadtree-split cut cells.

    ``depth`` defaults to p + 4 and ``n_gp`` to p + 1.  Alpha is assigned
    from the sign of phi at every quadrature point.
    """
    p = grid.degree
    depth = p + 4 if depth is None else depth
    n_gp = p + 1 if n_gp is None else n_gp
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if n_gp < p + 1:
        raise ValueError("n_gp must be >= p + 1")
    if side not in (STRUCTURE, FLUID):
        raise ValueError(f"unknown side {side!r}")
    std_ref, std_w = tensor_rule(n_gp)
    jac = grid.jacobian()
    lower, upper = grid.cell_bounds()
    ncell = grid.n_total_cells

    code = classify_cells(ls, lower, upper, resolution + 1)
    cut = np.flatnonzero(code == 2)
    uncut = np.flatnonzero(code != 2)

    cell_alpha = np.full(ncell, np.nan)
    pts = lower[uncut, None, :] + (std_ref[None] + 1.0) * jac
    alpha_u = indicator(evaluate(ls, pts), side, alpha_min)
    uniform = (alpha_u == alpha_u[:, :1]).all(axis=1)
    cell_alpha[uncut[uniform]] = alpha_u[uniform, 0]

    # explicit points: cut cells (quadtree) and the odd uncut cell whose
    # Gauss points straddle the interface between samples
    parts = {}
    for k in np.flatnonzero(~uniform):
        c = uncut[k]
        parts[c] = (std_ref, std_w * np.prod(jac), alpha_u[k])
    if len(cut):
        owner, lo, up, _, _ = build_quadtrees(ls, lower[cut], upper[cut], depth,
                                              leaf_samples, root_cut=np.ones(len(cut), bool))
        half = 0.5 * (up - lo)
        leaf_pts = lo[:, None, :] + (std_ref[None] + 1.0) * half[:, None, :]
        leaf_w = std_w[None, :] * np.prod(half, axis=1)[:, None]
        cell_of_leaf = cut[owner]
        leaf_ref = 2.0 * (leaf_pts - lower[cell_of_leaf][:, None, :]) / np.array(grid.cell_size) - 1.0
        alpha_c = indicator(evaluate(ls, leaf_pts), side, alpha_min)
        bounds = np.searchsorted(owner, np.arange(len(cut) + 1))
        for k, c in enumerate(cut):
            s = slice(bounds[k], bounds[k + 1])
            parts[c] = (leaf_ref[s].reshape(-1, 2), leaf_w[s].ravel(), alpha_c[s].ravel())

    special = np.array(sorted(parts), dtype=int)
    sizes = [len(parts[c][1]) for c in special]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    if len(special):
        ref = np.concatenate([parts[c][0] for c in special])
        w = np.concatenate([parts[c][1] for c in special])
        alpha = np.concatenate([parts[c][2] for c in special])
    else:
        ref, w, alpha = np.zeros((0, 2)), np.zeros(0), np.zeros(0)
    return QuadratureSet(grid, side, float(alpha_min), std_ref, std_w, cell_alpha,
                         special, offsets, ref, w, alpha)


# ---------------------------------------------------------------------------
# Dirichlet constraints
# ---------------------------------------------------------------------------

def side_predicate(grid: CellGrid, *sides, tol=1e-9):
    """Predicate selecting the named outer sides of ``grid``."""
    for s in sides:
        if s not in SIDES:
            raise ValueError(f"unknown boundary side {s!r}")
    (x0, y0), (x1, y1) = grid.extent
    hx, hy = grid.cell_size

    def pred(pts):
        x, y = pts[:, 0], pts[:, 1]
        sel = np.zeros(len(pts), dtype=bool)
        checks = {"left": np.abs(x - x0) <= tol * hx, "right": np.abs(x - x1) <= tol * hx,
                  "bottom": np.abs(y - y0) <= tol * hy, "top": np.abs(y - y1) <= tol * hy}
        for s in sides:
            sel |= checks[s]
        return sel

    return pred


def boundary_entities(grid: CellGrid):
    """Scalar DOF ids, locations and on-boundary flags of vertices and edges."""
    nx, ny, p = grid.nx, grid.ny, grid.degree
    ne = p - 1
    hx, hy = grid.cell_size
    x0, y0 = grid.origin
    verts = grid.vertex_points()
    vi, vj = np.arange(len(verts)) % (nx + 1), np.arange(len(verts)) // (nx + 1)
    v_on = (vi == 0) | (vi == nx) | (vj == 0) | (vj == ny)
    v_ids = np.arange(len(verts))[:, None]

    n_vert = len(verts)
    e = np.arange(nx * (ny + 1))
    hi, hj = e % nx, e // nx
    h_mid = np.column_stack([x0 + (hi + 0.5) * hx, y0 + hj * hy])
    h_on = (hj == 0) | (hj == ny)
    h_ids = n_vert + e[:, None] * ne + np.arange(ne)

    e = np.arange((nx + 1) * ny)
    wi, wj = e % (nx + 1), e // (nx + 1)
    w_mid = np.column_stack([x0 + wi * hx, y0 + (wj + 0.5) * hy])
    w_on = (wi == 0) | (wi == nx)
    w_ids = n_vert + nx * (ny + 1) * ne + e[:, None] * ne + np.arange(ne)
    return [(v_ids, verts, v_on), (h_ids, h_mid, h_on), (w_ids, w_mid, w_on)]


def dirichlet_mask(grid: CellGrid, predicate=None, components=None) -> np.ndarray:
    """Global DOFs of vertices/edges selected by ``predicate`` (sorted array).

    ``predicate`` maps (n, 2) entity locations (vertices, edge midpoints)
    to booleans; it may only select entities on the outer boundary.
    ``components`` restricts the constraint to some field components.
    """
    if predicate is None:
        return np.zeros(0, dtype=int)
    comps = range(grid.n_components) if components is None else components
    selected = []
    for ids, loc, on in boundary_entities(grid):
        sel = np.asarray(predicate(loc), dtype=bool)
        if (sel & ~on).any():
            raise GeometryError("non-grid-aligned Dirichlet boundary")
        selected.append(ids[sel].ravel())
    scalar = np.concatenate(selected)
    nc = grid.n_components
    dofs = np.concatenate([scalar * nc + c for c in comps]) if len(scalar) else scalar
    return np.unique(dofs.astype(int))


# ---------------------------------------------------------------------------
# field evaluation
# ---------------------------------------------------------------------------

def evaluate_field(grid: CellGrid, U, points):
    """Evaluate a discrete field at physical points.

    Returns (n,) for scalar grids or (n, n_components) otherwise.
    """
    cells, ref = grid.locate(points)
    N, _ = eval_shapes(grid.shapes, ref)
    dofs = grid.cell_dofs[cells]
    nc = grid.n_components
    U = np.asarray(U)
    vals = np.stack([(N * U[dofs[:, c::nc]]).sum(axis=1) for c in range(nc)], axis=1)
    return vals[:, 0] if nc == 1 else vals


def field_operator(grid: CellGrid, points):
    """Sparse matrix mapping DOF vectors to field values at ``points``.

    Rows are ordered point-major, component-minor.
    """
    import scipy.sparse as sp
    cells, ref = grid.locate(points)
    N, _ = eval_shapes(grid.shapes, ref)
    dofs = grid.cell_dofs[cells]
    nc = grid.n_components
    npt, nm = N.shape
    rows = (np.arange(npt)[:, None, None] * nc + np.arange(nc)[None, None, :])
    rows = np.broadcast_to(rows, (npt, nm, nc))
    cols = dofs.reshape(npt, nm, nc)
    vals = np.broadcast_to(N[:, :, None], (npt, nm, nc))
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(npt * nc, grid.n_dofs))
