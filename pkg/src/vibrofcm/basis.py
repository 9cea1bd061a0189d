"""Gauss-Legendre rules and hierarchical (integrated Legendre) shape functions.

Two-dimensional modes are tensor products of the 1D hierarchical modes

    N_0 = (1 - x) / 2,   N_1 = (1 + x) / 2,
    N_j = (P_j - P_{j-2}) / sqrt(2 (2j - 1)),   j = 2..p

arranged into vertex, edge and interior modes.  Edge modes run along +x
(horizontal edges) or +y (vertical edges) in every cell, so odd modes of
neighbouring cells agree on shared edges without sign flips.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

TRUNK = "trunk"
TENSOR = "tensor"
SPACES = (TRUNK, TENSOR)

# (1D index in x, 1D index in y) of the vertex modes, counterclockwise
# from the lower-left corner
VERTEX_MODES = ((0, 0), (1, 0), (1, 1), (0, 1))
EDGES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class Rule1D:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.points)


@lru_cache(maxsize=None)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_rule(n: int) -> Rule1D:
    """Gauss-Legendre rule with ``n`` points on [-1, 1]."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= 64:
        raise ValueError(f"unsupported order: {n!r} (expected 1 <= n <= 64)")
    x, w = _leggauss(int(n))
    return Rule1D(x, w)


def tensor_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on [-1, 1]^2 as (points (n*n, 2), weights (n*n,))."""
    r = gauss_rule(n)
    xi, eta = np.meshgrid(r.points, r.points, indexing="xy")
    w = np.outer(r.weights, r.weights)
    return np.column_stack([xi.ravel(), eta.ravel()]), w.ravel()


def legendre(x, n):
    """Legendre polynomials P_0..P_n and their derivatives at ``x``.

    Returns two arrays of shape (n + 1, *x.shape).
    """
    x = np.asarray(x, dtype=float)
    P = np.empty((n + 1,) + x.shape)
    dP = np.empty_like(P)
    P[0] = 1.0
    dP[0] = 0.0
    if n >= 1:
        P[1] = x
        dP[1] = 1.0
    for k in range(1, n):
        P[k + 1] = ((2 * k + 1) * x * P[k] - k * P[k - 1]) / (k + 1)
        dP[k + 1] = dP[k - 1] + (2 * k + 1) * P[k]
    return P, dP


def hierarchic_1d(x, p):
    """Values and derivatives of the p + 1 one-dimensional modes at ``x``."""
    x = np.asarray(x, dtype=float)
    P, dP = legendre(x, max(p, 1))
    N = np.empty((p + 1,) + x.shape)
    dN = np.empty_like(N)
    N[0] = 0.5 * (1.0 - x)
    N[1] = 0.5 * (1.0 + x)
    dN[0] = -0.5
    dN[1] = 0.5
    for j in range(2, p + 1):
        scale = 1.0 / np.sqrt(2.0 * (2 * j - 1))
        N[j] = scale * (P[j] - P[j - 2])
        dN[j] = np.sqrt((2 * j - 1) / 2.0) * P[j - 1]
    return N, dN


def interior_mode_count(p: int, space: str = TRUNK) -> int:
    if space == TRUNK:
        return (p - 2) * (p - 3) // 2 if p >= 4 else 0
    if space == TENSOR:
        return max(0, (p - 1) ** 2)
    raise ValueError(f"unknown space {space!r}")


def mode_count(p: int, space: str = TRUNK, n_components: int = 1) -> int:
    """Number of element modes times the number of field components."""
    if p < 1:
        raise ValueError("degree must be >= 1")
    return (4 + 4 * (p - 1) + interior_mode_count(p, space)) * n_components


@dataclass(frozen=True)
class Mode:
    """One 2D mode: ``kind`` is vertex|edge|interior.

    ``entity`` is the local vertex index (0..3), the edge index (0..3, in
    the order of EDGES) or 0 for the interior; ``slot`` numbers the modes
    sharing that entity.  ``ix``/``iy`` are the 1D factors.
    """
    kind: str
    entity: int
    slot: int
    ix: int
    iy: int


@dataclass(frozen=True)
class ShapeSet2D:
    degree: int
    space: str = TRUNK
    modes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.space not in SPACES:
            raise ValueError(f"unknown space {self.space!r}")
        object.__setattr__(self, "modes", _build_modes(self.degree, self.space))

    def __len__(self):
        return len(self.modes)

    @property
    def n_interior(self):
        return interior_mode_count(self.degree, self.space)

    def descriptor(self, i):
        m = self.modes[i]
        return (m.kind, m.ix, m.iy)


@lru_cache(maxsize=None)
def _build_modes(p, space):
    modes = [Mode("vertex", v, 0, ix, iy) for v, (ix, iy) in enumerate(VERTEX_MODES)]
    for e, edge in enumerate(EDGES):
        for k in range(2, p + 1):
            ix, iy = {
                "bottom": (k, 0),
                "right": (1, k),
                "top": (k, 1),
                "left": (0, k),
            }[edge]
            modes.append(Mode("edge", e, k - 2, ix, iy))
    slot = 0
    for i in range(2, p + 1):
        for j in range(2, p + 1):
            if space == TRUNK and i + j > p:
                continue
            modes.append(Mode("interior", 0, slot, i, j))
            slot += 1
    return tuple(modes)


def eval_shapes(s: ShapeSet2D, xi):
    """Evaluate all modes of ``s`` at reference points ``xi``.

    ``xi`` has shape (2,) or (n, 2).  Returns values (n, m) and reference
    gradients (n, m, 2); a single point gives (m,) and (m, 2).
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = np.atleast_2d(xi)
    Nx, dNx = hierarchic_1d(pts[:, 0], s.degree)
    Ny, dNy = hierarchic_1d(pts[:, 1], s.degree)
    ix = np.array([m.ix for m in s.modes])
    iy = np.array([m.iy for m in s.modes])
    values = (Nx[ix] * Ny[iy]).T
    grads = np.stack([(dNx[ix] * Ny[iy]).T, (Nx[ix] * dNy[iy]).T], axis=-1)
    if single:
        return values[0], grads[0]
    return values, grads
