"""Level-set geometry, quadtree partitions of cut cells and interface extraction.

Sign convention throughout: phi > 0 inside the structure, phi < 0 inside the
fluid.  Sampled values that are exactly zero are nudged to +1e-14 so they
count as structure.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np

ZERO_NUDGE = 1e-14

FULLY_STRUCTURE = "fully-structure"
FULLY_FLUID = "fully-fluid"
CUT = "cut"

# quadtree leaf tags
INSIDE = "uncut-inside"
OUTSIDE = "uncut-outside"
CUT_AT_MAX_DEPTH = "cut-at-max-depth"
_TAGS = (INSIDE, OUTSIDE, CUT_AT_MAX_DEPTH)


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# level sets
# ---------------------------------------------------------------------------

class LevelSet:
    """Signed geometry function; subclasses implement ``value``.

    ``gradient`` returns None when no analytic gradient is known.
    """

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        return None


class FunctionLevelSet(LevelSet):
    def __init__(self, func, grad=None):
        self._func = func
        self._grad = grad

    def value(self, x):
        return np.asarray(self._func(x), dtype=float)

    def gradient(self, x):
        if self._grad is None:
            return None
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)


class Csg(LevelSet):
    """Base class of CSG nodes.  Nodes are immutable and hashable."""

    def to_expr(self) -> str:
        raise NotImplementedError


def _f(v):
    return repr(float(v))


@dataclass(frozen=True, eq=True)
class HalfPlane(Csg):
    """phi = (x - origin) . direction / |direction|, positive along direction."""
    ox: float
    oy: float
    dx: float
    dy: float

    def _unit(self):
        d = np.array([self.dx, self.dy])
        return d / np.linalg.norm(d)

    def value(self, x):
        d = self._unit()
        return (x[..., 0] - self.ox) * d[0] + (x[..., 1] - self.oy) * d[1]

    def gradient(self, x):
        return np.broadcast_to(self._unit(), x.shape).copy()

    def to_expr(self):
        return f"halfplane({_f(self.ox)}, {_f(self.oy)}, {_f(self.dx)}, {_f(self.dy)})"


@dataclass(frozen=True, eq=True)
class Disc(Csg):
    cx: float
    cy: float
    radius: float

    def value(self, x):
        return self.radius - np.hypot(x[..., 0] - self.cx, x[..., 1] - self.cy)

    def gradient(self, x):
        rx = x[..., 0] - self.cx
        ry = x[..., 1] - self.cy
        r = np.hypot(rx, ry)
        r = np.where(r > 0, r, 1.0)
        return np.stack([-rx / r, -ry / r], axis=-1)

    def to_expr(self):
        return f"disc({_f(self.cx)}, {_f(self.cy)}, {_f(self.radius)})"


@dataclass(frozen=True, eq=True)
class Rectangle(Csg):
    x0: float
    y0: float
    x1: float
    y1: float

    def _parts(self, x):
        return np.stack([x[..., 0] - self.x0, self.x1 - x[..., 0],
                         x[..., 1] - self.y0, self.y1 - x[..., 1]], axis=-1)

    def value(self, x):
        return self._parts(x).min(axis=-1)

    def gradient(self, x):
        k = self._parts(x).argmin(axis=-1)
        g = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        return g[k]

    def to_expr(self):
        return (f"rect({_f(self.x0)}, {_f(self.y0)}, "
                f"{_f(self.x1)}, {_f(self.y1)})")


@dataclass(frozen=True, eq=True)
class _Combinator(Csg):
    children: tuple

    _name = ""
    _reduce = None

    def __post_init__(self):
        if not self.children:
            raise GeometryError(f"{self._name}() needs at least one operand")
        object.__setattr__(self, "children", tuple(self.children))

    def _stack(self, x):
        return np.stack([c.value(x) for c in self.children], axis=-1)

    def value(self, x):
        return type(self)._reduce(self._stack(x), axis=-1)

    def gradient(self, x):
        grads = [c.gradient(x) for c in self.children]
        if any(g is None for g in grads):
            return None
        pick = self._stack(x)
        k = pick.argmax(axis=-1) if type(self)._reduce is np.max else pick.argmin(axis=-1)
        g = np.stack(grads, axis=-2)
        return np.take_along_axis(g, k[..., None, None], axis=-2)[..., 0, :]

    def to_expr(self):
        return f"{self._name}(" + ", ".join(c.to_expr() for c in self.children) + ")"


class Union(_Combinator):
    _name = "union"
    _reduce = np.max


class Intersection(_Combinator):
    _name = "intersection"
    _reduce = np.min


@dataclass(frozen=True, eq=True)
class Complement(Csg):
    child: Csg

    def value(self, x):
        return -self.child.value(x)

    def gradient(self, x):
        g = self.child.gradient(x)
        return None if g is None else -g

    def to_expr(self):
        return f"complement({self.child.to_expr()})"


def union(*children):
    return Union(tuple(children))


def intersection(*children):
    return Intersection(tuple(children))


def difference(a, b):
    return Intersection((a, Complement(b)))


_PRIMITIVES = {"halfplane": (HalfPlane, 4), "disc": (Disc, 3), "rect": (Rectangle, 4)}


def parse_csg(text: str) -> Csg:
    """Parse a parenthesized CSG expression, e.g.
    ``union(rect(0, 0, 0.05, 0.1), complement(disc(0.02, 0.05, 0.01)))``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise GeometryError(f"malformed CSG expression: {exc.msg}") from None
    return _csg_node(tree.body)


def _number(node):
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = float(node.value)
        if not np.isfinite(v):
            raise GeometryError("CSG parameters must be finite")
        return v
    raise GeometryError(f"expected a number in CSG expression, got {ast.dump(node)}")


def _csg_node(node):
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name) or node.keywords:
        raise GeometryError("CSG expressions are nested calls like disc(x, y, r)")
    name = node.func.id
    if name in _PRIMITIVES:
        cls, nargs = _PRIMITIVES[name]
        if len(node.args) != nargs:
            raise GeometryError(f"{name}() takes {nargs} numbers, got {len(node.args)}")
        args = [_number(a) for a in node.args]
        if name == "disc" and args[2] <= 0:
            raise GeometryError("disc radius must be positive")
        if name == "rect" and (args[2] <= args[0] or args[3] <= args[1]):
            raise GeometryError("rect needs x0 < x1 and y0 < y1")
        if name == "halfplane" and args[2] == 0 and args[3] == 0:
            raise GeometryError("halfplane direction must be nonzero")
        return cls(*args)
    children = [_csg_node(a) for a in node.args]
    if name == "union":
        return Union(tuple(children))
    if name == "intersection":
        return Intersection(tuple(children))
    if name == "complement":
        if len(children) != 1:
            raise GeometryError("complement() takes exactly one operand")
        return Complement(children[0])
    raise GeometryError(f"unknown CSG node {name!r}")


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------

def evaluate(ls, points):
    """Evaluate ``ls`` and reject NaN results."""
    phi = np.asarray(ls(points), dtype=float)
    if np.isnan(phi).any():
        raise GeometryError("invalid level set value")
    return phi


def _nudge(phi):
    return np.where(phi == 0.0, ZERO_NUDGE, phi)


def _sample_grid(lower, upper, n):
    """Points of an n x n tensor grid (corners included) on each box.

    lower/upper: (m, 2).  Returns (m, n, n, 2) indexed [box, j(y), i(x)].
    """
    # convex combination: the end samples equal the box corners exactly
    t = np.linspace(0.0, 1.0, n)[None, :]
    x = lower[:, 0, None] * (1.0 - t) + upper[:, 0, None] * t
    y = lower[:, 1, None] * (1.0 - t) + upper[:, 1, None] * t
    pts = np.empty((len(lower), n, n, 2))
    pts[..., 0] = x[:, None, :]
    pts[..., 1] = y[:, :, None]
    return pts


def _classify_boxes(ls, lower, upper, n):
    """0 = fully fluid, 1 = fully structure, 2 = cut, for each box."""
    phi = _nudge(evaluate(ls, _sample_grid(lower, upper, n))).reshape(len(lower), -1)
    pos = (phi > 0).all(axis=1)
    neg = (phi < 0).all(axis=1)
    return np.where(pos, 1, np.where(neg, 0, 2))


def _as_bounds(bounds):
    b = np.asarray(bounds, dtype=float).reshape(2, 2)
    if not (b[1] > b[0]).all():
        raise GeometryError("degenerate bounds")
    return b


def classify_cell(ls, bounds, samples_per_edge: int = 11) -> str:
    """Classify a box ((x0, y0), (x1, y1)) by sampling phi on a tensor grid."""
    if samples_per_edge < 2:
        raise GeometryError("samples_per_edge must be >= 2")
    b = _as_bounds(bounds)
    code = _classify_boxes(ls, b[None, 0], b[None, 1], samples_per_edge)[0]
    return (FULLY_FLUID, FULLY_STRUCTURE, CUT)[code]


def classify_cells(ls, lower, upper, samples_per_edge=11):
    """Vectorized classify_cell; returns codes 0 fluid, 1 structure, 2 cut."""
    return _classify_boxes(ls, np.asarray(lower, float), np.asarray(upper, float),
                           samples_per_edge)


# ---------------------------------------------------------------------------
# quadtree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadTreePartition:
    bounds: np.ndarray          # ((x0, y0), (x1, y1))
    max_depth: int
    lower: np.ndarray           # (n, 2) leaf lower corners
    upper: np.ndarray           # (n, 2) leaf upper corners
    depth: np.ndarray           # (n,)
    tags: tuple                 # leaf tags

    def __len__(self):
        return len(self.depth)

    @property
    def areas(self):
        return np.prod(self.upper - self.lower, axis=1)


def build_quadtrees(ls, lower, upper, max_depth, samples_per_edge=5, root_cut=None):
    """Quadtree partitions of many root boxes at once.

    Returns (owner, leaf_lower, leaf_upper, depth, tag_code) with tag codes
    0 outside, 1 inside, 2 cut-at-max-depth.  ``root_cut`` (bool array)
    skips the sampling test on the roots when the caller already knows they
    are cut.
    """
    if max_depth < 0:
        raise GeometryError("max_depth must be >= 0")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    owner = np.arange(len(lower))
    out = []
    depth = 0
    while len(owner):
        if depth == 0 and root_cut is not None:
            code = np.where(np.asarray(root_cut, bool), 2,
                            _classify_boxes(ls, lower, upper, samples_per_edge))
        else:
            code = _classify_boxes(ls, lower, upper, samples_per_edge)
        split = code == 2
        if depth == max_depth:
            split[:] = False
        keep = ~split
        out.append((owner[keep], lower[keep], upper[keep],
                    np.full(keep.sum(), depth), code[keep]))
        if not split.any():
            break
        lo, up, ow = lower[split], upper[split], owner[split]
        mid = 0.5 * (lo + up)
        # children ordered lower-left, lower-right, upper-left, upper-right
        c_lo = np.stack([lo, np.column_stack([mid[:, 0], lo[:, 1]]),
                         np.column_stack([lo[:, 0], mid[:, 1]]), mid], axis=1)
        c_up = np.stack([mid, np.column_stack([up[:, 0], mid[:, 1]]),
                         np.column_stack([mid[:, 0], up[:, 1]]), up], axis=1)
        lower = c_lo.reshape(-1, 2)
        upper = c_up.reshape(-1, 2)
        owner = np.repeat(ow, 4)
        depth += 1
    own, lo, up, dep, code = (np.concatenate(a) for a in zip(*out))
    order = np.argsort(own, kind="stable")
    return own[order], lo[order], up[order], dep[order], code[order]


def build_quadtree(ls, bounds, max_depth: int, samples_per_edge: int = 5) -> QuadTreePartition:
    """Recursively bisect a box while it is cut and shallower than max_depth."""
    b = _as_bounds(bounds)
    _, lo, up, dep, code = build_quadtrees(ls, b[None, 0], b[None, 1], max_depth,
                                           samples_per_edge)
    tags = tuple((OUTSIDE, INSIDE, CUT_AT_MAX_DEPTH)[c] for c in code)
    return QuadTreePartition(b, max_depth, lo, up, dep, tags)


# ---------------------------------------------------------------------------
# marching squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterfaceSegment:
    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray
    owner_cell: int

    @property
    def length(self):
        return float(np.hypot(*(self.b - self.a)))

    @property
    def midpoint(self):
        return 0.5 * (self.a + self.b)


@dataclass(frozen=True)
class SegmentSet:
    """Interface segments as flat arrays (a, b, normal: (n, 2); owner: (n,))."""
    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray
    owner: np.ndarray

    def __len__(self):
        return len(self.owner)

    @property
    def lengths(self):
        return np.hypot(*(self.b - self.a).T)

    def segments(self):
        return [InterfaceSegment(self.a[i], self.b[i], self.normal[i], int(self.owner[i]))
                for i in range(len(self))]

    def flipped(self):
        return SegmentSet(self.a, self.b, -self.normal, self.owner)

    @classmethod
    def empty(cls):
        z = np.zeros((0, 2))
        return cls(z, z, z, np.zeros(0, dtype=int))


# edge k of a sub-square joins corners _EDGE_CORNERS[k]; corners are
# 0 (i, j), 1 (i+1, j), 2 (i+1, j+1), 3 (i, j+1)
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
# saddle resolution: (case, center positive) -> two edge pairs
_SADDLE = {
    (5, True): ((0, 1), (2, 3)),
    (5, False): ((3, 0), (1, 2)),
    (10, True): ((3, 0), (1, 2)),
    (10, False): ((0, 1), (2, 3)),
}


def _numeric_gradient(ls, x, h):
    """Central differences; ``h`` is a scalar or one step per point."""
    h = np.broadcast_to(np.asarray(h, dtype=float).reshape(-1, 1), (len(x), 1))
    ex = h * np.array([1.0, 0.0])
    ey = h * np.array([0.0, 1.0])
    gx = (evaluate(ls, x + ex) - evaluate(ls, x - ex)) / (2 * h[:, 0])
    gy = (evaluate(ls, x + ey) - evaluate(ls, x - ey)) / (2 * h[:, 0])
    return np.stack([gx, gy], axis=-1)


def extract_interfaces(ls, lower, upper, resolution: int = 10) -> SegmentSet:
    """Marching squares on a resolution x resolution sub-grid of every box.

    Segments never cross box boundaries; their normals point from phi > 0
    (structure) toward phi < 0 (fluid).
    """
    if resolution < 1:
        raise GeometryError("resolution must be >= 1")
    lower = np.asarray(lower, dtype=float).reshape(-1, 2)
    upper = np.asarray(upper, dtype=float).reshape(-1, 2)
    if len(lower) == 0:
        return SegmentSet.empty()
    r = resolution
    pts = _sample_grid(lower, upper, r + 1)
    phi = _nudge(evaluate(ls, pts))
    flat = phi.reshape(len(lower), -1)
    active = ~((flat > 0).all(axis=1) | (flat < 0).all(axis=1))
    if not active.any():
        return SegmentSet.empty()
    cells = np.flatnonzero(active)
    pts, phi = pts[cells], phi[cells]

    # corner values / positions of every sub-square: (nc, r, r, 4)
    cv = np.stack([phi[:, :-1, :-1], phi[:, :-1, 1:], phi[:, 1:, 1:], phi[:, 1:, :-1]], axis=-1)
    cp = np.stack([pts[:, :-1, :-1], pts[:, :-1, 1:], pts[:, 1:, 1:], pts[:, 1:, :-1]], axis=-2)
    inside = cv > 0
    case = (inside * np.array([1, 2, 4, 8])).sum(axis=-1)
    mixed = (case != 0) & (case != 15)
    ci, jj, ii = np.nonzero(mixed)
    cv, cp, case, inside = cv[ci, jj, ii], cp[ci, jj, ii], case[ci, jj, ii], inside[ci, jj, ii]

    # crossing points on the four edges
    cross = np.zeros((len(ci), 4), dtype=bool)
    xpt = np.zeros((len(ci), 4, 2))
    for k, (p, q) in enumerate(_EDGE_CORNERS):
        cross[:, k] = inside[:, p] != inside[:, q]
        fa, fb = cv[:, p], cv[:, q]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(cross[:, k], fa / (fa - fb), 0.0)
        xpt[:, k] = cp[:, p] + t[:, None] * (cp[:, q] - cp[:, p])

    seg_a, seg_b, seg_owner = [], [], []
    simple = cross.sum(axis=1) == 2
    if simple.any():
        e = np.argsort(~cross[simple], axis=1, kind="stable")[:, :2]
        rows = np.flatnonzero(simple)
        seg_a.append(xpt[rows, e[:, 0]])
        seg_b.append(xpt[rows, e[:, 1]])
        seg_owner.append(cells[ci[rows]])
    saddle = np.flatnonzero(~simple)
    if len(saddle):
        centers = cp[saddle].mean(axis=1)
        pc = _nudge(evaluate(ls, centers)) > 0
        for row, c_pos in zip(saddle, pc):
            for ea, eb in _SADDLE[(int(case[row]), bool(c_pos))]:
                seg_a.append(xpt[row, ea][None])
                seg_b.append(xpt[row, eb][None])
                seg_owner.append(cells[ci[row]][None])
    a = np.concatenate(seg_a)
    b = np.concatenate(seg_b)
    owner = np.concatenate(seg_owner)

    size = np.min(upper[owner] - lower[owner], axis=1)
    length = np.hypot(*(b - a).T)
    keep = length > 1e-12 * size
    a, b, owner, size = a[keep], b[keep], owner[keep], size[keep]
    order = np.lexsort((a[:, 1], a[:, 0], owner))
    a, b, owner, size = a[order], b[order], owner[order], size[order]

    mid = 0.5 * (a + b)
    grad = ls.gradient(mid) if hasattr(ls, "gradient") else None
    if grad is None:
        grad = _numeric_gradient(ls, mid, 1e-6 * size[:, None])
    grad = np.asarray(grad, dtype=float)
    gnorm = np.hypot(*grad.T)
    tangent = b - a
    perp = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    bad = ~(gnorm > 0)
    grad[bad] = perp[bad]
    gnorm[bad] = np.hypot(*perp[bad].T)
    n = -grad / gnorm[:, None]
    eps = (1e-6 * size)[:, None]
    wrong = evaluate(ls, mid - eps * n) <= evaluate(ls, mid + eps * n)
    n[wrong] = -n[wrong]
    return SegmentSet(a, b, n, owner)


def extract_interface(ls, bounds, resolution: int = 10) -> list[InterfaceSegment]:
    """Interface segments of a single box, as InterfaceSegment objects."""
    b = _as_bounds(bounds)
    return extract_interfaces(ls, b[None, 0], b[None, 1], resolution).segments()
