from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vibrofcm.basis import TENSOR, TRUNK, mode_count
from vibrofcm.discretization import (FLUID, STRUCTURE, CellGrid, build_quadrature, dirichlet_mask,
                                     dof_count, evaluate_field, field_operator, indicator,
                                     number_dofs, side_predicate)
from vibrofcm.geometry import Disc, FunctionLevelSet, GeometryError, HalfPlane


def grid(nx, ny, p, space=TRUNK, nc=1, h=1.0, origin=(0.0, 0.0)):
    return CellGrid(origin, (h, h), (nx, ny), p, space, nc)


def brute_force_count(nx, ny, p, space, nc):
    """Count DOFs by enumerating every topological entity once."""
    entities = set()
    for i, j in itertools.product(range(nx), range(ny)):
        for v in ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)):
            entities.add(("v", v))
        for e in (("h", i, j), ("h", i, j + 1), ("w", i, j), ("w", i + 1, j)):
            entities.add(e)
        entities.add(("c", i, j))
    per = {"v": 1, "h": p - 1, "w": p - 1,
           "c": mode_count(p, space) - 4 - 4 * (p - 1)}
    return nc * sum(per[e[0]] for e in entities)


class TestDofCounts:
    @pytest.mark.parametrize("nx,ny,p,nc,expected", [
        (180, 60, 3, 1, 54721), (180, 60, 3, 2, 109442),
        (420, 60, 2, 1, 76561), (60, 60, 2, 2, 22082),
    ])
    def test_reference_counts(self, nx, ny, p, nc, expected):
        g = grid(nx, ny, p, TRUNK, nc)
        total, dofs = number_dofs(g)
        assert total == expected
        assert dof_count(g) == expected
        assert dofs.shape == (nx * ny, mode_count(p, TRUNK, nc))

    @pytest.mark.parametrize("nx,ny,p,space,nc", [
        (nx, ny, p, space, nc)
        for nx in (1, 2, 4) for ny in (1, 3, 4) for p in (1, 2, 3, 4)
        for space in (TRUNK, TENSOR) for nc in (1, 2)
    ])
    def test_formula_matches_enumeration(self, nx, ny, p, space, nc):
        g = grid(nx, ny, p, space, nc)
        total, dofs = number_dofs(g)
        assert total == dof_count(g) == brute_force_count(nx, ny, p, space, nc)
        # numbering is a bijection onto 0..total-1
        assert np.array_equal(np.unique(dofs), np.arange(total))

    def test_shared_edge_dofs_agree(self):
        g = grid(2, 1, 4)
        _, dofs = number_dofs(g)
        modes = g.shapes.modes
        right = [k for k, m in enumerate(modes) if m.kind == "edge" and m.entity == 1]
        left = [k for k, m in enumerate(modes) if m.kind == "edge" and m.entity == 3]
        assert dofs[0, right].tolist() == dofs[1, left].tolist()

    def test_components_interleave(self):
        g = grid(1, 1, 1, nc=2)
        _, dofs = number_dofs(g)
        assert dofs[0].tolist() == [0, 1, 2, 3, 6, 7, 4, 5]


class TestQuadrature:
    def test_full_fluid_cell(self):
        g = grid(1, 1, 2)
        ls = FunctionLevelSet(lambda x: -np.ones(x.shape[:-1]))
        qf = build_quadrature(g, ls, FLUID)
        qs = build_quadrature(g, ls, STRUCTURE, alpha_min=1e-8)
        assert qf.cell(0).alpha.tolist() == [1.0] * 9
        assert qs.cell(0).alpha.tolist() == [1e-8] * 9

    @pytest.mark.parametrize("nx,ny,h", [(3, 2, 0.5), (7, 5, 0.013), (1, 1, 2.0)])
    def test_constant_integrates_to_domain_area(self, nx, ny, h):
        g = grid(nx, ny, 3, h=h)
        q = build_quadrature(g, Disc(nx * h / 2, ny * h / 2, 0.37 * ny * h), STRUCTURE,
                             alpha_min=1.0)
        assert q.total() == pytest.approx(nx * ny * h * h, rel=1e-12)

    def test_disc_area(self):
        R = 0.02
        g = CellGrid((0.0, 0.0), (0.01, 0.01), (10, 10), 1)
        q = build_quadrature(g, Disc(0.05, 0.05, R), STRUCTURE, depth=7, alpha_min=0.0)
        assert abs(q.total() - math.pi * R**2) < 1e-3 * math.pi * R**2

    def test_fluid_plus_structure_is_area(self):
        g = CellGrid((0.0, 0.0), (0.01, 0.01), (10, 10), 2)
        ls = Disc(0.043, 0.051, 0.027)
        a_s = build_quadrature(g, ls, STRUCTURE, alpha_min=0.0).total()
        a_f = build_quadrature(g, ls, FLUID, alpha_min=0.0).total()
        assert a_s + a_f == pytest.approx(0.01, rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(cx=st.floats(0.0, 1.0), cy=st.floats(0.0, 1.0), r=st.floats(0.05, 0.6),
           side=st.sampled_from([STRUCTURE, FLUID]))
    def test_alpha_follows_sign_of_phi(self, cx, cy, r, side):
        g = grid(4, 4, 2, h=0.25)
        ls = Disc(cx, cy, r)
        q = build_quadrature(g, ls, side, depth=3, alpha_min=1e-8)
        for c in range(g.n_total_cells):
            cq = q.cell(c)
            inside = ls(cq.points) > 0
            expect = inside if side == STRUCTURE else ~inside
            assert np.array_equal(cq.alpha == 1.0, expect)

    def test_indicator_zero_counts_as_structure(self):
        phi = np.array([1.0, 0.0, -1.0])
        assert indicator(phi, STRUCTURE, 0.0).tolist() == [1.0, 1.0, 0.0]
        assert indicator(phi, FLUID, 0.0).tolist() == [0.0, 0.0, 1.0]

    def test_rejects_too_few_points(self):
        with pytest.raises(ValueError):
            build_quadrature(grid(1, 1, 3), Disc(0, 0, 1), STRUCTURE, n_gp=3)


class TestDirichlet:
    def test_clamped_horizontal_sides(self):
        g = grid(180, 60, 3, nc=2, h=1 / 60)
        fixed = dirichlet_mask(g, side_predicate(g, "bottom", "top"))
        per_side = (181 + 180 * 2) * 2
        assert len(fixed) == 2 * per_side

    def test_empty_predicate(self):
        g = grid(3, 3, 2)
        assert len(dirichlet_mask(g, None)) == 0
        assert len(dirichlet_mask(g, lambda pts: np.zeros(len(pts), bool))) == 0

    def test_all_sides(self):
        g = grid(4, 3, 2)
        fixed = dirichlet_mask(g, side_predicate(g, "left", "right", "bottom", "top"))
        # 14 boundary vertices + 14 boundary edges with one mode each
        assert len(fixed) == 14 + 14

    def test_single_component(self):
        g = grid(2, 2, 1, nc=2)
        fixed = dirichlet_mask(g, side_predicate(g, "bottom"), components=[1])
        assert fixed.tolist() == [1, 3, 5]

    def test_interior_selection_rejected(self):
        g = grid(4, 4, 2)
        with pytest.raises(GeometryError, match="non-grid-aligned"):
            dirichlet_mask(g, lambda pts: np.abs(pts[:, 0] - 2.0) < 1e-12)


class TestFieldEvaluation:
    def test_linear_field_reproduced(self):
        g = grid(3, 2, 3, h=0.5, origin=(1.0, -1.0))
        verts = g.vertex_points()
        U = np.zeros(g.n_dofs)
        U[:len(verts)] = 2.0 * verts[:, 0] - 3.0 * verts[:, 1] + 0.5
        pts = np.random.default_rng(0).uniform([1.0, -1.0], [2.5, 0.0], size=(25, 2))
        np.testing.assert_allclose(evaluate_field(g, U, pts),
                                   2.0 * pts[:, 0] - 3.0 * pts[:, 1] + 0.5, atol=1e-13)

    def test_operator_matches_evaluate(self):
        g = grid(2, 2, 4, nc=2)
        U = np.random.default_rng(1).standard_normal(g.n_dofs)
        pts = np.array([[0.3, 0.4], [1.0, 1.0], [2.0, 0.0], [1.7, 1.2]])
        op = field_operator(g, pts)
        np.testing.assert_allclose((op @ U).reshape(-1, 2), evaluate_field(g, U, pts),
                                   atol=1e-14)

    def test_point_outside(self):
        g = grid(2, 2, 1)
        with pytest.raises(ValueError, match="outside"):
            g.locate(np.array([[2.5, 0.5]]))

    def test_boundary_points_clamp(self):
        g = grid(2, 2, 1)
        cells, ref = g.locate(np.array([[2.0, 2.0], [0.0, 0.0]]))
        assert cells.tolist() == [3, 0]
        np.testing.assert_allclose(ref, [[1, 1], [-1, -1]])


class TestHalfPlaneInterface:
    def test_vertical_interface_split(self):
        g = grid(4, 1, 2, h=0.25)
        # x = 0.59375 sits on a depth-3 leaf boundary, so the split is exact
        ls = HalfPlane(0.59375, 0.0, -1.0, 0.0)
        q = build_quadrature(g, ls, STRUCTURE, alpha_min=0.0)
        assert q.total() == pytest.approx(0.59375 * 0.25, rel=1e-12)
