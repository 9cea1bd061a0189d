from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from vibrofcm.discretization import dof_count
from vibrofcm.scenarios import (EVENTS, PRESETS, EventTimeline, RickerSignal, build_benchmark,
                                build_impedance_tube, coarsen, compute_rt_measures,
                                cumulative_measure, event_window_attribution, porosity, preset,
                                ricker, value_at, windowed_increments)
from vibrofcm.geometry import Rectangle, Union
from vibrofcm.simulation import make_grids, simulate
from vibrofcm.timeintegration import ObserverRecords

C_AIR = 287.139303461


def records(data, groups, dt=1.0):
    data = np.asarray(data, dtype=float)
    n = data.shape[1]
    return ObserverRecords([f"o{i}" for i in range(n)], ["fluid-pressure"] * n,
                           [(0.0, 0.0)] * n, list(groups), dt * np.arange(len(data)), data)


class TestRicker:
    def test_peak(self):
        assert ricker(1e-4, RickerSignal()) == 1.0

    def test_zero_crossing(self):
        sig = RickerSignal()
        assert abs(ricker(sig.t0 + sig.sigma, sig)) < 1e-15

    def test_value_at_start(self):
        expected = (1 - (2 * math.pi) ** 2) * math.exp(-((2 * math.pi) ** 2) / 2)
        assert ricker(0.0, RickerSignal()) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(-1.0294e-7, rel=1e-4)

    def test_amplitude_scales(self):
        t = np.linspace(0, 3e-4, 31)
        np.testing.assert_allclose(ricker(t, RickerSignal(1e-4, 2.5)),
                                   2.5 * ricker(t, RickerSignal()), rtol=1e-15)


class TestPresets:
    def test_benchmark_counts_and_material(self):
        cfg = build_benchmark()
        gs, gf = make_grids(cfg)
        assert (dof_count(gs), dof_count(gf)) == (109442, 54721)
        m = cfg.material
        assert m.c_pressure == pytest.approx(164.082530828, rel=1e-9)
        assert m.c_shear == pytest.approx(87.7058019307, rel=1e-9)
        assert m.c == pytest.approx(C_AIR, rel=1e-9)
        assert (m.E, m.nu, m.rho_s, m.rho_f, m.kappa_f) == (1e6, 0.3, 50.0, 1.225, 0.101e6)
        assert (cfg.dt, cfg.duration, cfg.quadrature_depth, cfg.quadrature_points) == \
            (1e-7, 2e-3, 7, 4)
        assert len(cfg.observers) == 4

    @pytest.mark.parametrize("variant", [1, 2, 3])
    def test_tube_counts(self, variant):
        cfg = build_impedance_tube(variant)
        gs, gf = make_grids(cfg)
        assert (dof_count(gs), dof_count(gf)) == (22082, 76561)
        assert (cfg.dt, cfg.duration, cfg.quadrature_depth, cfg.quadrature_points) == \
            (1e-8, 2e-3, 6, 3)
        groups = [o.group for o in cfg.observers]
        assert groups.count("sender") == 5 and groups.count("receiver") == 5

    def test_builders_are_pure(self):
        for name in PRESETS:
            a, b = preset(name), preset(name)
            assert a == b and hash(a) == hash(b)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            build_impedance_tube(4)
        with pytest.raises(ValueError, match="unknown preset"):
            preset("tube-v9")

    def test_tube_porosity_equal(self):
        values = [porosity(build_impedance_tube(v)) for v in (1, 2, 3)]
        for v in values:
            assert v == pytest.approx(0.25, rel=5e-3)
        assert max(values) - min(values) < 5e-3 * min(values)

    def test_coarsen(self):
        cfg = coarsen(build_benchmark(), 4)
        assert cfg.structure_grid.cells == (45, 15)
        assert cfg.structure_grid.cell_size[0] == pytest.approx(0.1 / 15)
        with pytest.raises(ValueError):
            coarsen(build_benchmark(), 7)


class TestEvents:
    def test_table_times(self):
        tl = EventTimeline(C_AIR, 0.05)
        expected = {"A": 0.435, "B": 0.609, "C": 0.784, "D": 1.48, "E": 1.65, "F": 1.65}
        for label, ms in expected.items():
            assert float(f"{tl.time(label) * 1e3:.3g}") == ms

    def test_event_a_value(self):
        assert EventTimeline(C_AIR, 0.05).time("A") == pytest.approx(4.353e-4, rel=1e-3)

    def test_windows(self):
        w = event_window_attribution(EventTimeline(C_AIR, 0.05))
        r0, r1 = w["reflectance"]
        t0, t1 = w["transmittance"]
        assert r0 < r1 and t0 < t1
        assert (round(r0 * 1e3, 3), round(r1 * 1e3, 2)) == (0.609, 1.48)
        assert (round(t0 * 1e3, 3), round(t1 * 1e3, 2)) == (0.784, 1.65)

    def test_doubling_c_halves_times(self):
        a, b = EventTimeline(C_AIR, 0.05), EventTimeline(2 * C_AIR, 0.05)
        for e in EVENTS:
            assert b.time(e.label) == a.time(e.label) / 2


class TestMeasures:
    def test_all_zero(self):
        P_ref, P_tra, _, _ = compute_rt_measures(records(np.zeros((5, 2)), ["sender", "receiver"]))
        assert (P_ref, P_tra) == (0.0, 0.0)

    def test_single_sample(self):
        P_ref, _, _, _ = compute_rt_measures(records([[3.0]], ["sender"]))
        assert P_ref == 3.0

    def test_up_to_step(self):
        rec = records([[3.0, 1.0], [4.0, 2.0]], ["sender", "receiver"])
        assert compute_rt_measures(rec, 0)[:2] == (3.0, 1.0)
        P_ref, P_tra, _, _ = compute_rt_measures(rec, 1)
        assert P_ref == 5.0 and P_tra == pytest.approx(math.sqrt(5))

    def test_monotone(self):
        rng = np.random.default_rng(5)
        series = cumulative_measure(rng.standard_normal((200, 5)))
        assert (np.diff(series) >= 0).all()

    def test_value_at_and_increments(self):
        t = np.arange(0, 2e-3, 1e-5)
        ref = t * 1e3
        tra = 2 * t * 1e3
        tl = EventTimeline(C_AIR, 0.05)
        d_ref, d_tra = windowed_increments(t, ref, tra, tl)
        assert d_ref == pytest.approx(1.48 - 0.609, abs=0.02)
        assert d_tra == pytest.approx(2 * (1.65 - 0.784), abs=0.04)
        assert value_at(t, ref, 0.0) == 0.0


def slab_variant(delta):
    """Benchmark with the bump removed and both slabs thickened by ``delta``."""
    cfg = build_benchmark()
    L = cfg.length
    geo = Union((Rectangle(0.0, 0.0, L / 2 + delta, L), Rectangle(2.5 * L - delta, 0.0, 3 * L, L)))
    return replace(cfg, geometry=geo)


@pytest.mark.slow
class TestBoundaryFittedAgreement:
    def test_immersed_matches_fitted(self):
        h = build_benchmark().structure_grid.cell_size[0]
        # one fine cell: on the fine grid the slab faces are grid lines,
        # on the 2x coarser grid they cut cells halfway
        cfg = slab_variant(h)
        fitted = simulate(cfg, duration=1e-3)
        immersed = simulate(coarsen(cfg, 2), duration=1e-3)
        errs = [np.linalg.norm(immersed.data[:, i] - fitted.data[:, i])
                / np.linalg.norm(fitted.data[:, i]) for i in range(fitted.data.shape[1])]
        print("relative L2 per observer:", ", ".join(f"{e:.3e}" for e in errs))
        assert max(errs) < 0.02
