"""Scenario configurations: the verification benchmark and the impedance tube.

Geometry of both presets is ordinary configuration (a CSG expression) and
can be edited without touching code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import PLANE_STRESS, Material
from .geometry import Complement, Csg, Disc, HalfPlane, Intersection, Rectangle, Union

CENTRAL = "central"
TRAPEZOIDAL = "trapezoidal"
SCHEMES = (CENTRAL, TRAPEZOIDAL)

# Table of material inputs used by both presets
E_STRUCTURE = 1e6
NU_STRUCTURE = 0.3
RHO_STRUCTURE = 50.0
RHO_FLUID = 1.225
KAPPA_FLUID = 0.101e6

RICKER_T0 = 1e-4


@dataclass(frozen=True)
class RickerSignal:
    t0: float = RICKER_T0
    amplitude: float = 1.0

    @property
    def sigma(self):
        return self.t0 / (2.0 * math.pi)

    def __call__(self, t):
        return ricker(t, self)


def ricker(t, sig: RickerSignal):
    """(1 - tau^2) exp(-tau^2 / 2) with tau = (t - t0) / sigma, times amplitude."""
    tau2 = ((np.asarray(t, dtype=float) - sig.t0) / sig.sigma) ** 2
    return sig.amplitude * (1.0 - tau2) * np.exp(-0.5 * tau2)


@dataclass(frozen=True)
class GridSpec:
    origin: tuple
    cells: tuple
    cell_size: tuple
    degree: int
    space: str = "trunk"


@dataclass(frozen=True)
class ExcitationSpec:
    """Ricker-driven boundary datum on an outer side of one field's grid.

    For ``field == "structure"`` ``value`` is the traction per unit signal;
    for ``"fluid"`` it is the normal velocity v.n per unit signal.
    """
    field: str
    side: str
    value: tuple
    t0: float = RICKER_T0
    amplitude: float = 1.0
    signal: str = "ricker"

    @property
    def ricker(self):
        return RickerSignal(self.t0, self.amplitude)


@dataclass(frozen=True)
class ObserverSpec:
    name: str
    kind: str
    x: float
    y: float
    group: str = ""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    length: float
    geometry: Csg
    structure_grid: GridSpec
    fluid_grid: GridSpec
    material: Material
    excitation: ExcitationSpec
    observers: tuple
    dt: float
    duration: float
    scheme: str = CENTRAL
    depth: int | None = None
    n_gp: int | None = None
    alpha_min: float = 1e-8
    interface_resolution: int = 10
    dirichlet_structure: tuple = ()
    dirichlet_fluid: tuple = ()
    observer_stride: int = 1
    snapshot_stride: int = 0

    @property
    def quadrature_depth(self):
        return self.structure_grid.degree + 4 if self.depth is None else self.depth

    @property
    def quadrature_points(self):
        return self.structure_grid.degree + 1 if self.n_gp is None else self.n_gp


def default_material():
    return Material(RHO_STRUCTURE, E_STRUCTURE, NU_STRUCTURE, RHO_FLUID, KAPPA_FLUID,
                    PLANE_STRESS)


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

def benchmark_geometry(L=0.1):
    """Left slab (thickness L/2) with a semicircular bump of radius L/5 at
    mid-height, plus a right slab of the same thickness."""
    R = L / 5
    return Union((Rectangle(0.0, 0.0, L / 2, L), Disc(L / 2, L / 2, R),
                  Rectangle(2.5 * L, 0.0, 3 * L, L)))


def build_benchmark() -> ScenarioConfig:
    L = 0.1
    h = L / 60
    grid = GridSpec((0.0, 0.0), (180, 60), (h, h), 3, "trunk")
    observers = (
        ObserverSpec("o1", "fluid-pressure", 0.8 * L, 0.5 * L),
        ObserverSpec("o2", "fluid-pressure", 1.0 * L, 0.2 * L),
        ObserverSpec("o3", "fluid-pressure", 1.5 * L, 0.5 * L),
        ObserverSpec("o4", "fluid-pressure", 2.2 * L, 0.8 * L),
    )
    return ScenarioConfig(
        name="benchmark", length=L, geometry=benchmark_geometry(L),
        structure_grid=grid, fluid_grid=grid, material=default_material(),
        excitation=ExcitationSpec("structure", "left", (-1.0, 0.0)),
        observers=observers, dt=1e-7, duration=2e-3, scheme=CENTRAL,
        depth=7, n_gp=4, dirichlet_structure=("bottom", "top"))


# ---------------------------------------------------------------------------
# impedance tube
# ---------------------------------------------------------------------------

TUBE_POROSITY = 0.25


def _tube_pores(variant, L, porosity=TUBE_POROSITY):
    """Fluid-filled pores inside the unit block [3L, 4L] x [0, L].

    The pore sizes follow from closed-form areas so all variants share the
    same porosity: 3x3 closed circular pores (1), three slanted channels
    through the block (2), three straight slots through the block (3).
    """
    x0 = 3 * L
    if variant == 1:
        r = L * math.sqrt(porosity / (9 * math.pi))
        return [Disc(x0 + (i + 0.5) * L / 3, (j + 0.5) * L / 3, r)
                for j in range(3) for i in range(3)]
    if variant == 2:
        theta = math.radians(20.0)
        width = porosity * L * math.cos(theta) / 3      # perpendicular width
        d = (math.sin(theta), -math.cos(theta))         # normal of the channel axis
        pores = []
        for k in (1, 2, 3):
            cx, cy = x0 + 0.5 * L, k * L / 4
            pores.append(Intersection((
                HalfPlane(cx - 0.5 * width * d[0], cy - 0.5 * width * d[1], d[0], d[1]),
                HalfPlane(cx + 0.5 * width * d[0], cy + 0.5 * width * d[1], -d[0], -d[1]),
            )))
        return pores
    if variant == 3:
        hs = porosity * L / 3
        return [Rectangle(x0 - L, k * L / 4 - hs / 2, x0 + 2 * L, k * L / 4 + hs / 2)
                for k in (1, 2, 3)]
    raise ValueError(f"unknown variant {variant!r}")


def tube_geometry(variant, L=0.05, porosity=TUBE_POROSITY):
    block = Rectangle(3 * L, 0.0, 4 * L, L)
    pores = _tube_pores(variant, L, porosity)
    return Intersection((block, Complement(Union(tuple(pores)))))


def build_impedance_tube(variant: int) -> ScenarioConfig:
    if variant not in (1, 2, 3):
        raise ValueError(f"unknown variant {variant!r}")
    L = 0.05
    h = L / 60
    fluid = GridSpec((0.0, 0.0), (420, 60), (h, h), 2, "trunk")
    structure = GridSpec((3 * L, 0.0), (60, 60), (h, h), 2, "trunk")
    obs = []
    for group, x, prefix in (("sender", 2.5 * L, "s"), ("receiver", 4.5 * L, "r")):
        for k in range(1, 6):
            obs.append(ObserverSpec(f"{prefix}{k}", "fluid-pressure", x, k * L / 6, group))
    return ScenarioConfig(
        name=f"tube-v{variant}", length=L, geometry=tube_geometry(variant, L),
        structure_grid=structure, fluid_grid=fluid, material=default_material(),
        excitation=ExcitationSpec("fluid", "left", (-1.0,)),
        observers=tuple(obs), dt=1e-8, duration=2e-3, scheme=CENTRAL,
        depth=6, n_gp=3, dirichlet_structure=("bottom", "top"))


PRESETS = {
    "benchmark": build_benchmark,
    "tube-v1": lambda: build_impedance_tube(1),
    "tube-v2": lambda: build_impedance_tube(2),
    "tube-v3": lambda: build_impedance_tube(3),
}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def coarsen(cfg: ScenarioConfig, factor: int) -> ScenarioConfig:
    """Same scenario on grids with ``factor`` times larger cells."""
    def grid(g):
        nx, ny = g.cells
        if nx % factor or ny % factor:
            raise ValueError(f"grid {g.cells} not divisible by {factor}")
        return replace(g, cells=(nx // factor, ny // factor),
                       cell_size=(g.cell_size[0] * factor, g.cell_size[1] * factor))
    return replace(cfg, structure_grid=grid(cfg.structure_grid), fluid_grid=grid(cfg.fluid_grid))


# ---------------------------------------------------------------------------
# reflectance / transmittance evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    label: str
    distance: float      # in units of L
    description: str


EVENTS = (
    Event("A", 2.5, "wave front arrives at sender observers"),
    Event("B", 3.5, "reflected front arrives at sender observers"),
    Event("C", 4.5, "transmitted front arrives at receiver observers"),
    Event("D", 8.5, "twice reflected front arrives at sender observers"),
    Event("E", 9.5, "three times reflected front arrives at sender observers"),
    Event("F", 9.5, "reflected transmitted front arrives at receiver observers"),
)


@dataclass(frozen=True)
class EventTimeline:
    c: float
    length: float
    events: tuple = EVENTS

    def time(self, label):
        for e in self.events:
            if e.label == label:
                return e.distance * self.length / self.c
        raise KeyError(label)

    def rows(self):
        return [(e.label, self.time(e.label), e.distance) for e in self.events]


def event_window_attribution(timeline: EventTimeline):
    """Windows (start, end) in seconds: reflectance B->D, transmittance C->F."""
    return {"reflectance": (timeline.time("B"), timeline.time("D")),
            "transmittance": (timeline.time("C"), timeline.time("F"))}


def cumulative_measure(samples):
    """sqrt of the running sum over time of the sum of squares over observers."""
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    return np.sqrt(np.cumsum((s * s).sum(axis=1)))


def compute_rt_measures(records, up_to_step=None):
    """(P_ref, P_tra) up to ``up_to_step`` (sample index, default: all),
    plus the cumulative series of both."""
    ref = cumulative_measure(records.group("sender"))
    tra = cumulative_measure(records.group("receiver"))
    k = len(ref) - 1 if up_to_step is None else up_to_step
    return ref[k] if len(ref) else 0.0, tra[k] if len(tra) else 0.0, ref, tra


def value_at(times, series, t):
    """Series value at the last sample not later than ``t``."""
    k = int(np.searchsorted(times, t * (1 + 1e-12), side="right")) - 1
    return float(series[max(k, 0)])


def windowed_increments(times, p_ref, p_tra, timeline: EventTimeline):
    w = event_window_attribution(timeline)
    r0, r1 = w["reflectance"]
    t0, t1 = w["transmittance"]
    return (value_at(times, p_ref, r1) - value_at(times, p_ref, r0),
            value_at(times, p_tra, t1) - value_at(times, p_tra, t0))


def porosity(cfg: ScenarioConfig, depth=10):
    """Pore fraction of the structure grid area, via indicator quadrature."""
    from .discretization import CellGrid, FLUID, build_quadrature
    g = cfg.structure_grid
    grid = CellGrid(g.origin, g.cell_size, g.cells, 1)
    q = build_quadrature(grid, cfg.geometry, FLUID, depth=depth, n_gp=2, alpha_min=0.0)
    return q.total() / (grid.n_total_cells * grid.cell_area)
