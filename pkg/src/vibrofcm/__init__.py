"""Monolithic elastic/acoustic finite cell solver in two dimensions.

The structure (displacement) and the fluid (velocity potential) are each
discretized on a Cartesian grid of hierarchical high-order cells; the
geometry enters through a level set and an indicator function only.
"""
from __future__ import annotations

from .assembly import CoupledSystem, Material
from .discretization import CellGrid, number_dofs
from .scenarios import ScenarioConfig, preset
from .simulation import build_model, run_model, simulate

__all__ = ["CellGrid", "CoupledSystem", "Material", "ScenarioConfig", "build_model",
           "number_dofs", "preset", "run_model", "simulate"]
__version__ = "0.1.0"
