"""Energy-stable finite element schemes for a penalized Ericksen-Leslie model.

Two BDF2 schemes are provided, both on Taylor-Hood P2/P1 elements with a
rotational pressure correction and a scalar auxiliary variable (SAV):
``"pcsav"`` treats the convection implicitly and ``"pcsav-ect"`` moves it
into the explicit SAV part, so the velocity matrix is constant.
"""

from __future__ import annotations

from .errors import ConfigError, ConvergenceError, FirstStepError, InvariantViolation, NematicError
from .mesh import Mesh, build_rect_mesh
from .simulation import RunResult, simulate
from .state import Discretization, FieldState, SimParams

__all__ = [
    "ConfigError", "ConvergenceError", "Discretization", "FieldState", "FirstStepError",
    "InvariantViolation", "Mesh", "NematicError", "RunResult", "SimParams", "build_rect_mesh",
    "simulate",
]
__version__ = "0.1.0"
