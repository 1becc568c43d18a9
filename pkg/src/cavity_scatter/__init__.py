"""Adaptive finite-element PML solver for 2-D open-cavity scattering."""
from __future__ import annotations

__version__ = "0.1.0"

from .scenario import Scenario, MaterialRegion, ScenarioError, load_scenario, preset, flat_ground  # noqa: E402
from .mesh import Mesh, initial_mesh, bisect, locate, audit  # noqa: E402
from .fem import DofMap, SolutionField, build_dofmap  # noqa: E402
from .assembly import assemble_pml, assemble_tbc  # noqa: E402
from .solver import solve  # noqa: E402
from .estimator import EstimatorReport, global_estimate  # noqa: E402
from .adapt import AdaptOptions, adapt_solve, mark, select_pml  # noqa: E402
from .postprocess import RcsCurve, backscatter_rcs, far_field  # noqa: E402

__all__ = [
    "Scenario",
    "MaterialRegion",
    "ScenarioError",
    "load_scenario",
    "preset",
    "flat_ground",
    "Mesh",
    "initial_mesh",
    "bisect",
    "locate",
    "audit",
    "DofMap",
    "SolutionField",
    "build_dofmap",
    "assemble_pml",
    "assemble_tbc",
    "solve",
    "EstimatorReport",
    "global_estimate",
    "AdaptOptions",
    "adapt_solve",
    "mark",
    "select_pml",
    "RcsCurve",
    "backscatter_rcs",
    "far_field",
]
