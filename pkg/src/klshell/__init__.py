"""Mixed-hybrid higher-order finite elements for Kirchhoff-Love shells.

The moment tensor and the displacement field are both approximated with
continuous-in-element Lagrange polynomials; inter-element continuity of the
normal bending moment is enforced weakly by an edge multiplier (the
tangential boundary rotation), so moments can be condensed element by
element and the global system stays symmetric positive definite.
"""

from .assembly import AssemblyOptions
from .benchmarks import CASE_NAMES, ArcAnalytic, BenchmarkCase, arc_analytic, convergence_study, make_case
from .errors import (ConditioningError, GeometryError, MeshError, ProbeError, ShellError, SolverError,
                     SpecificationError)
from .geometry import Chart
from .mechanics import MaterialParams
from .mesh import BcSpec, CornerBC, Patch, SegmentBC, build_structured_mesh
from .solver import Solution, solve_shell

__version__ = "0.1.0"

__all__ = [
    "AssemblyOptions", "ArcAnalytic", "BcSpec", "BenchmarkCase", "CASE_NAMES", "Chart", "ConditioningError",
    "CornerBC", "GeometryError", "MaterialParams", "MeshError", "Patch", "ProbeError", "SegmentBC", "ShellError",
    "Solution", "SolverError", "SpecificationError", "arc_analytic", "build_structured_mesh", "convergence_study",
    "make_case", "solve_shell",
]
