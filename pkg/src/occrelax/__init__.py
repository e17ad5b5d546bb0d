"""Occupation-measure relaxations of variational problems, solved as linear programs.

Modules: ``core`` (problems and builtins), ``expr`` (field expressions),
``measure`` (grids and gridded measures), ``lp`` (simplex solver),
``relax`` (the relaxed LP), ``sheets`` (codimension-one decomposition),
``gapx`` (the two-dimensional gap counterexample) and ``cli``.
"""

__version__ = "0.1.0"

from .core import *  # noqa: F401,F403
from .core import __all__ as _core_all
from .measure import (Grid, GriddedMeasure, integrate, integrate_boundary, occupation_lift, lift_values,
                      weak_residual, projection_profile, profile_is_constant, centroid, concentrate,
                      write_measure_csv, read_measure_csv)
from .basis import TestBasis
from .lp import LinearProgram, LpSolution, solve, certificate_ok, dump_lp, load_lp
from .relax import (RelaxationResult, RelaxationError, ClassicalViolation, grid_for, assemble,
                    solve_relaxation, classical_value, objective_of)
from .sheets import (density, extract_sheets, check_superposition, recover_classical, two_curve_measure,
                     DensityField, SheetFamily, RecoveryReport)
from .kernels import BACKEND

__all__ = list(_core_all) + [
    "Grid", "GriddedMeasure", "integrate", "integrate_boundary", "occupation_lift", "lift_values",
    "weak_residual", "projection_profile", "profile_is_constant", "centroid", "concentrate",
    "write_measure_csv", "read_measure_csv", "TestBasis", "LinearProgram", "LpSolution", "solve",
    "certificate_ok", "dump_lp", "load_lp", "RelaxationResult", "RelaxationError", "ClassicalViolation",
    "grid_for", "assemble", "solve_relaxation", "classical_value", "objective_of", "density",
    "extract_sheets", "check_superposition", "recover_classical", "two_curve_measure", "DensityField",
    "SheetFamily", "RecoveryReport", "BACKEND", "__version__",
]
