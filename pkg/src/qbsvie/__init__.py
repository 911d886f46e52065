"""Quadratic backward stochastic Volterra integral equations on discrete Brownian drivers."""

__version__ = "0.1.0"

from .bsde import BsdeSolution, SolverError, StepConfig, solve_bsde, solve_bsde_family
from .bsvie import (PartitionScheme, PicardConfig, PicardError, Type1Solution, Type2MSolution,
                    cascaded_partition_scheme, compare_type1, msolution_residual,
                    solve_type1_general, solve_type1_special, solve_type2_msolution)
from .driver import DriverSpec, build_driver
from .generator import Certificate, Generator, catalog, validate_certificate
from .grid import TimeGrid, make_uniform_grid
from .position import Position
from .risk import RiskMeasureSpec, check_axioms, classical_bsde_rho, rho

__all__ = [
    "BsdeSolution", "Certificate", "DriverSpec", "Generator", "PartitionScheme", "PicardConfig",
    "PicardError", "Position", "RiskMeasureSpec", "SolverError", "StepConfig", "TimeGrid",
    "Type1Solution", "Type2MSolution", "build_driver", "cascaded_partition_scheme", "catalog",
    "check_axioms", "classical_bsde_rho", "compare_type1", "make_uniform_grid", "msolution_residual",
    "rho", "solve_bsde", "solve_bsde_family", "solve_type1_general", "solve_type1_special",
    "solve_type2_msolution", "validate_certificate",
]
