"""Numerical toolkit for pointwise Lyapunov exponents, empirical measures and entropy."""
from .systems import CATALOG, DyadicPoint, PhaseSpace, SystemSpec, iterate, make_system, parse_system
from .cocycle import cocycle_along_orbit, lyapunov_report, strong_exponents
from .measures import EmpiricalMeasure, MeasureSet, TestFunctionFamily, dmetric, hausdorff
from .entropy import Partition, entropy_estimate, count_admissible, F_function

__version__ = "0.1.0"
