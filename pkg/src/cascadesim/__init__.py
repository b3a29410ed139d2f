"""Einsum cascades: parsing, pass analysis, attention kernels and an accelerator cost model."""

from .counters import OpCounters
from .dsl import CascadeValidationError, DSLSyntaxError, load_cascade, parse_cascade, render_cascade
from .executor import ExecResult, Executor, run_cascade
from .ir import Cascade, CascadeError, ExtentError
from .passes import (
    AnalysisError,
    CycleError,
    FootprintReport,
    PassReport,
    analyze_passes,
    build_dep_graph,
    count_passes,
    min_live_footprint,
)
from .transforms import PatternNotApplicable, transform_defer_multiply, transform_make_iterative
from .validate import Diagnostic, validate

__version__ = "0.1.0"

__all__ = [
    "AnalysisError", "Cascade", "CascadeError", "CascadeValidationError", "CycleError", "DSLSyntaxError",
    "Diagnostic", "ExecResult", "Executor", "ExtentError", "FootprintReport", "OpCounters", "PassReport",
    "PatternNotApplicable", "analyze_passes", "build_dep_graph", "count_passes", "load_cascade",
    "min_live_footprint", "parse_cascade", "render_cascade", "run_cascade", "transform_defer_multiply",
    "transform_make_iterative", "validate",
]
