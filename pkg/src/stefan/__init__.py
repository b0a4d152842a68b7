"""Maxwell-Stefan cross-diffusion: constrained linear algebra, models, a
positivity-preserving finite-volume solver and relative-entropy diagnostics."""

from .errors import StefanError
from .linalg import (
    Composition,
    DiffusionTable,
    bott_duffin,
    build_friction_matrix,
    make_composition,
    spectral_certificate,
)
from .models import ModelSpec, make_model
from .solver import Field, Grid1D, SolverConfig, init_field, run

__version__ = "0.1.0"

__all__ = [
    "Composition",
    "DiffusionTable",
    "Field",
    "Grid1D",
    "ModelSpec",
    "SolverConfig",
    "StefanError",
    "bott_duffin",
    "build_friction_matrix",
    "init_field",
    "make_composition",
    "make_model",
    "run",
    "spectral_certificate",
]
