"""Planar Orlicz Minkowski problem for q-torsional rigidity via a Gauss curvature flow."""

from .errors import (
    ConfigurationError,
    ConvexityLost,
    DomainError,
    NumericalError,
    SolverError,
    TorqflowError,
    ValidationError,
)
from .geometry import SupportProfile, disk, ellipse, fourier_body, read_profile_csv, write_profile_csv
from .mesh import MeshTemplate, triangulate
from .orlicz import make_density, make_phi, mixed_rigidity, phi_hat
from .torsion import ball_oracle, rigidity, solve_poisson, solve_torsion
from .flow import FlowConfig, balanced_config, run, step

__version__ = "0.1.0"
