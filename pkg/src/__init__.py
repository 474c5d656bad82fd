"""
Rough path recursion laboratory - Source Package

Discrete noise signatures (rough step functions), the recursion they drive,
lifts to continuous rough paths, rough and modified differential equation
solvers, noise models with their diffusion limits, and statistical checks.

Modules:
    - tensor_algebra: Level-2 increments, Chen product, group/defect split
    - rough_step: Partitions, increment streams, step functions, Hoelder norms
    - lift: Geodesic lift of step functions
    - vector_fields: Vector field bundles and the derived field
    - recursion_engine: The recursion on single paths and batches
    - rde_solver: Davie solver, modified equation, approximation certificate
    - noise_models: Noise generators, analytic limits, nu estimation
    - diagnostics: Moment scaling, tightness, KS distances, rate fits
    - experiment_config / scenarios: Config validation and scenario runner
    - file_exporter: CSV and JSON artifacts
    - logger: Logging setup
"""

__version__ = "0.1.0"
__description__ = "Rough path recursion laboratory"

# Import main classes for easy access
from .rough_step import Partition, IncrementStream, RoughStepFunction
from .lift import LiftedRoughPath
from .vector_fields import VectorFieldBundle, get_field
from .noise_models import NoiseSpec
from .scenarios import ExperimentRunner
from .file_exporter import FileExporter
from .logger import setup_logger

__all__ = [
    'Partition',
    'IncrementStream',
    'RoughStepFunction',
    'LiftedRoughPath',
    'VectorFieldBundle',
    'get_field',
    'NoiseSpec',
    'ExperimentRunner',
    'FileExporter',
    'setup_logger',
]
