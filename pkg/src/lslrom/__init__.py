"""Lippmann-Schwinger-Lanczos inversion of monostatic wave data.

Per-source reduced order models are built from transfer data alone, turned
into approximate internal wavefields and used in a time-domain
Lippmann-Schwinger system for the reflectivity.
"""
from importlib import resources

from .exceptions import (CFLViolation, ConfigurationError, DataInconsistencyError,
                         DiscretizationError)
from .wave_sim import (Grid, PulseSpec, SnapshotSet, SymmetricOperator, TransferSeries,
                       assemble_operator, build_grid, default_tau, propagate_leapfrog,
                       propagate_spectral, record_transfer, source_pulse, substeps_for_cfl)
from .rom import (CholeskyFactor, InternalSnapshotSet, MassMatrix, cholesky_upper,
                  internal_solutions, mass_from_mimo, mass_from_siso, orthogonalized_basis,
                  rom_internal_solutions, spectral_repair)
from .lsl_inversion import (KernelSystem, ReflectivityImage, assemble_rows, misfit,
                            rhs_vector, solve_reflectivity)
from .config import ExperimentConfig, load_config
from .experiments import (MetricsReport, compare_images, export_raster, radial_average,
                          run_experiment)

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path of a bundled experiment configuration, e.g. ``"monostatic_2d.toml"``."""
    return resources.files(__package__) / "fixtures" / name
