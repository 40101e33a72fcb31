"""Fast periodic superposition sums in a 1D/2D/3D periodic unit cell.

Evaluates the potential of N non-uniform sources (and their infinite lattice
of phase-shifted periodic images) at M observers in O(N log N): a smooth
far-zone part handled on a small shifted grid pair, and a near-zone part
handled by FFT convolution on a dense grid with exact local corrections.
"""
from .errors import (DomainError, KernelCacheError, NotConvergedError,
                     PerisumError, SeparationError, ValidationError,
                     WoodAnomalyError)
from .farzone import FarZonePlan, build_far_plan, eval_far, load_far_kernel, save_far_kernel
from .grids import (SparseInterpOperator, UniformGrid, build_far_grids,
                    build_near_grid, build_operator, interpolate,
                    lagrange_weights, project)
from .model import (ObserverPointSet, Periodicity, PeriodicityConfig,
                    PotentialField, Regime, SolverParams, SourcePointSet,
                    TargetBox, ValidationReport, auto_near_dims, validate_problem)
from .nearzone import (NearZonePlan, NumpyFftProvider, SpectralTransformProvider,
                       build_near_plan, eval_near, grid_green)
from .oracle import OracleReport, eval_direct, eval_direct_farzone, eval_free_space
from .pgf import (FloquetWavenumbers, PgfEvaluator, PgfSample, TruncationPolicy,
                  g0, pgf_far, pgf_image_sum, pgf_lattice, pgf_lattice_trace,
                  pgf_spectral, pgf_spectral_trace)
from .solver import SolvePlan, SolveResult, build_plan, solve
from .special import bessel_k0, hankel2_0, sqrt_nonpos_imag

__version__ = "0.1.0"
