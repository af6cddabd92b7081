"""Non-Markovian quantum state diffusion simulation engine.

Stochastic propagator-pair trajectories (linear and norm-preserving) driven
by exactly-generated colored noise, Monte Carlo reduction into density
matrices with error bars, sum-of-exponentials kernel fitting, and
deterministic pseudomode/Markovian oracles.
"""

from .dynamics_linear import (LinearSystem, LinearTrajectoryState,
                              TrajectoryResult, evolve_trajectory_linear,
                              linear_rhs)
from .dynamics_nonlinear import (NonlinearSystem, NonlinearTrajectoryState,
                                 evolve_trajectory_nonlinear, expectation,
                                 nonlinear_rhs)
from .ensemble import (DensityEstimate, EnsembleConfig, EnsembleError,
                       EnsembleResult, SurvivalSeries, TrajectoryRecord,
                       dark_period_scan, observable_series, run_ensemble,
                       survival_moments)
from .integrator import (IntegrationFailure, IntegratorConfig, integrate,
                         step)
from .kernels import (BandGapParams, ExpTerm, FitResult, MemoryKernel,
                      eval_bandgap_kernel, eval_exp_kernel, fit_exp_sum,
                      kernel_tau, load_kernel, load_samples_csv,
                      paired_kernel, save_kernel, save_samples_csv)
from .model import Channel, SubsystemModel
from .noise import (NoiseGenerator, NoiseSample, empirical_correlation,
                    make_generators, sample_noise_paths, trajectory_stream)
from .operators import (dagger, double_well_hamiltonian, hermite_functions,
                        identity, is_hermitian, ladder_operators,
                        position_density, sigma_x, sigma_y, sigma_z)
from .oracles import (CutoffConvergenceError, PseudomodeConfig,
                      dense_diagonalize, markovian_reference,
                      pseudomode_reference)
from .presets import (BANDGAP_PAIR_ROWS, DoubleWellParams, PresetRun,
                      ThreeLevelParams, bandgap_fit_kernel, build_preset,
                      ion_surrogate_kernel, lorentzian_kernel, preset_run,
                      weighted_pair_state)

__version__ = "0.1.0"
