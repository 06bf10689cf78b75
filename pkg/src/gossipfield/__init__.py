"""Continuous opinion dynamics gossip models: stochastic simulation,
mean-field measure-valued ODE integration, moment analysis, and
concentration experiments."""

from .measures import (AtomicMeasure, Cluster, GridMeasure1D, detect_clusters,
                       moment, variance, wasserstein1_1d, wasserstein1_oracle)
from .kernels import (BoundedConfidence, Constant, EnvAtom, EnvBump, EnvGrid,
                      EnvUniform, FiniteMixture, Gaussian, KernelSpec,
                      env_moment, internal_weight, apply_update)
from .agent_sim import (InitAtoms, InitGrid, InitUniform, SimConfig, SimState,
                        dispersion, run, step)
from .meanfield import SolverConfig, apply_F, integrate, sup_density
from .moments import (MomentParams, MomentTrajectory, f_k, gamma_k,
                      integrate_moments, limit_moments)
from .experiments import (ConcentrationConfig, DeviationTable,
                          run_concentration, tail_rates)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
