"""Implicit Euler-Maruyama solver for the 2D periodic stochastic Navier-Stokes
equations with multiplicative noise, on a Fourier spectral-Galerkin core."""

from .noise import AssumptionReport, NoiseKind, NoiseModel, eval_noise, verify_assumptions
from .solver import (PicardNonconvergence, SolverParams, StepResult, TrajectoryRecord, em_step,
                     recover_pressure, reference_trajectory, run_trajectory)
from .spectral import (ConfigurationError, GridSpec, SpectralField, VectorField, convective, dealias, divergence,
                       from_physical, gradient, inner, laplacian, leray_project, norm, taylor_green, to_physical,
                       trilinear)
from .wiener import WienerPath, coarsen, sample_path, spawn_sample_stream

__version__ = "0.1.0"
