"""Proximal incremental subgradient methods with shuffled component orders.

Random reshuffling, single shuffle, incremental gradient and i.i.d.
sampling drive the update ``x_{t+1} = prox(x_t - eta_t g_t)``, together
with exact and Monte-Carlo checks of the quantities its analysis relies on.
"""
from .core import Horizon, LipschitzStats, epoch_index, lipschitz_stats, residual_index
from .diagnostics import (OmegaEstimate, PhiConstant, estimate_omega, fit_rate, lower_bound_check,
                          phi_bound)
from .optimizer import DivergenceError, RunConfig, Trace, run, run_batch, run_seeds
from .problems import (FiniteSumProblem, HardInstance, HingeProblem, LADProblem, hard_instance,
                       hinge_instance, lad_instance, planted_lad, reference_optimum)
from .prox import (L1, AllSpace, Ball, Box, Indicator, SqNorm, SqNormPlusIndicator, Zero,
                   contraction_gap, project, prox_step)
from .samplers import SamplerScheme, SamplerState, SchemeKind, enumerate_schedules, make_sampler
from .stepsize import StepSchedule, gamma_weights, step_at, verify_stepsize_lemma

__version__ = "0.1.0"
