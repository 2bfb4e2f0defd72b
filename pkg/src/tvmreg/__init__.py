"""Simultaneous inference for time-varying coefficient M-regression.

Estimation aggregates bias-corrected local linear M-estimates into the
cumulative regression function; a self-convolved multiplier bootstrap
calibrates exact-function, lack-of-fit and qualitative (shape) tests.
"""

from .data import Dataset
from .kernels import EPANECHNIKOV, Kernel, eval_jackknife_kernel, eval_kernel, second_difference_mass
from .losses import (
    ExpectileLoss,
    HuberLoss,
    LossSpec,
    PowerLoss,
    QuantileLoss,
    SquaredLoss,
    loss_from_name,
    loss_psi,
    loss_value,
    solve_weighted_mreg,
)
from .local_fit import BetaCurve, LocalFit, estimate_curve, jackknife_estimate, local_linear_fit
from .crf import CrfPath, aggregate_crf, contrast_matrix, integrate_reference, interpolate_crf
from .bootstrap import (
    BootstrapPath,
    MaxDistribution,
    SecondDifferences,
    critical_value,
    draw_bootstrap_path,
    draw_bootstrap_paths,
    max_distribution,
    second_differences,
)
from .simulation import MCResult, ScenarioSpec, gen_dataset, mc_rejection_rate, power_curve

__version__ = "0.1.0"
