"""Stochastic approximation and zeroth-order SGD under heavy-tailed noise.

Subpackages: noise models and streams, step-size schedules, certified
problems, the SA and zeroth-order SGD engines, the damped-average (GSLLN)
empirical harness with deterministic lemma oracles, analytic condition
checkers, and an experiment runner with a CLI.
"""

from . import conditions, experiment, gslln, noise, problems, sa_engine, schedules, sgd_engine
from .noise import (
    Family,
    MomentVerdict,
    NoiseModel,
    NoiseStream,
    log_moment,
    moment_envelope,
    next_sa_noise,
    next_sgd_noise_pair,
)
from .problems import (
    SAProblem,
    SGDProblem,
    builtin_contraction,
    builtin_diagonal_quadratic_sgd,
    builtin_quadratic,
    builtin_quartic_sgd,
    verify_contraction,
    verify_difference_bound,
)
from .schedules import (
    IncrementSchedule,
    Multiplier,
    Schedule,
    check_kwb_conditions,
    check_rm_conditions,
    eval_multiplier,
)
from .sa_engine import RecordPolicy, SARunConfig, Trajectory, multiplier_audit, sa_run, sa_step
from .sgd_engine import MaskPolicy, SGDRunConfig, mask_divergence_audit, sgd_run, sgd_step
from .gslln import (
    GsllnTestSpec,
    ZetaPolicy,
    gslln_empirical_test,
    gslln_step,
    kronecker_oracle,
    log_inequality_check,
    partition_of_unity_residual,
)
from .conditions import (
    ConditionReport,
    TruncationRule,
    TruncationScheme,
    check_sa_conditions,
    check_sgd_conditions,
    check_truncation_conditions,
)
from .experiment import ExperimentConfig, parse_config, run_experiment, summarize

__version__ = "0.1.0"
