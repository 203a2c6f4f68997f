"""Exact moduli of transfer, confidence sets and adaptive transfer algorithms."""

from .discrepancies import (a_discrepancy, covariance_ratio, verify_modulus_bounds, wasserstein1_discrete,
                            y_discrepancy)
from .harness import ExperimentConfig, coverage_report, load_config, parse_config, run_experiment
from .instances import (FiniteInstance, LabeledSample, LinearInstance, load_instance, random_finite_instance,
                        random_linear_instance, sample, toy_t1)
from .lowerbound import (FSpec, HardFamily, build_hard_family, kl_bernoulli, kl_budget, minimax_simulate,
                         verify_membership, vg_code)
from .moduli import (ModulusCurve, pivotal_sharp, pivotal_value, strong_modulus, weak_modulus,
                     weak_modulus_curve, weak_modulus_linear)
from .seeding import derive_seed
from .transfer import TransferParams, TrialReport, run_strong_transfer, run_weak_transfer

__version__ = "0.1.0"

__all__ = [
    "FSpec", "ExperimentConfig", "FiniteInstance", "HardFamily", "LabeledSample", "LinearInstance",
    "ModulusCurve", "TransferParams", "TrialReport", "a_discrepancy", "build_hard_family", "covariance_ratio",
    "coverage_report", "derive_seed", "kl_bernoulli", "kl_budget", "load_config", "load_instance",
    "minimax_simulate", "parse_config", "pivotal_sharp", "pivotal_value", "random_finite_instance",
    "random_linear_instance", "run_experiment", "run_strong_transfer", "run_weak_transfer", "sample",
    "strong_modulus", "toy_t1", "verify_membership", "verify_modulus_bounds", "vg_code",
    "wasserstein1_discrete", "weak_modulus", "weak_modulus_curve", "weak_modulus_linear", "y_discrepancy",
]
