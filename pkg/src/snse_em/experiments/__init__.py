"""Monte Carlo convergence studies and probes."""

from .config import StudyConfig
from .gronwall import (GronwallInstance, GronwallResult, GronwallSuite, check_hypothesis, generate_instance,
                       gronwall_check, gronwall_constant, gronwall_suite)
from .probes import (ExpMomentReport, HolderReport, MartingaleReport, StabilityReport, exp_moment_probe,
                     holder_probe, martingale_probe, stability_probe)
from .rates import RateFit, fit_rate
from .sampling import SampleRecord, map_samples, run_sample
from .studies import (ConvergenceTable, StudyFailure, StudyResult, pressure_error_study, run_study,
                      strong_error_study, tables_from_records)

__all__ = [
    "StudyConfig", "GronwallInstance", "GronwallResult", "GronwallSuite", "check_hypothesis", "generate_instance",
    "gronwall_check", "gronwall_constant", "gronwall_suite", "ExpMomentReport", "HolderReport",
    "MartingaleReport", "StabilityReport", "exp_moment_probe", "holder_probe", "martingale_probe",
    "stability_probe", "RateFit", "fit_rate", "SampleRecord", "map_samples", "run_sample", "ConvergenceTable",
    "StudyFailure", "StudyResult", "pressure_error_study", "run_study", "strong_error_study",
    "tables_from_records",
]
