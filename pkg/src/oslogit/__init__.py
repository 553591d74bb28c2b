"""Optimal subsampling for logistic regression on massive datasets.

The package draws informative subsamples in one or two streaming
passes, fits efficient bias-corrected estimators on them, and verifies
its own efficiency claims by Monte Carlo.
"""

from .asymptotics import (
    MatrixEstimates,
    PropositionReport,
    estimate_matrices,
    loewner_leq,
    verify_propositions,
)
from .designs import CovariateGenerator, generate, make_generator
from .errors import (
    ConfigError,
    DataError,
    DegenerateProbabilityError,
    EstimationError,
    OslogitError,
    SeparationError,
    SingularMatrixError,
    VerificationError,
)
from .estimators import (
    CombinedEstimate,
    PilotEstimate,
    StageEstimate,
    WeightedEstimate,
    attach_variance,
    combine,
    fit_poisson,
    fit_unweighted_replacement,
    fit_weighted_combined,
    fit_weighted_osmac,
    full_data_mle,
    pilot_fit,
    stage_probabilities,
    variance_full,
    variance_simplified,
    weighted_full_oracle,
)
from .ingest import CsvSource, DataSource, InMemorySource, Schema, open_csv, write_csv
from .logistic import (
    FitReport,
    newton_maximize,
    predict_prob,
    sigmoid,
    weighted_hessian,
    weighted_loglik,
    weighted_score,
)
from .probabilities import (
    HChoice,
    ProbabilityVector,
    compute_m_matrix,
    compute_pi_os,
    h_value,
    raw_score,
)
from .sampler import (
    Subsample,
    draw_indexes_with_replacement,
    draw_pilot_indexes,
    gather_sorted,
    pilot_rates_from_prior,
    poisson_scan,
)
from .sim import (
    ExperimentPlan,
    ExperimentResult,
    calibration_table,
    run_experiment,
    timing_benchmark,
)

__version__ = "0.1.0"
