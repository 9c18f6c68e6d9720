"""Kernel envelope regression: envelope-projected kernel ridge fits for multivariate responses."""

from .data import DataSet, InputError, read_dataset
from .envelope import EnvelopeObjectiveInputs, GrassmannSolution, envelope_objective, estimate_envelope
from .kenv import (
    ConvergenceWarning,
    KenvModel,
    LambdaPath,
    kenv_fit,
    kenv_fit_fixed_basis,
    kenv_path,
    kenv_predict,
    krr_as_kenv,
    load_model,
    save_model,
)
from .kernels import GramMatrix, KernelFamily, KernelSpec, gram, kernel_matrix, kernel_row
from .krr import KrrModel, krr_fit, krr_predict
from .linalg import CovEstimates, EnvelopeBasis
from .risk import RiskReport, analytic_in_sample_risk, monte_carlo_in_sample_risk
from .simulate import (
    SimDraw,
    SimSpec,
    eval_metrics,
    gen_envelope_data,
    model1_spec,
    model2_spec,
    rfg_build,
    rfg_spec,
    scenario_spec,
)
from .tuning import CvConfig, CvReport, cv_search, make_folds, refit

__version__ = "0.1.0"
