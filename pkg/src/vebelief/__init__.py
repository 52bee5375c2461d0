"""Vaccine efficacy estimands under broken blinding.

Discrete structural causal models over treatment, message, belief, side
effects and outcome; exact counterfactual estimands; trial simulation;
plug-in, IPW and outcome-regression estimators; blinding diagnostics.
"""

from .dataset import TrialDataset, check_trial_data, read_csv, read_stacked_csv
from .diagnostics import BlindingTestResult, PositivityAudit, blinding_test, positivity_audit
from .estimands import (
    Decomposition,
    EstimandReport,
    conditional_ve,
    decompose_total,
    estimand_report,
    identification_formula,
    ve,
    ve_behavioral,
    ve_curve,
    ve_minus1_closed_form,
    ve_total,
)
from .estimators import (
    ConditionalVE,
    EstimateResult,
    IPWMean,
    NaiveVE,
    OutcomeRegressionMean,
    PluginMean,
    VaccineEfficacy,
    bootstrap,
)
from .exceptions import (
    ConfigError,
    DataSchemaError,
    DesignError,
    EstimationError,
    NotAssessableError,
    ParameterDomainError,
    PositivityError,
    UndefinedEstimandError,
    UnstableBootstrapError,
    VEBeliefError,
)
from .logistic import IRLSLogisticRegression
from .scm import (
    DiscreteScm,
    Dgm2Params,
    Intervention,
    build_dgm1,
    build_dgm2,
    check_dismissibility,
    joint_distribution,
    potential_outcome_mean,
)
from .simulate import McSummary, run_mc, sample_dataset

__version__ = "0.1.0"
