"""Structural causal models, exact inference, effect estimators and adaptive trials."""
from .dsl import ParseError, ScmParseError, SourceSpan, load_scm, parse_scm, serialize_scm
from .exact import DistTable, Query, ate_exact, interventional_query, joint_table, query
from .kernels import BACKEND
from .paths import PathReport, classify_paths, d_separated
from .rng import RngSpec
from .sampling import Dataset, Interval, ancestral_sample, fit_table, rejection_condition
from .scm import (
    REAL,
    Constant,
    Dag,
    Deterministic,
    Discrete,
    DiscreteCpt,
    LinearGaussian,
    Scm,
    do_surgery,
    structure_query,
    validate,
)
from .trial import Environment, Schedule, bias_check, fit_contextual, run_trial

__version__ = "0.1.0"
