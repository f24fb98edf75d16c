"""Relational event models fitted on sampled events and case-control risk sets."""

from remsample.events import Event, NodeUniverse, iter_events, parse_events, write_events
from remsample.network import DecayConfig, PastEventNetwork, decay_to
from remsample.statistics import STAT_NAMES, StatVector, stat_vector
from remsample.sampling import SampleConfig, Stratum, sample_controls, sample_events
from remsample.replay import ObservationTable, replay
from remsample.estimator import (
    FitResult,
    NonIdentifiableError,
    SeparationError,
    StrataDesign,
    fit,
    loglik_grad_hess,
)
from remsample.experiments import (
    DesignSpec,
    covariance_diagnostic,
    density_diagnostic,
    design_cells,
    run_design,
    summarize,
)
from remsample.generator import SimConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "Event",
    "NodeUniverse",
    "iter_events",
    "parse_events",
    "write_events",
    "DecayConfig",
    "PastEventNetwork",
    "decay_to",
    "STAT_NAMES",
    "StatVector",
    "stat_vector",
    "SampleConfig",
    "Stratum",
    "sample_controls",
    "sample_events",
    "ObservationTable",
    "replay",
    "FitResult",
    "NonIdentifiableError",
    "SeparationError",
    "StrataDesign",
    "fit",
    "loglik_grad_hess",
    "DesignSpec",
    "covariance_diagnostic",
    "density_diagnostic",
    "design_cells",
    "run_design",
    "summarize",
    "SimConfig",
    "simulate",
]
