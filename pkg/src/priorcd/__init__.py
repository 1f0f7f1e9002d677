"""Causal structure learning with language-model priors."""
__version__ = "0.1.0"

from .graph import (  # noqa: E402
    DirectedGraph, WeightMatrix, acyclicity_gradient, acyclicity_value, is_acyclic,
    matrix_exponential, threshold,
)
from .metrics import MetricsReport, evaluate  # noqa: E402
from .prior import (  # noqa: E402
    MeanPrior, PriorMatrix, aggregate_mean, assemble_prior, certainty, parse_response,
    random_prior, render_prompt,
)
from .solver import SolverConfig, init_from_prior, preset, solve  # noqa: E402
from .synthetic import (  # noqa: E402
    Dataset, SemSpec, build_motivating_scenario, build_physics_graph, sample_linear_sem,
)
