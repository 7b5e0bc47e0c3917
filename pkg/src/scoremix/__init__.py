"""Desk-scale diffusion engine with score-composition operators.

The package trains small denoising diffusion models on synthetic concept
datasets and composes concept-conditioned score fields at inference time
with conjunction (AND) and negation (NOT) operators. Exact counterparts
(closed-form Gaussian fields, a brute-force grid oracle, and a
natural-parameter composition target) make every operator quantitatively
checkable, and an evaluation harness scores generated samples with
binary concept verifiers and the energy distance.
"""

__version__ = "0.1.0"

from .compose import CompositionSpec, Term, composed_epsilon, conjunction_epsilon, negation_epsilon
from .schedule import NoiseSchedule, build_schedule, marginal_coeffs, posterior_sigma
from .scorefield import (
    AnalyticGaussianField,
    ConceptLabel,
    GaussianConceptSpec,
    GridOracleField,
    epsilon_of_gaussian,
    field_eval,
)

__all__ = [
    "__version__",
    "AnalyticGaussianField",
    "CompositionSpec",
    "ConceptLabel",
    "GaussianConceptSpec",
    "GridOracleField",
    "NoiseSchedule",
    "Term",
    "build_schedule",
    "composed_epsilon",
    "conjunction_epsilon",
    "epsilon_of_gaussian",
    "field_eval",
    "marginal_coeffs",
    "negation_epsilon",
    "posterior_sigma",
]
