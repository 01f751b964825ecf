"""Pseudospectral laboratory for Maxwell's equations on a perfectly conducting half-space.

The half-space is represented by a periodic torus that is symmetric under the
reflection of the normal coordinate. Fields are extended oddly or evenly across
the boundary plane, coefficients evenly, and all derivatives are taken with FFTs.
"""

from maxlab.fields import CoefficientSet, FieldState, TorusGrid
from maxlab.norms import NormReport, lq_norm, mixed_norm_accumulate, sobolev_norm

__version__ = "0.1.0"

__all__ = [
    "CoefficientSet",
    "FieldState",
    "NormReport",
    "TorusGrid",
    "lq_norm",
    "mixed_norm_accumulate",
    "sobolev_norm",
    "__version__",
]
