"""Desk-scale face-swap pipeline toolkit: curation, training, blending."""

__version__ = "0.1.0"

from .imaging import SimilarityTransform  # noqa: F401
from .metrics import LossWeights, SsimParams  # noqa: F401
