"""Kernel association tests for left-truncated competing-risks data under an AFT null model."""

__version__ = "0.3.0"

from .models import (  # noqa: E402
    AftkatError,
    Dataset,
    GeneSetMap,
    SurvivalRecord,
)

__all__ = ["__version__", "AftkatError", "Dataset", "GeneSetMap", "SurvivalRecord"]
