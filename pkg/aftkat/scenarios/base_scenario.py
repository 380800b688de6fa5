from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Tuple
import logging

import numpy as np

from ..models import SimulationError
from ..simgen import SubjectBatch

logger = logging.getLogger(__name__)


class BaseScenario(ABC):
    """A data-generating recipe: covariates, markers and linear predictors.

    Subclasses set the class-level defaults and implement ``draw_subjects``;
    scenarios with sub-population variables also implement ``subpopulation``.
    """

    default_n: int = 400
    default_p: int = 20
    default_effect: float = 0.0
    groups: int = 1
    hazard_model: str = "aft"
    hazard_scale: Tuple[float, float] = (1.0, 1.0)
    truncation_upper: float = 1.0
    has_subpopulation: bool = False
    kernel: str = "ibs"
    subpop_kernel: Optional[str] = None
    methods: Tuple[str, ...] = ("R", "Rc")

    def __init__(self, name: str, n: Optional[int] = None, p: Optional[int] = None,
                 alternative: bool = False, effect: Optional[float] = None, **params: Any):
        self.name = name
        self.logger = logging.getLogger(f"{__name__}.{name}")
        self.n = int(n if n is not None else self.default_n)
        self.p = int(p if p is not None else self.default_p)
        self.alternative = alternative
        self.effect = float(effect if effect is not None else self.default_effect)
        self.params = dict(params)
        if self.n < self.groups or self.p < 1:
            raise SimulationError(f"invalid size n={self.n}, p={self.p} for scenario {name}")

    def prepare(self, rng: np.random.Generator) -> Dict[str, Any]:
        """Per-dataset draws shared by all subjects (e.g. allele frequencies)."""
        return {}

    @abstractmethod
    def draw_subjects(self, groups: np.ndarray, rng: np.random.Generator,
                      state: Dict[str, Any]) -> SubjectBatch:
        pass

    def subpopulation(self, subjects: SubjectBatch, rng: np.random.Generator,
                      state: Dict[str, Any]) -> Optional[np.ndarray]:
        return subjects.X

    def active_effect(self) -> float:
        return self.effect if self.alternative else 0.0

    def settings(self) -> Dict[str, Any]:
        result = {
            "n": self.n,
            "p": self.p,
            "alternative": self.alternative,
            "effect": self.active_effect(),
            "groups": self.groups,
            "hazard_model": self.hazard_model,
            "kernel": self.kernel,
        }
        if self.subpop_kernel:
            result["subpop_kernel"] = self.subpop_kernel
        result.update(self.params)
        return result

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, n={self.n}, p={self.p}, alternative={self.alternative})"
