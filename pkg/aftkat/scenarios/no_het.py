"""Homogeneous marker effects: S1, its small-sample variant and quadratic confounding."""

from typing import Any, Dict

import numpy as np

from ..simgen import (
    SubjectBatch,
    default_covariates,
    draw_maf,
    gen_expression_confounded,
    gen_snps_mvn,
)
from .base_scenario import BaseScenario
from .scenario_factory import register_scenario


@register_scenario("S1_no_het")
class NoHeterogeneityScenario(BaseScenario):
    """``eta1 = sum(beta G) + 0.1 (Z1 + Z2)``, ``eta2 = sum(alpha G) + 0.2 (Z1 + Z2)``.

    The covariates double as sub-population variables for a Gaussian ``H``, so
    ``Rhet`` can be checked for size where no heterogeneity exists.
    """

    default_n = 400
    default_p = 20
    default_effect = 0.08
    cause2_effect = 0.16
    cause1_covariate = 0.1
    cause2_covariate = 0.2
    has_subpopulation = True
    subpop_kernel = "gaussian"
    methods = ("R", "Rhet", "Rc")

    def prepare(self, rng: np.random.Generator) -> Dict[str, Any]:
        return {"maf": draw_maf(self.p, rng)}

    def markers(self, Z: np.ndarray, rng: np.random.Generator, state: Dict[str, Any]) -> np.ndarray:
        return gen_snps_mvn(Z.shape[0], self.p, rng, maf=state["maf"])

    def draw_subjects(self, groups, rng, state) -> SubjectBatch:
        size = groups.size
        Z = default_covariates(size, rng)
        G = self.markers(Z, rng, state)
        zsum = Z.sum(axis=1)
        gsum = G.sum(axis=1)
        eta1 = self.active_effect() * gsum + self.cause1_covariate * zsum
        eta2 = self.cause2_effect * gsum + self.cause2_covariate * zsum
        return SubjectBatch(Z, G, eta1, eta2, groups)

    def subpopulation(self, subjects, rng, state):
        return subjects.Z if self.has_subpopulation else None

    def settings(self):
        result = super().settings()
        result["cause2_effect"] = self.cause2_effect
        return result


@register_scenario("S_small_nohet")
class SmallSampleScenario(NoHeterogeneityScenario):
    default_n = 100
    default_p = 15
    default_effect = 0.1
    cause2_effect = 0.2
    has_subpopulation = False
    subpop_kernel = None
    methods = ("R", "Rc")


@register_scenario("S_confound")
class QuadraticConfoundingScenario(NoHeterogeneityScenario):
    """Expression markers whose mean is a quadratic surface in the covariates."""

    default_effect = 0.03
    cause2_effect = 0.1
    kernel = "gaussian"
    has_subpopulation = False
    subpop_kernel = None
    methods = ("R", "Rc")

    def prepare(self, rng: np.random.Generator) -> Dict[str, Any]:
        return {}

    def markers(self, Z, rng, state):
        return gen_expression_confounded(Z.shape[0], self.p, Z, rng)
