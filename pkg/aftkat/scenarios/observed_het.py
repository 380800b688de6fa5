"""Marker effects that differ between two observed sub-populations (sex)."""

import numpy as np

from ..simgen import SubjectBatch, draw_maf, gen_snps_mvn
from .base_scenario import BaseScenario
from .scenario_factory import register_scenario


@register_scenario("S_obs_het")
class ObservedHeterogeneityScenario(BaseScenario):
    """``eta1 = sum((b0 + b1 Z) G) + 0.5 Z``, ``eta2 = sum(0.2 G) + Z`` with ``Z`` = sex."""

    default_n = 400
    default_p = 20
    default_effect = 0.2
    groups = 2
    has_subpopulation = True
    subpop_kernel = "identity"
    methods = ("R", "Rhet")
    main_effect = 0.002
    cause1_covariate = 0.5
    cause2_effect = 0.2
    cause2_covariate = 1.0

    def prepare(self, rng):
        return {"maf": draw_maf(self.p, rng)}

    def draw_subjects(self, groups, rng, state) -> SubjectBatch:
        sex = groups.astype(float)
        G = gen_snps_mvn(groups.size, self.p, rng, maf=state["maf"])
        gsum = G.sum(axis=1)
        b0 = self.main_effect if self.alternative else 0.0
        b1 = self.active_effect()
        eta1 = (b0 + b1 * sex) * gsum + self.cause1_covariate * sex
        eta2 = self.cause2_effect * gsum + self.cause2_covariate * sex
        return SubjectBatch(sex[:, None], G, eta1, eta2, groups, X=sex[:, None])

    def settings(self):
        result = super().settings()
        result["main_effect"] = self.main_effect if self.alternative else 0.0
        return result


@register_scenario("S_small_het")
class SmallSampleHeterogeneityScenario(ObservedHeterogeneityScenario):
    default_n = 200
    default_p = 10
    default_effect = 0.25
    cause2_effect = 0.35
    methods = ("Rhet", "Rchet")
