"""Cox-type cause-specific hazards, for checking robustness of the AFT-based tests."""

from ..simgen import SubjectBatch, default_covariates, draw_maf, gen_snps_mvn
from .base_scenario import BaseScenario
from .scenario_factory import register_scenario


@register_scenario("S_coxgen")
class CoxGeneratedScenario(BaseScenario):
    """``lambda1 = 0.5 (t + t^2) exp(sum(beta G) + 0.05 sum Z)``,
    ``lambda2 = 0.1 (t + t^2) exp(0.2 sum G + 0.15 sum Z)``."""

    default_n = 400
    default_p = 3
    default_effect = 0.1
    hazard_model = "cox"
    hazard_scale = (0.5, 0.1)
    methods = ("R",)
    cause1_covariate = 0.05
    cause2_effect = 0.2
    cause2_covariate = 0.15

    def prepare(self, rng):
        return {"maf": draw_maf(self.p, rng)}

    def draw_subjects(self, groups, rng, state) -> SubjectBatch:
        Z = default_covariates(groups.size, rng)
        G = gen_snps_mvn(groups.size, self.p, rng, maf=state["maf"])
        gsum = G.sum(axis=1)
        zsum = Z.sum(axis=1)
        eta1 = self.active_effect() * gsum + self.cause1_covariate * zsum
        eta2 = self.cause2_effect * gsum + self.cause2_covariate * zsum
        return SubjectBatch(Z, G, eta1, eta2, groups)
