"""Marker effects that differ across latent sub-populations or genome profiles."""

from typing import Any, Dict, Tuple

import numpy as np

from ..simgen import (
    SubjectBatch,
    default_covariates,
    draw_maf,
    gen_genome_profile,
    gen_snps_mvn,
    uniform_effects,
)
from .base_scenario import BaseScenario
from .scenario_factory import register_scenario

# per-sub-population effect pairs (beta_1k, beta_2k) by setting and p
LATENT2_SETTINGS: Dict[str, Dict[int, Tuple[float, float]]] = {
    "T1": {3: (0.04, 0.04), 5: (0.08, 0.08)},
    "T2": {3: (-0.05, 0.05), 5: (-0.1, 0.1)},
    "T3": {3: (0.0, 0.08), 5: (0.0, 0.12)},
    "T4": {3: (0.03, 0.08), 5: (0.03, 0.1)},
}


class _LatentBase(BaseScenario):
    default_n = 400
    has_subpopulation = True
    subpop_kernel = "gaussian"
    methods = ("R", "Rhet")
    cause1_covariate = 0.1
    cause2_effect = 0.02
    cause2_covariate = 0.2
    noise_sd = 0.5

    def prepare(self, rng):
        return {"maf": draw_maf(self.p, rng)}

    def group_effects(self, state: Dict[str, Any]) -> np.ndarray:
        raise NotImplementedError

    def subject_effects(self, groups: np.ndarray, rng, state) -> np.ndarray:
        return self.group_effects(state)[groups]

    def draw_subjects(self, groups, rng, state) -> SubjectBatch:
        size = groups.size
        Z = default_covariates(size, rng)
        G = gen_snps_mvn(size, self.p, rng, maf=state["maf"])
        effect = self.subject_effects(groups, rng, state)
        gsum = G.sum(axis=1)
        zsum = Z.sum(axis=1)
        eta1 = effect * gsum + self.cause1_covariate * zsum
        eta2 = self.cause2_effect * gsum + self.cause2_covariate * zsum
        return SubjectBatch(Z, G, eta1, eta2, groups, effect=effect)


@register_scenario("S_latent2")
class TwoLatentGroupsScenario(_LatentBase):
    """Two hidden groups inferred through ``X = I(group 1) + 1 + e``."""

    default_p = 5
    groups = 2

    def pair(self) -> Tuple[float, float]:
        if "pair" in self.params:
            return tuple(self.params["pair"])
        setting = self.params.get("setting", "T2")
        table = LATENT2_SETTINGS[setting]
        return table.get(self.p, table[5])

    def group_effects(self, state):
        if not self.alternative:
            return np.zeros(2)
        return np.asarray(self.pair(), dtype=float)

    def subpopulation(self, subjects, rng, state):
        x = (subjects.group == 0).astype(float) + 1.0 + rng.normal(0.0, self.noise_sd, len(subjects))
        return x[:, None]

    def settings(self):
        result = super().settings()
        result["pair"] = list(self.pair()) if self.alternative else [0.0, 0.0]
        return result


@register_scenario("S_latent20")
class TwentyLatentGroupsScenario(_LatentBase):
    """Twenty hidden groups with uniform effects and 25 inferential variables."""

    default_p = 20
    groups = 20
    mean_effect = 0.02
    default_effect = 0.08
    n_features = 25

    def prepare(self, rng):
        state = super().prepare(rng)
        state["group_effects"] = (uniform_effects(self.groups, self.mean_effect, self.effect, rng)
                                  if self.alternative else np.zeros(self.groups))
        # column d of the centers is a permutation of 1..groups
        state["centers"] = np.column_stack([
            rng.permutation(np.arange(1, self.groups + 1)) for _ in range(self.n_features)
        ]).astype(float)
        return state

    def group_effects(self, state):
        return state["group_effects"]

    def subpopulation(self, subjects, rng, state):
        delta = rng.normal(0.0, self.noise_sd, len(subjects))
        return state["centers"][subjects.group] + delta[:, None]

    def settings(self):
        result = super().settings()
        result.update({"mean_effect": self.mean_effect, "sd_effect": self.effect,
                       "features": self.n_features})
        return result


@register_scenario("S_genome_het")
class GenomeProfileScenario(_LatentBase):
    """Per-subject effects; background SNPs correlate subjects with similar effects."""

    default_p = 20
    default_effect = 0.04
    mean_effect = 0.03
    subpop_kernel = "ibs"

    @property
    def background_size(self) -> int:
        return int(self.params.get("background", 1000))

    def subject_effects(self, groups, rng, state):
        if not self.alternative:
            return np.zeros(groups.size)
        return uniform_effects(groups.size, self.mean_effect, self.effect, rng)

    def subpopulation(self, subjects, rng, state):
        if not self.alternative:
            return gen_genome_profile(None, self.effect, self.background_size, rng, n=len(subjects))
        return gen_genome_profile(subjects.effect, self.effect, self.background_size, rng)

    def settings(self):
        result = super().settings()
        result.update({"mean_effect": self.mean_effect, "sd_effect": self.effect,
                       "background": self.background_size})
        return result
