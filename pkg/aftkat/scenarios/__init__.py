"""Simulation scenario registry; importing this package registers every scenario."""

from .base_scenario import BaseScenario
from .scenario_factory import ScenarioFactory, register_scenario
from . import cox, latent_het, no_het, observed_het  # noqa: F401  (registration)

__all__ = ["BaseScenario", "ScenarioFactory", "register_scenario"]
