from typing import Any, Dict, List, Type
import logging

from ..models import SimulationError
from .base_scenario import BaseScenario

logger = logging.getLogger(__name__)


class ScenarioFactory:
    _scenarios: Dict[str, Type[BaseScenario]] = {}
    _names: Dict[str, str] = {}

    @classmethod
    def register(cls, name: str, scenario_class: Type[BaseScenario]):
        cls._scenarios[name.lower()] = scenario_class
        cls._names[name.lower()] = name
        logger.debug(f"Registered scenario: {name}")

    @classmethod
    def create(cls, name: str, **kwargs: Any) -> BaseScenario:
        key = name.lower()
        if key not in cls._scenarios:
            raise SimulationError(
                f"unknown scenario '{name}' (available: {', '.join(cls.list_scenarios())})"
            )
        return cls._scenarios[key](cls._names[key], **kwargs)

    @classmethod
    def list_scenarios(cls) -> List[str]:
        return list(cls._names.values())

    @classmethod
    def clear(cls):
        cls._scenarios.clear()
        cls._names.clear()


def register_scenario(name: str):
    def decorator(scenario_class: Type[BaseScenario]):
        ScenarioFactory.register(name, scenario_class)
        return scenario_class
    return decorator
