"""Default vehicle, the standard offset scenario and the default gain directives"""

from typing import Dict

from models.schemas import (
    SCHEMA_VERSION,
    ControllerASection,
    ControllerBSection,
    GammaConfig,
    HorizontalGainsConfig,
    InitialState,
    PDGainsConfig,
    QuadParams,
    ScenarioSection,
    Target,
)
from services.errors import ConfigError

DEFAULT_PARAMS = QuadParams()

# 1 m off target on every axis, 0.5 rad of yaw error, at rest
STANDARD_OFFSET = InitialState(pos=(1.0, 1.0, 1.0), angles=(0.5, 0.0, 0.0))
ORIGIN = Target()

DEFAULT_ALPHA_SAT = 0.5
DEFAULT_OMEGA = 1.0


def controller_a_section(alpha_sat: float = DEFAULT_ALPHA_SAT, omega: float = DEFAULT_OMEGA) -> ControllerASection:
    """Double poles at -2 on altitude and yaw, Newton horizontal gains"""
    return ControllerASection(
        kind="A",
        alpha_sat=alpha_sat,
        pd=PDGainsConfig(altitude_poles=[(-2.0, 0.0), (-2.0, 0.0)], yaw_poles=[(-2.0, 0.0), (-2.0, 0.0)]),
        horizontal=HorizontalGainsConfig(family="newton", omega=omega),
    )


def controller_b_section(family: str = "newton", omega: float = DEFAULT_OMEGA) -> ControllerBSection:
    return ControllerBSection(kind="B", gamma=GammaConfig(family=family, omega=omega))


def offset_scenario(controller, horizon: float = 20.0, dt: float = 1e-3, **kwargs) -> ScenarioSection:
    return ScenarioSection(
        params=DEFAULT_PARAMS,
        initial=STANDARD_OFFSET,
        target=ORIGIN,
        controller=controller,
        horizon=horizon,
        dt=dt,
        **kwargs,
    )


def run_config_tree(scenario: ScenarioSection) -> Dict:
    """Config-file tree for a scenario section"""
    return {"schema_version": SCHEMA_VERSION, "scenario": scenario.model_dump(mode="json")}


PRESETS = {
    "offset_a": lambda: offset_scenario(controller_a_section()),
    "offset_b": lambda: offset_scenario(controller_b_section()),
}


def preset_tree(name: str) -> Dict:
    """Config-file tree of a named preset scenario"""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return run_config_tree(PRESETS[name]())
