"""Run configuration: JSON loading with line-anchored errors, --set overrides, scenario assembly"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from models.schemas import (
    BetaSection,
    ControllerASection,
    GammaConfig,
    HorizontalGainsConfig,
    PDGainsConfig,
    RunConfig,
    ScenarioSection,
)
from services.controller_service import ControllerAConfig, ControllerBConfig
from services.dynamics_service import QuadState
from services.errors import ConfigError, InvalidInputError
from services.gain_service import (
    GammaSet,
    KVector,
    PDGains,
    gamma_from_family,
    k_from_alpha,
    kvector_from_polynomial,
    pd_gains_from_poles,
    poles_from_pairs,
    synthesize_alpha_chain,
)
from services.normal_form_service import BetaBound
from services.simulation_service import Scenario

logger = logging.getLogger(__name__)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(tree: Dict, overrides: Sequence[str]) -> Dict:
    """Apply `dotted.path=value` assignments in order; values are JSON literals or bare strings"""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, raw = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"override {item!r} has an empty path")
        node: Any = tree
        for key in keys[:-1]:
            if isinstance(node, list):
                node = node[_list_index(item, node, key)]
            else:
                if not isinstance(node.get(key, {}), (dict, list)):
                    raise ConfigError(f"override {item!r}: {key!r} is not a section")
                node = node.setdefault(key, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError(f"override {item!r}: {key!r} is not a section")
        last = keys[-1]
        if isinstance(node, list):
            node[_list_index(item, node, last)] = _parse_value(raw)
        else:
            node[last] = _parse_value(raw)
        logger.debug(f"Override {path} = {raw}")
    return tree


def _list_index(item: str, node: List, key: str) -> int:
    try:
        index = int(key)
    except ValueError:
        raise ConfigError(f"override {item!r}: {key!r} is not a list index") from None
    if not -len(node) <= index < len(node):
        raise ConfigError(f"override {item!r}: index {index} out of range for a list of {len(node)}")
    return index


def _line_of(text: str, loc: Tuple[Any, ...]) -> Optional[int]:
    """1-based line of the deepest key of `loc` found in order in the raw text"""
    pos, line = 0, None
    for key in loc:
        if not isinstance(key, str):
            continue
        match = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, pos)
        if match is None:
            continue
        pos = match.end()
        line = text.count("\n", 0, match.start()) + 1
    return line


def _format_validation(error: ValidationError, text: str, source: str, overridden: List[str]) -> str:
    lines = []
    for item in error.errors():
        loc = item["loc"]
        dotted = ".".join(str(k) for k in loc if not (isinstance(k, str) and k in ("A", "B")))
        where = "override" if dotted and any(o == dotted or o.startswith(dotted + ".") for o in overridden) else None
        if where is None:
            line = _line_of(text, loc)
            where = f"line {line}" if line else "top level"
        message = item["msg"].removeprefix("Value error, ")
        lines.append(f"{source}: {where}: {dotted or '<root>'}: {message}")
    return "\n".join(lines)


def build_pd_gains(cfg: PDGainsConfig, allow_zero: bool = False) -> PDGains:
    if cfg.k1 is not None:
        return PDGains(k1=np.array(cfg.k1, dtype=float), k2=np.array(cfg.k2, dtype=float), allow_zero=allow_zero)
    return pd_gains_from_poles(poles_from_pairs(cfg.altitude_poles), poles_from_pairs(cfg.yaw_poles))


def build_gamma(cfg: GammaConfig) -> GammaSet:
    return gamma_from_family(
        cfg.family,
        omega=cfg.omega,
        poles=poles_from_pairs(cfg.poles) if cfg.poles is not None else None,
        values=cfg.values,
    )


def build_beta(cfg: BetaSection) -> BetaBound:
    if cfg.alpha_sat is not None:
        return BetaBound.from_saturation(cfg.alpha_sat)
    return BetaBound(beta_min=cfg.beta_min, beta_max=cfg.beta_max)


def build_horizontal_gains(cfg: HorizontalGainsConfig, alpha_sat: float, allow_zero: bool = False) -> KVector:
    if cfg.k is not None:
        return KVector.from_array(cfg.k, allow_zero=allow_zero)
    if cfg.family is not None:
        return kvector_from_polynomial(gamma_from_family(cfg.family, omega=cfg.omega))
    if cfg.poles is not None:
        return kvector_from_polynomial(gamma_from_family("modal", poles=poles_from_pairs(cfg.poles)))
    chain = synthesize_alpha_chain(BetaBound.from_saturation(alpha_sat),
                                   alpha1=cfg.backstepping.alpha1, growth=cfg.backstepping.growth)
    return k_from_alpha(chain)


def _controller_a(cfg: ControllerASection) -> ControllerAConfig:
    allow = cfg.allow_zero_gains
    k_x = build_horizontal_gains(cfg.horizontal, cfg.alpha_sat, allow)
    k_y = k_x if cfg.horizontal_y is None else build_horizontal_gains(cfg.horizontal_y, cfg.alpha_sat, allow)
    return ControllerAConfig(pd=build_pd_gains(cfg.pd, allow), k_x=k_x, k_y=k_y, alpha_sat=cfg.alpha_sat)


def build_scenario(section: ScenarioSection) -> Scenario:
    """Resolve gain directives into numeric gains; SynthesisError propagates unchanged"""
    init = section.initial
    initial = QuadState.from_array(list(init.pos) + list(init.vel) + list(init.angles) + list(init.rates))
    ctrl = section.controller
    try:
        if isinstance(ctrl, ControllerASection):
            controller = _controller_a(ctrl)
        else:
            controller = ControllerBConfig(gamma=build_gamma(ctrl.gamma),
                                           u12_0=np.array(ctrl.u12_0, dtype=float),
                                           rho12_0=np.array(ctrl.rho12_0, dtype=float))
        return Scenario(
            params=section.params,
            initial=initial,
            target=section.target,
            controller=controller,
            dt=section.dt,
            horizon=section.horizon,
            friction_enabled=section.friction_enabled,
            nonneg_thrust=section.nonneg_thrust,
            fault_policy=section.fault_policy,
            seed=section.seed,
            log_stacks=section.log_stacks,
            convergence_tol=section.convergence_tol,
        )
    except InvalidInputError as e:
        raise ConfigError(f"scenario: {e}") from e


class ConfigService:
    """Parses run configuration files into validated models"""

    def parse(self, text: str, source: str = "<config>", overrides: Sequence[str] = ()) -> RunConfig:
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{source}: line {e.lineno}, column {e.colno}: {e.msg}") from e
        if not isinstance(tree, dict):
            raise ConfigError(f"{source}: line 1: top level must be a JSON object")
        overridden = [o.split("=", 1)[0].strip() for o in overrides]
        apply_overrides(tree, overrides)
        try:
            return RunConfig.model_validate(tree)
        except ValidationError as e:
            raise ConfigError(_format_validation(e, text, source, overridden)) from e

    def load(self, path: Path, overrides: Sequence[str] = ()) -> RunConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config: {e.strerror}") from e
        config = self.parse(text, str(path), overrides)
        logger.info(f"Loaded config {path} (schema_version {config.schema_version})")
        return config

    def dump(self, config: RunConfig) -> Dict:
        """JSON tree that parses back to an equal RunConfig"""
        return config.model_dump(mode="json")

    def dumps(self, config: RunConfig) -> str:
        return json.dumps(self.dump(config), indent=2)


# Singleton instance
_config_service: Optional[ConfigService] = None


def get_config_service() -> ConfigService:
    """Get singleton config service"""
    global _config_service
    if _config_service is None:
        _config_service = ConfigService()
    return _config_service
