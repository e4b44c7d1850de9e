import json
from pathlib import Path

import numpy as np
import pytest

from data.presets import controller_a_section, controller_b_section, offset_scenario, run_config_tree
from models.schemas import QuadParams
from services.config_service import build_scenario


@pytest.fixture
def params() -> QuadParams:
    return QuadParams()


@pytest.fixture
def unit_mixer_params() -> QuadParams:
    """C/J_phi = ell/J_psi = ell/J_theta = 1, m = 1"""
    return QuadParams(m=1.0, C=0.02, J_phi=0.02, ell=0.01, J_psi=0.01, J_theta=0.01)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def offset_a_section():
    return offset_scenario(controller_a_section())


@pytest.fixture
def offset_b_section():
    return offset_scenario(controller_b_section())


@pytest.fixture
def offset_a(offset_a_section):
    return build_scenario(offset_a_section)


@pytest.fixture
def offset_b(offset_b_section):
    return build_scenario(offset_b_section)


@pytest.fixture
def write_config(tmp_path):
    """Write a config tree (or raw text) to tmp_path and return its path"""
    def _write(tree, name: str = "run.json") -> Path:
        path = tmp_path / name
        text = tree if isinstance(tree, str) else json.dumps(tree, indent=2)
        path.write_text(text, encoding="utf-8")
        return path
    return _write


@pytest.fixture
def hover_tree():
    """Controller A hovering exactly at its target"""
    tree = run_config_tree(offset_scenario(controller_a_section(), horizon=0.5))
    tree["scenario"]["initial"] = {"pos": [0.0, 0.0, 0.0]}
    return tree
