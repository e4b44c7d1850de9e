import json
from pathlib import Path

import pytest

from data.presets import PRESETS, controller_b_section, offset_scenario, preset_tree, run_config_tree
from services.config_service import apply_overrides, build_scenario, get_config_service
from services.controller_service import ControllerAConfig, ControllerBConfig
from services.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def service():
    return get_config_service()


def _line_containing(text: str, needle: str) -> int:
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    raise AssertionError(f"{needle!r} not in text")


@pytest.mark.parametrize("name", ["controller_a.json", "controller_a_backstepping.json",
                                  "controller_b.json", "gains.json", "open_loop_fault.json"])
def test_sample_configs_parse(service, name):
    config = service.load(CONFIGS / name)
    assert config.schema_version == 1
    assert config.scenario is not None or config.gains is not None


def test_sample_scenarios_build(service):
    a = build_scenario(service.load(CONFIGS / "controller_a.json").scenario)
    b = build_scenario(service.load(CONFIGS / "controller_b.json").scenario)
    assert isinstance(a.controller, ControllerAConfig)
    assert isinstance(b.controller, ControllerBConfig)
    assert b.uses_compensator and not a.uses_compensator


def test_unknown_key_is_line_anchored(service, hover_tree):
    hover_tree["scenario"]["bogus"] = 1
    text = json.dumps(hover_tree, indent=2)
    with pytest.raises(ConfigError) as exc:
        service.parse(text, "run.json")
    message = str(exc.value)
    assert message.startswith(f"run.json: line {_line_containing(text, 'bogus')}: scenario.bogus:")


def test_alpha_out_of_range_names_the_interval(service, hover_tree):
    hover_tree["scenario"]["controller"]["alpha_sat"] = 1.5
    text = json.dumps(hover_tree, indent=2)
    with pytest.raises(ConfigError) as exc:
        service.parse(text, "run.json")
    message = str(exc.value)
    assert f"line {_line_containing(text, 'alpha_sat')}" in message
    assert "scenario.controller.alpha_sat" in message
    assert "alpha in (0, 1)" in message


def test_json_syntax_error_reports_position(service):
    with pytest.raises(ConfigError, match=r"bad\.json: line 3, column \d+"):
        service.parse('{\n  "schema_version": 1,\n  "scenario": }\n', "bad.json")


def test_top_level_must_be_object(service):
    with pytest.raises(ConfigError, match="JSON object"):
        service.parse("[1, 2]", "list.json")


def test_config_needs_work(service):
    with pytest.raises(ConfigError, match="scenario section"):
        service.parse('{"schema_version": 1}')


def test_missing_file(service, tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        service.load(tmp_path / "absent.json")


def test_overrides_apply_in_order(service, hover_tree):
    text = json.dumps(hover_tree)
    config = service.parse(text, overrides=["scenario.dt=0.002", "scenario.horizon=1",
                                            "scenario.fault_policy=hold", "scenario.dt=0.0005"])
    assert config.scenario.dt == 0.0005
    assert config.scenario.horizon == 1.0
    assert config.scenario.fault_policy == "hold"


def test_override_errors_are_attributed(service, hover_tree):
    with pytest.raises(ConfigError, match=r"override: scenario\.controller\.alpha_sat"):
        service.parse(json.dumps(hover_tree), overrides=["scenario.controller.alpha_sat=2"])


def test_malformed_override(service, hover_tree):
    with pytest.raises(ConfigError, match="path=value"):
        service.parse(json.dumps(hover_tree), overrides=["scenario.dt"])
    with pytest.raises(ConfigError, match="not a section"):
        apply_overrides({"scenario": {"dt": 0.1}}, ["scenario.dt.value=1"])


def test_list_index_override():
    tree = {"scenario": {"initial": {"pos": [1.0, 2.0, 3.0]}}}
    apply_overrides(tree, ["scenario.initial.pos.2=0"])
    assert tree["scenario"]["initial"]["pos"] == [1.0, 2.0, 0]


@pytest.mark.parametrize("override, message", [
    ("scenario.initial.pos.x=1", "not a list index"),
    ("scenario.initial.pos.5=1", "out of range"),
    ("scenario.initial.pos.0.x=1", "not a section"),
])
def test_bad_list_override(override, message):
    tree = {"scenario": {"initial": {"pos": [1.0, 2.0, 3.0]}}}
    with pytest.raises(ConfigError, match=message):
        apply_overrides(tree, [override])


def test_bad_list_override_from_file(service):
    with pytest.raises(ConfigError, match="not a list index"):
        service.load(CONFIGS / "controller_a.json", ["scenario.initial.pos.x=1"])


def test_dump_parses_back(service):
    config = service.parse(json.dumps(run_config_tree(offset_scenario(controller_b_section("butterworth", 2.0)))))
    again = service.parse(service.dumps(config))
    assert again == config


def test_nonpositive_beta_min_rejected(service):
    tree = {"schema_version": 1, "gains": {"beta": {"beta_min": 0.0, "beta_max": 1.5}}}
    with pytest.raises(ConfigError, match="beta_min must be positive"):
        service.parse(json.dumps(tree, indent=2), "gains.json")


def test_beta_interval_must_contain_hover(service):
    tree = {"schema_version": 1, "gains": {"beta": {"beta_min": 1.1, "beta_max": 1.5}}}
    with pytest.raises(ConfigError, match="beta_min <= 1 <= beta_max"):
        service.parse(json.dumps(tree))


def test_horizontal_gains_need_one_source(service, hover_tree):
    hover_tree["scenario"]["controller"]["horizontal"]["k"] = [-1.0, -4.0, -6.0, -4.0]
    with pytest.raises(ConfigError, match="exactly one of"):
        service.parse(json.dumps(hover_tree))


def test_zero_gains_rejected_without_opt_in(service, hover_tree):
    hover_tree["scenario"]["controller"]["pd"] = {"k1": [0.0, 0.0], "k2": [0.0, 0.0]}
    config = service.parse(json.dumps(hover_tree))
    with pytest.raises(ConfigError):
        build_scenario(config.scenario)


def test_initial_tilt_outside_domain(service, hover_tree):
    hover_tree["scenario"]["initial"]["angles"] = [0.0, 1.6, 0.0]
    with pytest.raises(ConfigError, match="scenario.initial.angles"):
        service.parse(json.dumps(hover_tree))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(service, name):
    config = service.parse(json.dumps(preset_tree(name)), name)
    scenario = build_scenario(config.scenario)
    assert scenario.initial.pos.tolist() == [1.0, 1.0, 1.0]


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_tree("hover")
