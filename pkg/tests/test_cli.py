import io
import json

import pandas as pd
import pytest

from handlers.command_handler import (
    EXIT_CONFIG,
    EXIT_FAULT,
    EXIT_OK,
    EXIT_SYNTHESIS,
    EXIT_VERIFY,
    CommandHandler,
)
from main import main


@pytest.fixture
def handler():
    return CommandHandler(out=io.StringIO())


def _printed(handler) -> str:
    return handler.out.getvalue()


def _gains_tree(beta_min=0.5, trials=5):
    return {
        "schema_version": 1,
        "gains": {
            "beta": {"beta_min": beta_min, "beta_max": 1.5},
            "trials": trials,
            "pd": {"altitude_poles": [[-2.0, 0.0], [-2.0, 0.0]], "yaw_poles": [[-1.5, 1.0], [-1.5, -1.0]]},
            "families": [{"family": "newton", "omega": 1.0}, {"family": "butterworth", "omega": 2.0}],
        },
    }


def test_simulate_hover(handler, hover_tree, write_config, tmp_path):
    out = tmp_path / "out"
    code = handler.cmd_simulate(write_config(hover_tree), out_dir=out)
    assert code == EXIT_OK
    frame = pd.read_csv(out / "trajectory.csv")
    assert len(frame) == 501
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["converged"] is True
    assert "converged" in _printed(handler)


def test_simulate_overrides(handler, hover_tree, write_config, tmp_path):
    out = tmp_path / "out"
    code = handler.cmd_simulate(write_config(hover_tree), ["scenario.horizon=0.1", "scenario.log_stacks=false"], out)
    assert code == EXIT_OK
    frame = pd.read_csv(out / "trajectory.csv")
    assert len(frame) == 101
    assert "xi11" not in frame.columns


def test_simulate_rejects_alpha_outside_interval(handler, hover_tree, write_config, tmp_path):
    hover_tree["scenario"]["controller"]["alpha_sat"] = 1.5
    code = handler.cmd_simulate(write_config(hover_tree), out_dir=tmp_path)
    assert code == EXIT_CONFIG
    assert "alpha_sat" in _printed(handler)
    assert not (tmp_path / "trajectory.csv").exists()


def test_simulate_missing_config(handler, tmp_path):
    assert handler.cmd_simulate(tmp_path / "absent.json", out_dir=tmp_path) == EXIT_CONFIG


def test_simulate_preset(handler, tmp_path):
    code = handler.cmd_simulate(None, ["scenario.horizon=0.05"], tmp_path, preset="offset_b")
    assert code == EXIT_FAULT
    frame = pd.read_csv(tmp_path / "trajectory.csv")
    assert len(frame) == 51
    assert "det_b4" in frame.columns
    assert "not converged" in _printed(handler)


def test_simulate_needs_config_or_preset(handler, hover_tree, write_config, tmp_path):
    assert handler.cmd_simulate(None, out_dir=tmp_path) == EXIT_CONFIG
    assert handler.cmd_simulate(write_config(hover_tree), out_dir=tmp_path, preset="offset_a") == EXIT_CONFIG


def test_simulate_open_loop_fault(handler, write_config, tmp_path):
    tree = {
        "schema_version": 1,
        "scenario": {
            "initial": {"pos": [0.0, 0.0, 1.0], "rates": [0.0, 0.0, 3.0]},
            "controller": {
                "kind": "A", "allow_zero_gains": True,
                "pd": {"k1": [0.0, 0.0], "k2": [0.0, 0.0]},
                "horizontal": {"k": [0.0, 0.0, 0.0, 0.0]},
            },
            "horizon": 2.0,
        },
    }
    out = tmp_path / "fault"
    code = handler.cmd_simulate(write_config(tree), out_dir=out)
    assert code == EXIT_FAULT
    frame = pd.read_csv(out / "trajectory.csv")
    assert frame["fault"].iloc[-1] == 1
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["fault"] is True
    assert "FAULT" in _printed(handler)


def test_gains_report(handler, write_config, tmp_path):
    code = handler.cmd_gains(write_config(_gains_tree()), out_dir=tmp_path)
    assert code == EXIT_OK
    report = json.loads((tmp_path / "gains.json").read_text())
    assert report["passed"] is True
    assert report["chain"]["alphas"][1] > 3.0
    assert report["chain"]["certificate"]["margin"] < 0
    butterworth = report["families"][1]
    assert butterworth["family"] == "butterworth"
    assert butterworth["pole_magnitudes"] == pytest.approx([2.0] * 4, rel=1e-9)
    assert "PASS" in _printed(handler)


def test_gains_rejects_zero_beta_min(handler, write_config, tmp_path):
    code = handler.cmd_gains(write_config(_gains_tree(beta_min=0.0)), out_dir=tmp_path)
    assert code == EXIT_CONFIG
    assert "beta_min" in _printed(handler)


def test_gains_needs_gains_section(handler, hover_tree, write_config, tmp_path):
    assert handler.cmd_gains(write_config(hover_tree), out_dir=tmp_path) == EXIT_CONFIG


def test_gains_synthesis_failure(handler, write_config, tmp_path, monkeypatch):
    from services.errors import SynthesisError

    def refuse(*args, **kwargs):
        raise SynthesisError("alpha3 search exhausted", margins={"alpha3": 0.1})

    monkeypatch.setattr(handler.gain_service, "build_report", refuse)
    assert handler.cmd_gains(write_config(_gains_tree()), out_dir=tmp_path) == EXIT_SYNTHESIS


def test_verify_passes(handler):
    assert handler.cmd_verify(seed=0, trials=10) == EXIT_OK
    assert "10/10 checks passed" in _printed(handler)


def test_verify_perturbed(handler):
    assert handler.cmd_verify(seed=0, trials=10, perturb="b4") == EXIT_VERIFY
    assert "failed: q4_b4_finite_difference" in _printed(handler)


def test_batch(handler, hover_tree, write_config, tmp_path):
    first = write_config(hover_tree, "hover.json")
    other = tmp_path / "again"
    other.mkdir()
    second = other / "hover.json"
    second.write_text(first.read_text())
    out = tmp_path / "batch"
    code = handler.cmd_batch([first, second], ["scenario.horizon=0.05"], out, workers=2)
    assert code == EXIT_OK
    index = json.loads((out / "index.json").read_text())
    assert [entry["name"] for entry in index["runs"]] == ["hover", "hover_2"]


def test_batch_uses_config_output_directory(handler, hover_tree, write_config, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    hover_tree["output"] = {"directory": "runs/hover_here"}
    path = write_config(hover_tree, "hover.json")
    code = handler.cmd_batch([path], ["scenario.horizon=0.05"])
    assert code == EXIT_OK
    assert (tmp_path / "runs" / "hover_here" / "trajectory.csv").exists()
    index = json.loads((tmp_path / handler.settings.output_dir / "index.json").read_text())
    assert index["runs"][0]["name"] == "hover"


@pytest.mark.parametrize("argv", [[], ["simulate"], ["simulate", "run.json", "--preset", "offset_a"],
                                  ["simulate", "--preset", "hover"], ["verify", "--trials", "many"], ["launch"]])
def test_usage_errors_exit_with_config_code(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == EXIT_CONFIG


def test_malformed_override_path_exits_with_config_code(hover_tree, write_config, tmp_path):
    path = write_config(hover_tree)
    code = main(["simulate", str(path), "--set", "scenario.initial.pos.x=1", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert not (tmp_path / "trajectory.csv").exists()


def test_main_verify(capsys):
    assert main(["verify", "--seed", "1", "--trials", "5"]) == EXIT_OK
