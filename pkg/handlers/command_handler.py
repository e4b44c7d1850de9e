"""Command handler for the quadstab CLI: runs a subcommand and maps its outcome to an exit code"""

import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

from config import get_settings
from data.presets import preset_tree
from services.config_service import (
    build_beta,
    build_gamma,
    build_pd_gains,
    build_scenario,
    get_config_service,
)
from services.errors import ConfigError, ControlFault, IntegrationFault, InvalidInputError, SynthesisError
from services.gain_service import get_gain_service
from services.report_service import get_report_service
from services.simulation_service import BatchJob, Scenario, get_simulation_service
from services.verification_service import get_verification_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAULT = 2
EXIT_SYNTHESIS = 3
EXIT_VERIFY = 4


class CommandHandler:
    """Dispatches CLI subcommands"""

    def __init__(self, out: Optional[TextIO] = None):
        self.out = out or sys.stdout
        self.settings = get_settings()
        self.config_service = get_config_service()
        self.gain_service = get_gain_service()
        self.report_service = get_report_service()
        self.simulation_service = get_simulation_service()
        self.verification_service = get_verification_service()

    def _say(self, text: str) -> None:
        print(text, file=self.out)

    def _fail(self, code: int, message: str) -> int:
        logger.error(message)
        self._say(f"error: {message}")
        return code

    def _load_scenario(self, path: Optional[Path], overrides: Sequence[str],
                       preset: Optional[str] = None) -> Tuple[Scenario, object]:
        if (preset is None) == (path is None):
            raise ConfigError("give either a config file or a preset")
        if preset is not None:
            config = self.config_service.parse(json.dumps(preset_tree(preset), indent=2), f"preset {preset}", overrides)
        else:
            config = self.config_service.load(path, overrides)
        if config.scenario is None:
            raise ConfigError(f"{path}: no scenario section")
        return build_scenario(config.scenario), config

    def cmd_simulate(self, config_path: Optional[Path], overrides: Sequence[str] = (),
                     out_dir: Optional[Path] = None, preset: Optional[str] = None) -> int:
        """Run a config file, or a named preset scenario when preset is given"""
        try:
            path = Path(config_path) if config_path is not None else None
            scenario, config = self._load_scenario(path, overrides, preset)
        except ConfigError as e:
            return self._fail(EXIT_CONFIG, str(e))
        except SynthesisError as e:
            return self._fail(EXIT_SYNTHESIS, f"{e} (last margins: {e.margins})")

        try:
            traj, metrics = self.simulation_service.run(scenario)
        except (ControlFault, IntegrationFault) as e:
            return self._fail(EXIT_FAULT, str(e))

        directory = Path(out_dir or config.output.directory or self.settings.output_dir)
        try:
            paths = self.report_service.write_run(traj, metrics, directory,
                                                  config.output.trajectory, config.output.metrics)
        except OSError as e:
            return self._fail(EXIT_CONFIG, f"cannot write outputs to {directory}: {e}")

        errors = ", ".join(f"{k}={v:.2e}" for k, v in metrics.final_errors.items())
        self._say(f"controller {metrics.controller}: {metrics.rows} rows, final errors {errors}")
        self._say(f"trajectory: {paths['trajectory']}")
        self._say(f"metrics: {paths['metrics']}")
        if metrics.fault:
            self._say(f"FAULT at t={metrics.first_fault_time:.4f}s: {metrics.fault_message}")
            return EXIT_FAULT
        if not metrics.converged:
            self._say(f"not converged within tolerance {scenario.convergence_tol:g}")
            return EXIT_FAULT
        self._say("converged")
        return EXIT_OK

    def cmd_gains(self, config_path: Path, out_dir: Optional[Path] = None) -> int:
        try:
            config = self.config_service.load(Path(config_path))
            section = config.gains
            if section is None:
                raise ConfigError(f"{config_path}: no gains section")
            beta = build_beta(section.beta)
            pd = build_pd_gains(section.pd) if section.pd is not None else None
            gammas = [build_gamma(f) for f in section.families]
        except InvalidInputError as e:
            return self._fail(EXIT_CONFIG, f"{config_path}: {e}")
        except ConfigError as e:
            return self._fail(EXIT_CONFIG, str(e))

        trials = section.trials or self.settings.certify_trials
        try:
            report, passed = self.gain_service.build_report(
                beta, alpha1=section.alpha1, growth=section.growth, trials=trials,
                seed=section.seed, pd=pd, gammas=gammas,
            )
        except SynthesisError as e:
            return self._fail(EXIT_SYNTHESIS, f"{e} (last margins: {e.margins})")

        directory = Path(out_dir or config.output.directory or self.settings.output_dir)
        try:
            path = self.report_service.write_json(report, directory / config.output.report)
        except OSError as e:
            return self._fail(EXIT_CONFIG, f"cannot write report to {directory}: {e}")

        self._say(self._gains_summary(report))
        self._say(f"report: {path}")
        return EXIT_OK if passed else EXIT_SYNTHESIS

    def _gains_summary(self, report: Dict) -> str:
        chain = report["chain"]
        lines = [
            f"beta interval [{report['beta']['beta_min']:g}, {report['beta']['beta_max']:g}]",
            "alpha chain: " + ", ".join(f"{a:.6g}" for a in chain["alphas"]),
            f"alpha2 threshold: {chain['alpha2_star']:.6g}",
            "k: " + ", ".join(f"{k:.6g}" for k in chain["k"]),
            "step margins: " + ", ".join(f"{name}={m:.3e}" for name, m in chain["step_margins"].items()),
            f"certificate margin {chain['certificate']['margin']:.3e}, "
            f"cond(T) {chain['certificate']['condition']:.3g}, "
            f"decay horizon {chain['certificate']['decay_horizon']:.4g}s",
            f"beta(t) trials: {chain['chi_trials']['decayed']}/{chain['chi_trials']['trials']} decayed",
        ]
        for name, channel in report.get("pd", {}).items():
            poles = ", ".join(f"{p.real:.4g}{p.imag:+.4g}j" for p in channel["poles"])
            lines.append(f"{name} PD poles: {poles}")
        for family in report["families"]:
            poles = ", ".join(f"{p.real:.4g}{p.imag:+.4g}j" for p in family["poles"])
            lines.append(f"gamma {family['family']}: {', '.join(f'{g:.6g}' for g in family['gamma'])}; "
                         f"poles {poles}")
        lines.append("PASS" if report["passed"] else "FAIL")
        return "\n".join(lines)

    def cmd_verify(self, seed: Optional[int] = None, trials: Optional[int] = None,
                   perturb: Optional[str] = None) -> int:
        seed = self.settings.verify_seed if seed is None else seed
        trials = self.settings.verify_trials if trials is None else trials
        results = self.verification_service.run(seed=seed, trials=trials, perturb=perturb)
        title = f"verify: seed={seed}, trials={trials}" + (f", perturbed {perturb}" if perturb else "")
        self._say(self.report_service.format_table([r.row() for r in results], title=title))
        failed = [r.name for r in results if not r.passed]
        if failed:
            self._say("failed: " + ", ".join(failed))
            return EXIT_VERIFY
        return EXIT_OK

    def cmd_batch(self, config_paths: Sequence[Path], overrides: Sequence[str] = (),
                  out_dir: Optional[Path] = None, workers: Optional[int] = None) -> int:
        """Each run writes to --out/<name>, else its config's output.directory, else <output_dir>/<name>"""
        directory = Path(out_dir or self.settings.output_dir)
        jobs: List[BatchJob] = []
        seen: Dict[str, int] = {}
        try:
            for path in map(Path, config_paths):
                scenario, config = self._load_scenario(path, overrides)
                name = path.stem
                seen[name] = seen.get(name, 0) + 1
                if seen[name] > 1:
                    name = f"{name}_{seen[name]}"
                run_dir = directory / name
                if out_dir is None and config.output.directory:
                    run_dir = Path(config.output.directory)
                jobs.append(BatchJob(name=name, scenario=scenario, directory=run_dir))
        except ConfigError as e:
            return self._fail(EXIT_CONFIG, str(e))
        except SynthesisError as e:
            return self._fail(EXIT_SYNTHESIS, f"{e} (last margins: {e.margins})")

        workers = workers or self.settings.batch_workers
        try:
            results = asyncio.run(self.simulation_service.run_batch(jobs, directory, workers))
        except OSError as e:
            return self._fail(EXIT_CONFIG, f"cannot write batch index to {directory}: {e}")
        for entry in results:
            status = "converged" if entry["converged"] else ("FAULT" if entry["fault"] else "not converged")
            if "error" in entry:
                status = f"{status}, {entry['error']}"
            self._say(f"{entry['name']}: {status} (exit {entry['exit_code']})")
        self._say(f"index: {directory / 'index.json'}")
        return max(entry["exit_code"] for entry in results)


# Singleton instance
_command_handler: Optional[CommandHandler] = None


def get_command_handler() -> CommandHandler:
    """Get singleton command handler"""
    global _command_handler
    if _command_handler is None:
        _command_handler = CommandHandler()
    return _command_handler
