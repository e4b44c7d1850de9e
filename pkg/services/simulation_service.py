"""Fixed-step closed-loop simulation, trajectory logging and convergence metrics"""

import asyncio
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import expm

from models.schemas import QuadParams, Target
from services.controller_service import (
    ZETA_COLUMNS,
    CompensatorState,
    ControlOutput,
    ControllerAConfig,
    ControllerBConfig,
    controller_a_evaluate,
    controller_b_evaluate,
)
from services.dynamics_service import (
    STATE_COLUMNS,
    QuadState,
    RotorForces,
    check_tilt,
    forces_to_virtual,
    state_derivative_array,
)
from services.errors import ControlFault, DomainError, IntegrationFault, InvalidInputError
from services.normal_form_service import XI_COLUMNS

logger = logging.getLogger(__name__)

BASE_COLUMNS = (["t"] + STATE_COLUMNS + ["F1", "F2", "F3", "F4", "u1", "u2", "u3", "u4", "beta", "fault"])
COMPENSATOR_COLUMNS = ["rho1", "rho2", "v1", "v2"]
REGULATED = {"z": ("z", "z_star"), "phi": ("phi", "phi_star"), "x": ("x", "x_star"), "y": ("y", "y_star")}
SETTLE_BAND = 0.02

ControllerConfig = Union[ControllerAConfig, ControllerBConfig]


@dataclass(frozen=True)
class Scenario:
    params: QuadParams
    initial: QuadState
    target: Target
    controller: ControllerConfig
    dt: float = 1e-3
    horizon: float = 20.0
    friction_enabled: bool = False
    nonneg_thrust: bool = False
    fault_policy: str = "abort"
    seed: int = 0
    log_stacks: bool = True
    convergence_tol: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if self.horizon < self.dt:
            raise InvalidInputError("horizon must be at least one step")
        if self.fault_policy not in ("abort", "hold"):
            raise InvalidInputError(f"unknown fault policy {self.fault_policy!r}")
        check_tilt(self.initial.angles[1], self.initial.angles[2])

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def uses_compensator(self) -> bool:
        return isinstance(self.controller, ControllerBConfig)


@dataclass
class Trajectory:
    frame: pd.DataFrame
    controller: str

    @property
    def times(self) -> np.ndarray:
        return self.frame["t"].to_numpy()

    @property
    def faulted(self) -> bool:
        return bool(self.frame["fault"].any())

    def columns(self, names: Sequence[str]) -> np.ndarray:
        missing = [c for c in names if c not in self.frame.columns]
        if missing:
            raise InvalidInputError(f"trajectory is missing columns {missing}")
        return self.frame[list(names)].to_numpy()

    def final_state(self) -> np.ndarray:
        return self.frame[STATE_COLUMNS].iloc[-1].to_numpy()

    def to_csv(self, path: Path) -> None:
        self.frame.to_csv(path, index=False, float_format="%.17g")


@dataclass
class Metrics:
    controller: str
    rows: int
    settle_time: Dict[str, Optional[float]]
    overshoot: Dict[str, float]
    final_errors: Dict[str, float]
    max_tilt: float
    beta_range: Tuple[float, float]
    min_abs_det: float
    converged: bool
    fault: bool
    fault_count: int = 0
    first_fault_time: Optional[float] = None
    fault_message: Optional[str] = None
    thrust_clip_count: int = 0
    beta_contained: Optional[bool] = None
    feasibility_ok: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


def rk4_step(fn: Callable[[float, np.ndarray], np.ndarray], x: np.ndarray, dt: float,
             t: float = 0.0, k1: Optional[np.ndarray] = None) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step; k1 may be supplied when already evaluated"""
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if k1 is None:
        k1 = fn(t, x)
    k2 = fn(t + dt / 2, x + dt * k1 / 2)
    k3 = fn(t + dt / 2, x + dt * k2 / 2)
    k4 = fn(t + dt, x + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationFault(f"non-finite derivative at t={t:.6g}")
    x_next = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationFault(f"non-finite state after step at t={t:.6g}")
    return x_next


class ClosedLoop:
    """Plant plus controller (plus compensator for B) as one ODE on a state stack"""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.last_good: Optional[ControlOutput] = None
        self.fault_pending: Optional[str] = None
        self.clip_count = 0

    def initial_stack(self) -> np.ndarray:
        x = self.sc.initial.to_array()
        if self.sc.uses_compensator:
            x = np.concatenate([x, CompensatorState.initial(self.sc.controller).to_array()])
        return x

    def _evaluate(self, x: np.ndarray) -> ControlOutput:
        s = QuadState.from_array(x[:12])
        if self.sc.uses_compensator:
            comp = CompensatorState.from_array(x[12:16])
            return controller_b_evaluate(s, self.sc.target, comp, self.sc.controller, self.sc.params)
        return controller_a_evaluate(s, self.sc.target, self.sc.controller, self.sc.params)

    def control(self, x: np.ndarray) -> ControlOutput:
        try:
            out = self._evaluate(x)
        except ControlFault as e:
            if self.sc.fault_policy == "hold" and self.last_good is not None:
                self.fault_pending = str(e)
                return self.last_good
            raise
        self.last_good = out
        return out

    def derivative(self, t: float, x: np.ndarray, out: Optional[ControlOutput] = None) -> np.ndarray:
        if out is None:
            out = self.control(x)
        f = out.forces.f
        if self.sc.nonneg_thrust and np.any(f < 0):
            self.clip_count += 1
            f = np.maximum(f, 0.0)
        u = forces_to_virtual(RotorForces(f=f), self.sc.params).as_array()
        try:
            dx = state_derivative_array(x[:12], u, self.sc.params, self.sc.friction_enabled)
        except DomainError as e:
            raise ControlFault(f"plant left the tilt domain: {e}") from e
        if self.sc.uses_compensator:
            dx = np.concatenate([dx, out.compensator_rate])
        return dx

    def take_fault(self) -> Optional[str]:
        message, self.fault_pending = self.fault_pending, None
        return message


def _row(t: float, x: np.ndarray, out: Optional[ControlOutput], fault: bool, sc: Scenario) -> List[float]:
    row = [t] + list(x[:12])
    if out is None:
        row += [math.nan] * 9
    else:
        row += list(out.forces.f) + list(out.virtual.as_array()) + [out.beta]
    row.append(1.0 if fault else 0.0)
    if sc.log_stacks:
        stack_size = len(ZETA_COLUMNS) if sc.uses_compensator else len(XI_COLUMNS)
        row.append(math.nan if out is None else out.det)
        row += [math.nan] * stack_size if out is None else list(out.stack)
        if sc.uses_compensator:
            row += [math.nan] * 4 if out is None else list(out.compensator_rate)
    return row


def _columns(sc: Scenario) -> List[str]:
    columns = list(BASE_COLUMNS)
    if sc.log_stacks:
        if sc.uses_compensator:
            columns += ["det_b4"] + ZETA_COLUMNS + COMPENSATOR_COLUMNS
        else:
            columns += ["det_b22"] + XI_COLUMNS
    return columns


def run_scenario(sc: Scenario) -> Tuple[Trajectory, Metrics]:
    """Integrate the closed loop over the horizon; faults truncate (abort) or are flagged (hold)"""
    kind = "B" if sc.uses_compensator else "A"
    logger.info(f"Running controller {kind} scenario: dt={sc.dt:g}, horizon={sc.horizon:g}s")
    loop = ClosedLoop(sc)
    x = loop.initial_stack()
    rows: List[List[float]] = []
    fault_count = 0
    first_fault: Optional[Tuple[float, str]] = None

    def note_fault(t: float, message: str):
        nonlocal fault_count, first_fault
        fault_count += 1
        if first_fault is None:
            first_fault = (t, message)
            logger.warning(f"Control fault at t={t:.4f}s: {message}")

    n = sc.n_steps
    for k in range(n + 1):
        t = k * sc.dt
        try:
            out = loop.control(x)
        except ControlFault as e:
            note_fault(t, str(e))
            rows.append(_row(t, x, None, True, sc))
            break
        held = loop.take_fault()
        if held:
            note_fault(t, held)
        rows.append(_row(t, x, out, held is not None, sc))
        if k == n:
            break
        try:
            x = rk4_step(loop.derivative, x, sc.dt, t, k1=loop.derivative(t, x, out))
        except (ControlFault, IntegrationFault) as e:
            note_fault(t, str(e))
            rows[-1][BASE_COLUMNS.index("fault")] = 1.0
            break
        held = loop.take_fault()
        if held:
            note_fault(t, held)
            rows[-1][BASE_COLUMNS.index("fault")] = 1.0

    traj = Trajectory(frame=pd.DataFrame(rows, columns=_columns(sc)), controller=kind)
    metrics = compute_metrics(traj, sc, fault_count, first_fault, loop.clip_count)
    logger.info(
        f"Controller {kind} run finished: rows={metrics.rows}, converged={metrics.converged}, "
        f"fault={metrics.fault}"
    )
    return traj, metrics


def _settle_time(t: np.ndarray, e: np.ndarray) -> Optional[float]:
    e0 = abs(e[0])
    if e0 < 1e-12:
        return 0.0
    outside = np.flatnonzero(np.abs(e) > SETTLE_BAND * e0)
    if outside.size == 0:
        return 0.0
    last = outside[-1]
    return None if last == len(t) - 1 else float(t[last + 1])


def _overshoot(e: np.ndarray) -> float:
    e0 = e[0]
    if abs(e0) < 1e-12:
        return 0.0
    return float(max(0.0, np.max(-np.sign(e0) * e)) / abs(e0))


def compute_metrics(traj: Trajectory, sc: Scenario, fault_count: int = 0,
                    first_fault: Optional[Tuple[float, str]] = None, clip_count: int = 0) -> Metrics:
    df = traj.frame
    t = df["t"].to_numpy()
    settle, overshoot, final = {}, {}, {}
    for name, (column, target_field) in REGULATED.items():
        e = df[column].to_numpy() - getattr(sc.target, target_field)
        settle[name] = _settle_time(t, e)
        overshoot[name] = _overshoot(e)
        final[name] = float(abs(e[-1]))
    tilt_cos = np.cos(df["theta"].to_numpy()) * np.cos(df["psi"].to_numpy())
    beta = df["beta"].to_numpy()
    beta_ok = beta[np.isfinite(beta)]
    det_column = "det_b4" if sc.uses_compensator else "det_b22"
    if det_column in df.columns:
        dets = np.abs(df[det_column].to_numpy())
        dets = dets[np.isfinite(dets)]
        min_det = float(dets.min()) if dets.size else math.nan
    else:
        min_det = math.nan

    fault = fault_count > 0
    converged = not fault and all(v < sc.convergence_tol for v in final.values())
    metrics = Metrics(
        controller=traj.controller,
        rows=len(df),
        settle_time=settle,
        overshoot=overshoot,
        final_errors=final,
        max_tilt=float(np.max(np.arccos(np.clip(tilt_cos, -1.0, 1.0)))),
        beta_range=(float(beta_ok.min()), float(beta_ok.max())) if beta_ok.size else (math.nan, math.nan),
        min_abs_det=min_det,
        converged=converged,
        fault=fault,
        fault_count=fault_count,
        first_fault_time=first_fault[0] if first_fault else None,
        fault_message=first_fault[1] if first_fault else None,
        thrust_clip_count=clip_count,
    )
    if isinstance(sc.controller, ControllerAConfig):
        alpha = sc.controller.alpha_sat
        metrics.beta_contained = bool(np.all((beta_ok >= 1 - alpha - 1e-12) & (beta_ok <= 1 + alpha + 1e-12)))
        if converged:
            tail = tilt_cos[int(0.9 * len(tilt_cos)):]
            metrics.feasibility_ok = bool(np.all(tail >= 1.0 / (1.0 + alpha) - 1e-12))
            if not metrics.feasibility_ok:
                logger.warning("Converged run violates cos(theta)cos(psi) >= 1/(1+alpha) in its tail")
    return metrics


def compare_linear_reference(traj: Trajectory, matrix: np.ndarray, columns: Sequence[str]) -> float:
    """Max deviation of the logged stack from LTI propagation of its initial value, relative to |x(0)|"""
    X = traj.columns(columns)
    if X.shape[1] != matrix.shape[0]:
        raise InvalidInputError(f"{len(columns)} columns do not match a {matrix.shape[0]}-state model")
    t = traj.times
    if len(t) < 2:
        return 0.0
    step = expm(matrix * (t[1] - t[0]))
    ref = X[0].copy()
    scale = max(float(np.linalg.norm(X[0])), 1e-12)
    worst = 0.0
    for k in range(1, len(t)):
        ref = step @ ref
        worst = max(worst, float(np.linalg.norm(X[k] - ref)) / scale)
    return worst


def observed_order(sc: Scenario, refinements: int = 2) -> float:
    """log2 of successive final-state differences under step halving; nan when the finer runs agree exactly"""
    finals = []
    for level in range(refinements + 1):
        dt = sc.dt / 2 ** level
        run = Scenario(**{**sc.__dict__, "dt": dt, "log_stacks": False})
        traj, _ = run_scenario(run)
        finals.append(traj.final_state())
    coarse = np.linalg.norm(finals[-3] - finals[-2])
    fine = np.linalg.norm(finals[-2] - finals[-1])
    if fine == 0.0:
        return math.inf if coarse > 0.0 else math.nan
    return float(math.log2(coarse / fine))


@dataclass(frozen=True)
class BatchJob:
    name: str
    scenario: Scenario
    # the run's output directory
    directory: Path


def _run_and_write(job: BatchJob) -> Dict:
    from services.report_service import get_report_service

    traj, metrics = run_scenario(job.scenario)
    entry = {"name": job.name, "converged": metrics.converged, "fault": metrics.fault}
    try:
        paths = get_report_service().write_run(traj, metrics, job.directory)
    except OSError as e:
        logger.error(f"Cannot write outputs of {job.name} to {job.directory}: {e}")
        return {**entry, "exit_code": 1, "error": f"cannot write outputs to {job.directory}: {e}"}
    return {**entry, "exit_code": 0 if metrics.converged else 2, **paths}


class SimulationService:
    """Runs closed-loop scenarios, alone or as a parallel batch"""

    def run(self, sc: Scenario) -> Tuple[Trajectory, Metrics]:
        return run_scenario(sc)

    def observed_order(self, sc: Scenario, refinements: int = 2) -> float:
        order = observed_order(sc, refinements)
        logger.info(f"Observed integrator order {order:.3f} from dt={sc.dt:g}")
        return order

    async def run_batch(self, jobs: Sequence[BatchJob], index_dir: Path, workers: int = 2) -> List[Dict]:
        """Run independent scenarios in a process pool; the index keeps input order"""
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = await asyncio.gather(*[loop.run_in_executor(pool, _run_and_write, job) for job in jobs])
        from services.report_service import get_report_service

        get_report_service().write_index(list(results), Path(index_dir))
        logger.info(f"Batch of {len(results)} scenarios finished")
        return list(results)


# Singleton instance
_simulation_service: Optional[SimulationService] = None


def get_simulation_service() -> SimulationService:
    """Get singleton simulation service"""
    global _simulation_service
    if _simulation_service is None:
        _simulation_service = SimulationService()
    return _simulation_service
