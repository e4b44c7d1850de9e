"""Feedback laws: static state feedback (A) and the dynamic compensator (B)"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from models.schemas import QuadParams, Target
from services.dynamics_service import (
    QuadState,
    RotorForces,
    VirtualControl,
    check_tilt,
    virtual_to_forces,
)
from services.errors import ControlFault, DomainError, InvalidInputError, SingularityError
from services.gain_service import GammaSet, KVector, PDGains, companion_matrix
from services.normal_form_service import (
    SINGULAR_DET,
    TILT_EPS,
    XiState,
    beta_of,
    det_b22,
    h_hessian,
    h_jacobian,
    h_vector,
    q1_b1,
    q2_b21_b22,
    tilt_cosine,
    tilt_cosine_gradient,
    tilt_cosine_hessian,
    to_xi,
)

logger = logging.getLogger(__name__)

ZETA_COLUMNS: List[str] = [f"zeta{i}{j}" for i in range(1, 5) for j in range(1, 5)]


@dataclass(frozen=True)
class ControllerAConfig:
    """PD altitude/yaw gains, per-axis horizontal k-vectors and the u1 saturation level"""
    pd: PDGains
    k_x: KVector
    k_y: KVector
    alpha_sat: float

    def __post_init__(self):
        if not 0.0 < self.alpha_sat < 1.0:
            raise InvalidInputError(f"alpha_sat must satisfy alpha in (0, 1), got {self.alpha_sat}")

    def horizontal_gains(self) -> np.ndarray:
        """Rows (K3, K4, K5, K6), columns (x axis, y axis); all entries positive"""
        return np.column_stack([self.k_x.diagonal_entries(), self.k_y.diagonal_entries()])


@dataclass(frozen=True)
class ControllerBConfig:
    gamma: GammaSet
    u12_0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rho12_0: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass(frozen=True)
class CompensatorState:
    """Double-integrator memory: u12' = rho12, rho12' = v12"""
    u12: np.ndarray
    rho12: np.ndarray

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.u12, self.rho12])

    @classmethod
    def from_array(cls, w: np.ndarray) -> "CompensatorState":
        return cls(u12=np.array(w[0:2], dtype=float), rho12=np.array(w[2:4], dtype=float))

    @classmethod
    def initial(cls, cfg: ControllerBConfig) -> "CompensatorState":
        return cls(u12=np.array(cfg.u12_0, dtype=float), rho12=np.array(cfg.rho12_0, dtype=float))


@dataclass(frozen=True)
class ZetaState:
    """Output (z, phi, x, y) errors and their first three derivatives"""
    zeta1: np.ndarray
    zeta2: np.ndarray
    zeta3: np.ndarray
    zeta4: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.zeta1, self.zeta2, self.zeta3, self.zeta4])


@dataclass(frozen=True)
class ControlOutput:
    """One controller evaluation with the diagnostics the simulator logs"""
    virtual: VirtualControl
    forces: RotorForces
    beta: float
    det: float
    stack: np.ndarray
    # (rho1, rho2, v1, v2) for the compensator; None for controller A
    compensator_rate: Optional[np.ndarray] = None


def sat(value: float, level: float) -> float:
    return min(max(value, -level), level)


# Controller A

def controller_a_vertical_yaw(xi: XiState, angles: np.ndarray, cfg: ControllerAConfig,
                              g: float = 9.81) -> Tuple[float, float]:
    """Saturated PD altitude law and PD yaw law"""
    c = tilt_cosine(angles[1], angles[2])
    if c <= TILT_EPS:
        raise SingularityError(f"cos(theta)cos(psi) = {c:.3e}, altitude law undefined")
    k11, k12 = cfg.pd.k1
    k21, k22 = cfg.pd.k2
    u2 = -k12 * xi.xi1[1] - k22 * xi.xi2[1]
    u1 = sat((g - k11 * xi.xi1[0] - k21 * xi.xi2[0]) / c - g, cfg.alpha_sat * g)
    return u1, u2


def controller_a_feedback_linearizing(xi: XiState, angles: np.ndarray, cfg: ControllerAConfig,
                                      g: float = 9.81) -> np.ndarray:
    """Unsaturated (u1, u2) = b1^-1 (-q1 - K1 xi1 - K2 xi2); reference for the saturated law"""
    q1, b1 = q1_b1(angles[1], angles[2], g)
    return np.linalg.solve(b1, -q1 - cfg.pd.K1 @ xi.xi1 - cfg.pd.K2 @ xi.xi2)


def horizontal_feedback(xi: XiState, cfg: ControllerAConfig) -> np.ndarray:
    """-K3 xi3 - K4 xi4 - K5 xi5 - K6 xi6"""
    K = cfg.horizontal_gains()
    return -(K[0] * xi.xi3 + K[1] * xi.xi4 + K[2] * xi.xi5 + K[3] * xi.xi6)


def controller_a_horizontal(xi: XiState, angles: np.ndarray, rates: np.ndarray, u2: float,
                            cfg: ControllerAConfig, g: float = 9.81) -> Tuple[float, float]:
    """Feedback-linearizing roll/pitch law"""
    q2, b21, b22 = q2_b21_b22(angles[0], angles[1], angles[2], rates, g)
    rhs = horizontal_feedback(xi, cfg) - q2 - b21[:, 0] * u2
    u34 = np.linalg.solve(b22, rhs)
    return float(u34[0]), float(u34[1])


def controller_a_evaluate(s: QuadState, t: Target, cfg: ControllerAConfig,
                          p: QuadParams) -> ControlOutput:
    try:
        check_tilt(s.angles[1], s.angles[2])
        xi = to_xi(s, t, 0.0, p.g)
        u1, u2 = controller_a_vertical_yaw(xi, s.angles, cfg, p.g)
        u3, u4 = controller_a_horizontal(xi, s.angles, s.rates, u2, cfg, p.g)
    except (SingularityError, DomainError) as e:
        raise ControlFault(f"controller A: {e}", diagnostic={
            "angles": s.angles.tolist(), "rates": s.rates.tolist(),
            "det": getattr(e, "det", None),
        }) from e
    virtual = VirtualControl(u1, u2, u3, u4)
    return ControlOutput(
        virtual=virtual,
        forces=virtual_to_forces(virtual, p),
        beta=beta_of(u1, p.g),
        det=det_b22(s.angles[1], s.angles[2], p.g),
        stack=xi.stack(),
    )


def controller_a_step(s: QuadState, t: Target, cfg: ControllerAConfig, p: QuadParams) -> RotorForces:
    """State to rotor forces; stateless"""
    return controller_a_evaluate(s, t, cfg, p).forces


# Controller B

def zeta_state(s: QuadState, t: Target, comp: CompensatorState, g: float = 9.81) -> ZetaState:
    phi, psi, theta = s.angles
    r = s.rates
    u1, u2 = comp.u12
    rho1, rho2 = comp.rho12
    thrust = u1 + g
    c = tilt_cosine(psi, theta)
    h = h_vector(phi, psi, theta)
    c_dot = float(tilt_cosine_gradient(psi, theta) @ r)
    h_dot = h_jacobian(phi, psi, theta) @ r
    return ZetaState(
        zeta1=np.array([s.pos[2] - t.z_star, phi - t.phi_star, s.pos[0] - t.x_star, s.pos[1] - t.y_star]),
        zeta2=np.array([s.vel[2], r[0], s.vel[0], s.vel[1]]),
        zeta3=np.array([c * thrust - g, u2, thrust * h[0], thrust * h[1]]),
        zeta4=np.array([rho1 * c + thrust * c_dot, rho2,
                        rho1 * h[0] + thrust * h_dot[0], rho1 * h[1] + thrust * h_dot[1]]),
    )


def q4_b4(s: QuadState, comp: CompensatorState, g: float = 9.81) -> Tuple[np.ndarray, np.ndarray]:
    """zeta4' = q4 + b4 (v1, v2, u3, u4); derivation in docs/derivations.md"""
    phi, psi, theta = s.angles
    r = s.rates
    u1, u2 = comp.u12
    rho1 = comp.rho12[0]
    thrust = u1 + g
    c = tilt_cosine(psi, theta)
    grad_c = tilt_cosine_gradient(psi, theta)
    h = h_vector(phi, psi, theta)
    J = h_jacobian(phi, psi, theta)
    c_dot = float(grad_c @ r)
    h_dot = J @ r
    c_curv = float(r @ tilt_cosine_hessian(psi, theta) @ r)
    h_curv = np.einsum("i,kij,j->k", r, h_hessian(phi, psi, theta), r)

    q4 = np.empty(4)
    q4[0] = 2.0 * rho1 * c_dot + thrust * c_curv
    q4[1] = 0.0
    q4[2:4] = 2.0 * rho1 * h_dot + thrust * (h_curv + J[:, 0] * u2)
    b4 = np.array([
        [c, 0.0, thrust * grad_c[1], thrust * grad_c[2]],
        [0.0, 1.0, 0.0, 0.0],
        [h[0], 0.0, thrust * J[0, 1], thrust * J[0, 2]],
        [h[1], 0.0, thrust * J[1, 1], thrust * J[1, 2]],
    ])
    return q4, b4


def controller_b_evaluate(s: QuadState, t: Target, comp: CompensatorState, cfg: ControllerBConfig,
                          p: QuadParams, q4_b4_fn=q4_b4) -> ControlOutput:
    try:
        check_tilt(s.angles[1], s.angles[2])
        zeta = zeta_state(s, t, comp, p.g)
        q4, b4 = q4_b4_fn(s, comp, p.g)
        det = float(np.linalg.det(b4))
        if abs(det) < SINGULAR_DET or not math.isfinite(det):
            raise SingularityError(f"b4 is singular (det={det:.3e})", det=det)
    except (SingularityError, DomainError) as e:
        raise ControlFault(f"controller B: {e}", diagnostic={
            "angles": s.angles.tolist(), "u12": comp.u12.tolist(), "det": getattr(e, "det", None),
        }) from e
    g1, g2, g3, g4 = cfg.gamma.gamma
    rhs = -q4 - g1 * zeta.zeta1 - g2 * zeta.zeta2 - g3 * zeta.zeta3 - g4 * zeta.zeta4
    U = np.linalg.solve(b4, rhs)
    virtual = VirtualControl(float(comp.u12[0]), float(comp.u12[1]), float(U[2]), float(U[3]))
    return ControlOutput(
        virtual=virtual,
        forces=virtual_to_forces(virtual, p),
        beta=beta_of(virtual.u1, p.g),
        det=det,
        stack=zeta.stack(),
        compensator_rate=np.array([comp.rho12[0], comp.rho12[1], U[0], U[1]]),
    )


def controller_b_output(s: QuadState, t: Target, comp: CompensatorState, cfg: ControllerBConfig,
                        p: QuadParams) -> Tuple[np.ndarray, RotorForces]:
    """U = (v1, v2, u3, u4) and the rotor forces; the caller integrates the compensator"""
    out = controller_b_evaluate(s, t, comp, cfg, p)
    U = np.array([out.compensator_rate[2], out.compensator_rate[3], out.virtual.u3, out.virtual.u4])
    return U, out.forces


def closed_loop_b_matrix(gamma: GammaSet) -> np.ndarray:
    """16x16 block companion matrix of the linearized zeta dynamics"""
    return np.kron(companion_matrix(gamma.gamma), np.eye(4))
