"""Quadcopter plant: rigid-body equations of motion and the rotor mixer"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from models.schemas import QuadParams
from services.errors import DomainError, InvalidInputError

logger = logging.getLogger(__name__)

HALF_PI = math.pi / 2

# Signed allocation pattern; rows: thrust, yaw, roll, pitch
MIXER_PATTERN = np.array([
    [1.0, 1.0, 1.0, 1.0],
    [1.0, -1.0, 1.0, -1.0],
    [-1.0, 1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0, 1.0],
])

# State vector layout used by the integrator
STATE_COLUMNS = ["x", "y", "z", "vx", "vy", "vz", "phi", "psi", "theta", "phid", "psid", "thetad"]


def _require_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"{what} must be finite, got {values.tolist()}")


def check_tilt(psi: float, theta: float) -> None:
    """Raise DomainError when roll or pitch reaches +-pi/2"""
    if not (abs(psi) < HALF_PI and abs(theta) < HALF_PI):
        raise DomainError(f"tilt outside domain: roll={psi:.6g}, pitch={theta:.6g}")


@dataclass(frozen=True)
class QuadState:
    """12-dimensional rigid-body state; angles are (yaw phi, roll psi, pitch theta)"""
    pos: np.ndarray
    vel: np.ndarray
    angles: np.ndarray
    rates: np.ndarray

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel, self.angles, self.rates])

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "QuadState":
        x = np.asarray(x, dtype=float)
        return cls(pos=x[0:3].copy(), vel=x[3:6].copy(), angles=x[6:9].copy(), rates=x[9:12].copy())

    @classmethod
    def hover(cls, x: float = 0.0, y: float = 0.0, z: float = 0.0, phi: float = 0.0) -> "QuadState":
        return cls.from_array([x, y, z, 0, 0, 0, phi, 0, 0, 0, 0, 0])


@dataclass(frozen=True)
class VirtualControl:
    """Channel commands; u1 is the hover-offset vertical acceleration"""
    u1: float
    u2: float
    u3: float
    u4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2, self.u3, self.u4])

    @classmethod
    def from_array(cls, u: Sequence[float]) -> "VirtualControl":
        return cls(float(u[0]), float(u[1]), float(u[2]), float(u[3]))


@dataclass(frozen=True)
class RotorForces:
    f: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.f))


@dataclass(frozen=True)
class MixerMatrices:
    """Allocation M, channel scaling D and the exact inverse M^T / 4"""
    M: np.ndarray
    D: np.ndarray
    M_inv: np.ndarray

    @classmethod
    def from_params(cls, p: QuadParams) -> "MixerMatrices":
        D = np.diag([1.0 / p.m, p.C / p.J_phi, p.ell / p.J_psi, p.ell / p.J_theta])
        return cls(M=MIXER_PATTERN, D=D, M_inv=MIXER_PATTERN.T / 4.0)


def forces_to_virtual(f: RotorForces, p: QuadParams) -> VirtualControl:
    """(u1 + g, u2, u3, u4) = D M F"""
    _require_finite(f.f, "rotor forces")
    mix = MixerMatrices.from_params(p)
    w = mix.D @ (mix.M @ f.f)
    w[0] -= p.g
    return VirtualControl.from_array(w)


def virtual_to_forces(u: VirtualControl, p: QuadParams) -> RotorForces:
    """F = M^T/4 D^-1 (u1 + g, u2, u3, u4)"""
    w = u.as_array()
    _require_finite(w, "virtual control")
    w[0] += p.g
    scale = np.array([p.m, p.J_phi / p.C, p.J_psi / p.ell, p.J_theta / p.ell])
    return RotorForces(f=(MIXER_PATTERN.T / 4.0) @ (scale * w))


def thrust_direction(phi: float, psi: float, theta: float) -> np.ndarray:
    """Unit thrust direction h3 expressed in the world frame"""
    cf, sf = math.cos(phi), math.sin(phi)
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([
        cf * st * cp + sf * sp,
        sf * st * cp - cf * sp,
        ct * cp,
    ])


def state_derivative_array(x: np.ndarray, u: np.ndarray, p: QuadParams,
                           friction_enabled: bool = False) -> np.ndarray:
    """Array form of state_derivative, used by the integrator"""
    phi, psi, theta = x[6], x[7], x[8]
    check_tilt(psi, theta)
    dx = np.empty(12)
    dx[0:3] = x[3:6]
    dx[3:6] = thrust_direction(phi, psi, theta) * (u[0] + p.g)
    dx[5] -= p.g
    dx[6:9] = x[9:12]
    # (phi, psi, theta) accelerations are (u2, u3, u4)
    dx[9:12] = u[1:4]
    if friction_enabled:
        dx[3:6] -= np.array([p.a_x, p.a_y, p.a_z]) * x[3:6]
        dx[9:12] -= np.array([p.a_phi, p.a_psi, p.a_theta]) * x[9:12]
    return dx


def state_derivative(s: QuadState, u: VirtualControl, p: QuadParams,
                     friction_enabled: bool = False) -> QuadState:
    """Time derivative of the state, returned in QuadState layout"""
    return QuadState.from_array(
        state_derivative_array(s.to_array(), u.as_array(), p, friction_enabled)
    )
