"""Normal-form coordinates: xi blocks, the h direction function and the q/b terms"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from models.schemas import Target
from services.dynamics_service import QuadState, check_tilt
from services.errors import InvalidInputError, SingularityError

G_DEFAULT = 9.81
# |det| below this aborts a control step
SINGULAR_DET = 1e-9
TILT_EPS = 1e-6

# xi_ij: block i, component j
XI_COLUMNS: List[str] = [f"xi{i}{j}" for i in range(1, 7) for j in (1, 2)]


def h_vector(phi: float, psi: float, theta: float) -> np.ndarray:
    """Horizontal components of the thrust direction"""
    cf, sf = math.cos(phi), math.sin(phi)
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([cf * st * cp + sf * sp, sf * st * cp - cf * sp])


def h_jacobian(phi: float, psi: float, theta: float) -> np.ndarray:
    """2x3 Jacobian of h with columns (d/dphi, d/dpsi, d/dtheta)"""
    cf, sf = math.cos(phi), math.sin(phi)
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([
        [-sf * st * cp + cf * sp, -cf * st * sp + sf * cp, cf * ct * cp],
        [cf * st * cp + sf * sp, -sf * st * sp - cf * cp, sf * ct * cp],
    ])


def h_hessian(phi: float, psi: float, theta: float) -> np.ndarray:
    """Second derivatives of h, shape (2, 3, 3)"""
    cf, sf = math.cos(phi), math.sin(phi)
    cp, sp = math.cos(psi), math.sin(psi)
    ct, st = math.cos(theta), math.sin(theta)
    h1 = cf * st * cp + sf * sp
    h2 = sf * st * cp - cf * sp
    H1 = np.array([
        [-h1, sf * st * sp + cf * cp, -sf * ct * cp],
        [sf * st * sp + cf * cp, -h1, -cf * ct * sp],
        [-sf * ct * cp, -cf * ct * sp, -cf * st * cp],
    ])
    H2 = np.array([
        [-h2, -cf * st * sp + sf * cp, cf * ct * cp],
        [-cf * st * sp + sf * cp, -h2, -sf * ct * sp],
        [cf * ct * cp, -sf * ct * sp, -sf * st * cp],
    ])
    return np.stack([H1, H2])


def tilt_cosine(psi: float, theta: float) -> float:
    return math.cos(theta) * math.cos(psi)


def tilt_cosine_gradient(psi: float, theta: float) -> np.ndarray:
    """Gradient of cos(theta)cos(psi) in (phi, psi, theta)"""
    return np.array([0.0, -math.cos(theta) * math.sin(psi), -math.sin(theta) * math.cos(psi)])


def tilt_cosine_hessian(psi: float, theta: float) -> np.ndarray:
    c = math.cos(theta) * math.cos(psi)
    s = math.sin(theta) * math.sin(psi)
    return np.array([
        [0.0, 0.0, 0.0],
        [0.0, -c, s],
        [0.0, s, -c],
    ])


@dataclass(frozen=True)
class BetaBound:
    """Interval [beta_min, beta_max] of the nonstationary gain"""
    beta_min: float
    beta_max: float
    alpha_sat: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.beta_min) and math.isfinite(self.beta_max)):
            raise InvalidInputError("beta bounds must be finite")
        if self.beta_min <= 0:
            raise InvalidInputError(f"beta_min must be positive, got {self.beta_min}")
        if not self.beta_min <= 1.0 <= self.beta_max:
            raise InvalidInputError(
                f"beta interval must satisfy beta_min <= 1 <= beta_max, got [{self.beta_min}, {self.beta_max}]"
            )

    @classmethod
    def from_saturation(cls, alpha_sat: float) -> "BetaBound":
        """Bounds implied by saturating u1 at L = alpha * g"""
        if not 0.0 < alpha_sat < 1.0:
            raise InvalidInputError(f"alpha_sat must satisfy alpha in (0, 1), got {alpha_sat}")
        return cls(beta_min=1.0 - alpha_sat, beta_max=1.0 + alpha_sat, alpha_sat=alpha_sat)

    @classmethod
    def constant(cls) -> "BetaBound":
        return cls(beta_min=1.0, beta_max=1.0)

    @property
    def vertices(self) -> Tuple[float, float]:
        return (self.beta_min, self.beta_max)

    def contains(self, beta: float, tol: float = 1e-12) -> bool:
        return self.beta_min - tol <= beta <= self.beta_max + tol


@dataclass(frozen=True)
class XiState:
    """Error coordinates of the cascade; xi5 = g*h and xi6 = its time derivative"""
    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray
    xi4: np.ndarray
    xi5: np.ndarray
    xi6: np.ndarray
    beta: float = field(default=1.0)

    def stack(self) -> np.ndarray:
        return np.concatenate([self.xi1, self.xi2, self.xi3, self.xi4, self.xi5, self.xi6])

    @property
    def regulated_error(self) -> np.ndarray:
        """(z, phi, x, y) errors"""
        return np.concatenate([self.xi1, self.xi3])


def beta_of(u1: float, g: float = G_DEFAULT) -> float:
    """beta = (u1 + g) / g"""
    return (u1 + g) / g


def to_xi(s: QuadState, t: Target, u1: float = 0.0, g: float = G_DEFAULT) -> XiState:
    phi, psi, theta = s.angles
    return XiState(
        xi1=np.array([s.pos[2] - t.z_star, phi - t.phi_star]),
        xi2=np.array([s.vel[2], s.rates[0]]),
        xi3=np.array([s.pos[0] - t.x_star, s.pos[1] - t.y_star]),
        xi4=np.array([s.vel[0], s.vel[1]]),
        xi5=g * h_vector(phi, psi, theta),
        xi6=g * (h_jacobian(phi, psi, theta) @ s.rates),
        beta=beta_of(u1, g),
    )


def q1_b1(psi: float, theta: float, g: float = G_DEFAULT) -> Tuple[np.ndarray, np.ndarray]:
    """xi2' = q1 + b1 (u1, u2)"""
    check_tilt(psi, theta)
    c = tilt_cosine(psi, theta)
    return np.array([g * (c - 1.0), 0.0]), np.diag([c, 1.0])


def q2_b21_b22(phi: float, psi: float, theta: float, rates: np.ndarray,
               g: float = G_DEFAULT) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """xi6' = q2 + b21 u2 + b22 (u3, u4) when the angular accelerations are (u2, u3, u4)"""
    check_tilt(psi, theta)
    if math.cos(psi) < TILT_EPS or math.cos(theta) < TILT_EPS:
        raise SingularityError(f"tilt too close to pi/2: roll={psi:.6g}, pitch={theta:.6g}")
    J = h_jacobian(phi, psi, theta)
    H = h_hessian(phi, psi, theta)
    r = np.asarray(rates, dtype=float)
    q2 = g * np.einsum("i,kij,j->k", r, H, r)
    b21 = g * J[:, 0:1]
    b22 = g * J[:, 1:3]
    det = float(np.linalg.det(b22))
    if abs(det) < SINGULAR_DET:
        raise SingularityError(f"b22 is singular (det={det:.3e})", det=det)
    return q2, b21, b22


def det_b22(psi: float, theta: float, g: float = G_DEFAULT) -> float:
    """Closed form g^2 cos(theta) cos(psi)^2"""
    return g * g * math.cos(theta) * math.cos(psi) ** 2
