"""Built-in invariant suite behind `verify`: seeded random-point checks of the closed forms"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from data.presets import DEFAULT_PARAMS
from models.schemas import QuadParams, Target
from services.controller_service import CompensatorState, closed_loop_b_matrix, q4_b4, zeta_state
from services.dynamics_service import (
    MIXER_PATTERN,
    QuadState,
    RotorForces,
    VirtualControl,
    forces_to_virtual,
    state_derivative_array,
    thrust_direction,
    virtual_to_forces,
)
from services.gain_service import (
    alpha2_star,
    certify_pair,
    charpoly_mismatch,
    gamma_from_family,
    max_sym_eig,
    step_certificate,
    synthesize_alpha_chain,
)
from services.normal_form_service import (
    BetaBound,
    det_b22,
    h_hessian,
    h_jacobian,
    h_vector,
    q1_b1,
    q2_b21_b22,
    to_xi,
)
from services.simulation_service import rk4_step

logger = logging.getLogger(__name__)

FD_STEP = 1e-4
FD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    detail: str

    def row(self):
        return self.name, self.passed, self.detail


def _random_state(rng: np.random.Generator, max_tilt: float = 1.2) -> QuadState:
    return QuadState(
        pos=rng.normal(size=3),
        vel=rng.normal(size=3),
        angles=np.array([rng.uniform(-math.pi, math.pi),
                         rng.uniform(-max_tilt, max_tilt), rng.uniform(-max_tilt, max_tilt)]),
        rates=rng.normal(size=3),
    )


def _flow_difference(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, read: Callable[[np.ndarray], np.ndarray],
                     delta: float = FD_STEP) -> np.ndarray:
    """Central difference of read(y(t)) along y' = f(y), using one RK4 step each way"""
    forward = rk4_step(lambda t, z: f(z), y, delta)
    backward = rk4_step(lambda t, z: -f(z), y, delta)
    return (read(forward) - read(backward)) / (2.0 * delta)


def _relative(actual: np.ndarray, expected: np.ndarray) -> float:
    return float(np.max(np.abs(actual - expected)) / (1.0 + np.max(np.abs(expected))))


class VerificationService:
    """Each check draws from its own seeded stream, so results do not depend on check order"""

    def __init__(self, params: Optional[QuadParams] = None):
        self.params = params or DEFAULT_PARAMS

    def check_mixer(self, rng: np.random.Generator, n: int) -> CheckResult:
        p = self.params
        worst = float(np.max(np.abs(MIXER_PATTERN @ MIXER_PATTERN.T - 4.0 * np.eye(4))))
        for _ in range(n):
            f = rng.uniform(-5.0, 5.0, size=4)
            back = virtual_to_forces(forces_to_virtual(RotorForces(f=f), p), p).f
            worst = max(worst, float(np.linalg.norm(back - f) / np.linalg.norm(f)))
        return CheckResult("mixer_roundtrip", worst < 1e-12, worst, f"max relative error {worst:.2e}")

    def check_h_identities(self, rng: np.random.Generator, n: int) -> CheckResult:
        worst = 0.0
        eps = 1e-6
        for _ in range(n):
            phi, psi, theta = _random_state(rng).angles
            h3 = thrust_direction(phi, psi, theta)
            worst = max(worst, abs(float(np.linalg.norm(h3)) - 1.0))
            worst = max(worst, float(np.max(np.abs(h3[:2] - h_vector(phi, psi, theta)))))
            angles = np.array([phi, psi, theta])
            J = h_jacobian(*angles)
            H = h_hessian(*angles)
            for i in range(3):
                step = np.zeros(3)
                step[i] = eps
                dh = (h_vector(*(angles + step)) - h_vector(*(angles - step))) / (2 * eps)
                dJ = (h_jacobian(*(angles + step)) - h_jacobian(*(angles - step))) / (2 * eps)
                worst = max(worst, float(np.max(np.abs(dh - J[:, i]))), float(np.max(np.abs(dJ - H[:, :, i]))))
        return CheckResult("h_identities", worst < 1e-7, worst, f"max deviation {worst:.2e}")

    def check_normal_form(self, rng: np.random.Generator, n: int) -> CheckResult:
        """xi1' = xi2, xi2' = q1 + b1 (u1, u2), xi3' = xi4, xi4' = beta xi5, xi5' = xi6"""
        p, t = self.params, Target()
        worst = 0.0
        for _ in range(n):
            s = _random_state(rng)
            u = np.array([rng.uniform(-0.5, 0.5) * p.g, *rng.normal(size=3)])
            xi = to_xi(s, t, u[0], p.g)
            q1, b1 = q1_b1(s.angles[1], s.angles[2], p.g)
            expected = np.concatenate([xi.xi2, q1 + b1 @ u[:2], xi.xi4, xi.beta * xi.xi5, xi.xi6])

            def read(y: np.ndarray) -> np.ndarray:
                z = to_xi(QuadState.from_array(y), t, u[0], p.g)
                return np.concatenate([z.xi1, z.xi2, z.xi3, z.xi4, z.xi5])

            fd = _flow_difference(lambda y: state_derivative_array(y, u, p), s.to_array(), read)
            worst = max(worst, _relative(fd, expected))
        return CheckResult("normal_form_chain", worst < FD_TOL, worst, f"max relative residual {worst:.2e}")

    def check_q2_b22(self, rng: np.random.Generator, n: int) -> CheckResult:
        p = self.params
        worst, det_gap = 0.0, 0.0
        for _ in range(n):
            s = _random_state(rng)
            u = np.array([rng.uniform(-0.5, 0.5) * p.g, *rng.normal(size=3)])
            q2, b21, b22 = q2_b21_b22(*s.angles, s.rates, p.g)
            expected = q2 + b21[:, 0] * u[1] + b22 @ u[2:4]

            def read(y: np.ndarray) -> np.ndarray:
                return p.g * h_jacobian(*y[6:9]) @ y[9:12]

            fd = _flow_difference(lambda y: state_derivative_array(y, u, p), s.to_array(), read)
            worst = max(worst, _relative(fd, expected))
            closed = det_b22(s.angles[1], s.angles[2], p.g)
            det_gap = max(det_gap, abs(float(np.linalg.det(b22)) - closed) / p.g ** 2)
        ok = worst < FD_TOL and det_gap < 1e-12
        return CheckResult("q2_b22_finite_difference", ok, max(worst, det_gap),
                           f"max relative residual {worst:.2e}, det closed-form gap {det_gap:.2e}")

    def check_b22_rotation(self, rng: np.random.Generator, n: int) -> CheckResult:
        g = self.params.g
        worst = 0.0
        for _ in range(n):
            phi = rng.uniform(-math.pi, math.pi)
            _, _, b22 = q2_b21_b22(phi, 0.0, 0.0, np.zeros(3), g)
            worst = max(worst, float(np.max(np.abs(b22.T @ b22 - g * g * np.eye(2)))))
        return CheckResult("b22_rotation_at_hover", worst < 1e-9, worst, f"max |b22^T b22 - g^2 I| {worst:.2e}")

    def _random_comp(self, rng: np.random.Generator) -> CompensatorState:
        return CompensatorState(u12=np.array([rng.uniform(-0.5, 0.5) * self.params.g, rng.normal()]),
                                rho12=rng.normal(size=2))

    def check_q4_b4(self, rng: np.random.Generator, n: int, q4_b4_fn=q4_b4) -> CheckResult:
        p, t = self.params, Target()
        worst = 0.0
        for _ in range(n):
            s = _random_state(rng)
            comp = self._random_comp(rng)
            U = rng.normal(size=4)
            q4, b4 = q4_b4_fn(s, comp, p.g)
            expected = q4 + b4 @ U

            def f(y: np.ndarray) -> np.ndarray:
                u = np.array([y[12], y[13], U[2], U[3]])
                return np.concatenate([state_derivative_array(y[:12], u, p), y[14:16], U[:2]])

            def read(y: np.ndarray) -> np.ndarray:
                return zeta_state(QuadState.from_array(y[:12]), t, CompensatorState.from_array(y[12:16]), p.g).zeta4

            fd = _flow_difference(f, np.concatenate([s.to_array(), comp.to_array()]), read)
            worst = max(worst, _relative(fd, expected))
        return CheckResult("q4_b4_finite_difference", worst < FD_TOL, worst, f"max relative residual {worst:.2e}")

    def check_b4_structure(self, rng: np.random.Generator, n: int) -> CheckResult:
        """q4 vanishes at zeta = 0, |det b4| = (u1 + g)^2 cos(psi), hover block is a scaled rotation"""
        g = self.params.g
        q4_zero, det_gap, block_gap, min_det = 0.0, 0.0, 0.0, math.inf
        for _ in range(n):
            phi = rng.uniform(-math.pi, math.pi)
            q4, b4 = q4_b4(QuadState.hover(phi=phi), CompensatorState(np.zeros(2), np.zeros(2)), g)
            q4_zero = max(q4_zero, float(np.max(np.abs(q4))))
            B = b4[2:4, 2:4]
            block_gap = max(block_gap, float(np.max(np.abs(B.T @ B - g * g * np.eye(2)))))
            s = _random_state(rng)
            comp = self._random_comp(rng)
            _, b4 = q4_b4(s, comp, g)
            det = abs(float(np.linalg.det(b4)))
            thrust = comp.u12[0] + g
            det_gap = max(det_gap, abs(det - thrust ** 2 * math.cos(s.angles[1])) / thrust ** 2)
            min_det = min(min_det, det)
        ok = q4_zero < 1e-12 and det_gap < 1e-9 and block_gap < 1e-9 and min_det > 0
        return CheckResult("b4_structure", ok, max(q4_zero, det_gap, block_gap),
                           f"|q4(0)| {q4_zero:.1e}, det gap {det_gap:.1e}, "
                           f"block gap {block_gap:.1e}, min |det| {min_det:.3g}")

    def check_alpha2_threshold(self, rng: np.random.Generator, n: int) -> CheckResult:
        failures = 0
        for _ in range(n):
            a1 = rng.uniform(0.3, 3.0)
            beta = BetaBound(beta_min=rng.uniform(0.2, 1.0), beta_max=rng.uniform(1.0, 2.0))
            star = alpha2_star(a1, beta.beta_min)
            if not (certify_pair(a1, 1.01 * star, beta) < 0 <= certify_pair(a1, 0.99 * star, beta)):
                failures += 1
        return CheckResult("alpha2_threshold", failures == 0, float(failures),
                           f"{failures}/{n} points where the threshold is not sharp")

    def check_vertex_sufficiency(self, rng: np.random.Generator, n: int) -> CheckResult:
        """A chain certified at both vertices stays certified at 50 interior beta values"""
        worst = -math.inf
        for _ in range(n):
            beta = BetaBound(beta_min=rng.uniform(0.3, 1.0), beta_max=rng.uniform(1.0, 1.8))
            chain = synthesize_alpha_chain(beta, alpha1=rng.uniform(0.5, 2.0))
            for b in np.linspace(beta.beta_min, beta.beta_max, 50):
                worst = max(worst, max_sym_eig(step_certificate(chain.alphas, 4, b)))
        return CheckResult("vertex_sufficiency", worst < 0, worst, f"max interior eigenvalue {worst:.3e}")

    def check_closed_loop_b(self, rng: np.random.Generator, n: int) -> CheckResult:
        worst = 0.0
        hurwitz = True
        for i in range(n):
            family = ("newton", "butterworth")[i % 2]
            gamma = gamma_from_family(family, omega=rng.uniform(0.5, 3.0))
            A = closed_loop_b_matrix(gamma)
            worst = max(worst, charpoly_mismatch(A, gamma.coefficients(), power=4))
            hurwitz = hurwitz and bool(np.all(np.roots(gamma.coefficients()).real < 0))
        return CheckResult("closed_loop_b_polynomial", worst < 1e-9 and hurwitz, worst,
                           f"max charpoly mismatch {worst:.2e}")

    def run(self, seed: int = 0, trials: int = 100, perturb: Optional[str] = None) -> List[CheckResult]:
        q4_b4_fn = q4_b4
        if perturb == "b4":
            def q4_b4_fn(s, comp, g):
                q4, b4 = q4_b4(s, comp, g)
                b4 = b4.copy()
                b4[2, 2] *= 1.01
                return q4, b4
        elif perturb is not None:
            raise ValueError(f"unknown perturbation {perturb!r}")

        checks: Dict[str, Callable[[np.random.Generator, int], CheckResult]] = {
            "mixer": self.check_mixer,
            "h": self.check_h_identities,
            "normal_form": self.check_normal_form,
            "q2_b22": self.check_q2_b22,
            "b22_rotation": self.check_b22_rotation,
            "q4_b4": lambda rng, n: self.check_q4_b4(rng, n, q4_b4_fn),
            "b4_structure": self.check_b4_structure,
            "alpha2": self.check_alpha2_threshold,
            "vertex": lambda rng, n: self.check_vertex_sufficiency(rng, max(1, n // 5)),
            "closed_loop_b": self.check_closed_loop_b,
        }
        results = []
        for index, (key, check) in enumerate(checks.items()):
            result = check(np.random.default_rng([seed, index]), trials)
            if not result.passed:
                logger.warning(f"Check {result.name} failed: {result.detail}")
            results.append(result)
        logger.info(f"Verification: {sum(r.passed for r in results)}/{len(results)} checks passed")
        return results


# Singleton instance
_verification_service: Optional[VerificationService] = None


def get_verification_service() -> VerificationService:
    """Get singleton verification service"""
    global _verification_service
    if _verification_service is None:
        _verification_service = VerificationService()
    return _verification_service
