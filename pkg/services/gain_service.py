"""Gain synthesis and certification for both controllers"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from services.errors import InvalidInputError, SynthesisError
from services.normal_form_service import BetaBound

logger = logging.getLogger(__name__)

# Search budget: the same total increase as 60 doublings
SEARCH_DOUBLINGS = 60
BISECTION_STEPS = 48
DECAY_RATIO = 1e-3
DESCENT_SLACK = 1e-8


@dataclass(frozen=True)
class PDGains:
    """Altitude/yaw gains K1 = diag(k11, k12), K2 = diag(k21, k22)"""
    k1: np.ndarray
    k2: np.ndarray
    allow_zero: bool = False

    def __post_init__(self):
        for name, v in (("K1", self.k1), ("K2", self.k2)):
            if v.shape != (2,) or not np.all(np.isfinite(v)):
                raise InvalidInputError(f"{name} needs two finite diagonal entries")
            bad = v < 0 if self.allow_zero else v <= 0
            if np.any(bad):
                raise InvalidInputError(f"{name} diagonal entries must be positive, got {v.tolist()}")

    @property
    def K1(self) -> np.ndarray:
        return np.diag(self.k1)

    @property
    def K2(self) -> np.ndarray:
        return np.diag(self.k2)

    def channel_matrix(self, channel: int) -> np.ndarray:
        """Companion block [[0, 1], [-k1i, -k2i]]; channel 0 is altitude, 1 is yaw"""
        return np.array([[0.0, 1.0], [-self.k1[channel], -self.k2[channel]]])

    def block_diagonal(self) -> np.ndarray:
        """Closed loop in the regrouped order (z, z', phi, phi')"""
        F = np.zeros((4, 4))
        F[0:2, 0:2] = self.channel_matrix(0)
        F[2:4, 2:4] = self.channel_matrix(1)
        return F


@dataclass(frozen=True)
class KVector:
    """chi-coordinate feedback u = k^T chi"""
    k1: float
    k2: float
    k3: float
    k4: float
    allow_zero: bool = False
    # skips the sign rule; certify_chi_closed_loop still judges such a k
    unchecked: bool = False

    def __post_init__(self):
        k = self.as_array()
        if not np.all(np.isfinite(k)):
            raise InvalidInputError("k-vector must be finite")
        if self.unchecked:
            return
        bad = k > 0 if self.allow_zero else k >= 0
        if np.any(bad):
            raise InvalidInputError(f"k-vector entries must be strictly negative, got {k.tolist()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.k4])

    def diagonal_entries(self) -> np.ndarray:
        """(k3j, k4j, k5j, k6j) of the horizontal K matrices"""
        return -self.as_array()

    @classmethod
    def from_array(cls, k: Sequence[float], allow_zero: bool = False, unchecked: bool = False) -> "KVector":
        return cls(float(k[0]), float(k[1]), float(k[2]), float(k[3]), allow_zero=allow_zero, unchecked=unchecked)


@dataclass(frozen=True)
class AlphaChain:
    """Backstepping parameters with the certificate margin of each step"""
    alphas: np.ndarray
    beta: BetaBound
    margins: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.alphas.shape != (4,) or np.any(self.alphas <= 0):
            raise InvalidInputError(f"alpha chain needs four positive entries, got {self.alphas.tolist()}")


@dataclass(frozen=True)
class GammaSet:
    """Controller B polynomial s^4 + g4 s^3 + g3 s^2 + g2 s + g1"""
    gamma: np.ndarray
    family: str
    omega: Optional[float] = None

    def __post_init__(self):
        if self.gamma.shape != (4,) or not np.all(np.isfinite(self.gamma)):
            raise InvalidInputError("gamma needs four finite entries")
        if np.any(self.gamma <= 0):
            raise InvalidInputError(f"gamma entries must be positive, got {self.gamma.tolist()}")
        if not is_hurwitz(self.companion()):
            raise InvalidInputError(f"polynomial with gamma={self.gamma.tolist()} is not Hurwitz")

    def coefficients(self) -> np.ndarray:
        """Monic coefficients in descending powers"""
        g1, g2, g3, g4 = self.gamma
        return np.array([1.0, g4, g3, g2, g1])

    def companion(self) -> np.ndarray:
        return companion_matrix(self.gamma)

    def poles(self) -> np.ndarray:
        return np.roots(self.coefficients())


def companion_matrix(gamma: Sequence[float]) -> np.ndarray:
    A = np.zeros((4, 4))
    A[0, 1] = A[1, 2] = A[2, 3] = 1.0
    A[3, :] = -np.asarray(gamma, dtype=float)
    return A


def is_hurwitz(A: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def max_sym_eig(S: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(S)[-1])


def pair_matrix(alpha1: float, alpha2: float, beta: float) -> np.ndarray:
    """Quadratic form left after V2' = -alpha1 V2 + y^T M y"""
    off = 1.0 - alpha1 ** 2
    return np.array([[-alpha1, off], [off, 3.0 * alpha1 - 2.0 * alpha2 * beta]])


def phi_matrix(alphas: Sequence[float], beta: float) -> np.ndarray:
    """y-coordinate closed loop under u = -alpha4 y4"""
    a1, a2, a3, a4 = alphas
    d = a1 - a2 * beta
    return np.array([
        [-a1, 1.0, 0.0, 0.0],
        [-a1 ** 2, d, beta, 0.0],
        [-a1 ** 2 * a2, a2 * d, a2 * beta - a3, 1.0],
        [-a1 ** 2 * a2 * a3, a2 * a3 * d, a3 * (a2 * beta - a3), a3 - a4],
    ])


def backstepping_transform(alphas: Sequence[float]) -> np.ndarray:
    """T with y = T chi"""
    a1, a2, a3 = alphas[0], alphas[1], alphas[2]
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [a1, 1.0, 0.0, 0.0],
        [a1 * a2, a2, 1.0, 0.0],
        [a1 * a2 * a3, a2 * a3, a3, 1.0],
    ])


def chi_matrix(k: KVector, beta: float) -> np.ndarray:
    """Closed-loop matrix of the auxiliary chain with u = k^T chi"""
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[1, 2] = beta
    A[2, 3] = 1.0
    A[3, :] = k.as_array()
    return A


def step_certificate(alphas: Sequence[float], step: int, beta: float) -> np.ndarray:
    """Symmetric part of the leading step x step block of the y-dynamics"""
    padded = list(alphas) + [0.0] * (4 - len(alphas))
    P = phi_matrix(padded, beta)[:step, :step]
    return P + P.T


def step_margin(alphas: Sequence[float], step: int, beta: BetaBound) -> float:
    """Most positive eigenvalue of the step certificate over both beta vertices"""
    return max(max_sym_eig(step_certificate(alphas, step, b)) for b in beta.vertices)


# Backstepping chain

def alpha2_star(alpha1: float, beta_min: float) -> float:
    """Closed-form threshold on alpha2, taken at the worst-case vertex beta_min"""
    if alpha1 <= 0 or beta_min <= 0:
        raise InvalidInputError(f"alpha1 and beta_min must be positive, got {alpha1}, {beta_min}")
    return (3.0 * alpha1 ** 2 + (alpha1 ** 2 - 1.0) ** 2) / (2.0 * alpha1 * beta_min)


def certify_pair(alpha1: float, alpha2: float, beta: BetaBound) -> float:
    """Largest eigenvalue of the 2x2 pair certificate over the beta vertices; negative certifies"""
    return max(max_sym_eig(pair_matrix(alpha1, alpha2, b)) for b in beta.vertices)


def _max_search_steps(growth: float) -> int:
    return int(math.ceil(SEARCH_DOUBLINGS * math.log(2.0) / math.log(growth)))


def _grow_until_certified(margin_fn: Callable[[float], float], start: float, growth: float,
                          label: str, margins: Dict[str, float]) -> Tuple[float, float]:
    value = start
    margin = margin_fn(value)
    for _ in range(_max_search_steps(growth)):
        if margin < 0:
            return value, margin
        value *= growth
        margin = margin_fn(value)
        logger.debug(f"{label}: trying {value:.6g}, margin {margin:.3e}")
    margins[label] = margin
    raise SynthesisError(f"{label} not certified after {SEARCH_DOUBLINGS} doublings", margins=margins)


def _numeric_threshold(margin_fn: Callable[[float], float], failing: float, passing: float) -> float:
    """Bisection for the boundary between a failing and a certified value"""
    lo, hi = failing, passing
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if margin_fn(mid) < 0:
            hi = mid
        else:
            lo = mid
    return hi


def synthesize_alpha_chain(beta: BetaBound, alpha1: float = 1.0, growth: float = 1.1) -> AlphaChain:
    """Steps 1-4 of the backstepping construction, each certified at both beta vertices.

    alpha2 starts at growth * alpha2_star. alpha3 and alpha4 have no closed-form
    threshold, so it is located numerically (geometric search, then bisection) and
    the chosen value is growth times that threshold.
    """
    if not isinstance(beta, BetaBound):
        raise InvalidInputError("beta must be a BetaBound")
    if alpha1 <= 0:
        raise InvalidInputError(f"alpha1 must be positive, got {alpha1}")
    if growth <= 1:
        raise InvalidInputError(f"growth must exceed 1, got {growth}")

    margins: Dict[str, float] = {}
    a2, m2 = _grow_until_certified(
        lambda a: certify_pair(alpha1, a, beta),
        alpha2_star(alpha1, beta.beta_min) * growth, growth, "alpha2", margins,
    )
    margins["alpha2"] = m2
    alphas = [alpha1, a2]

    # the diagonal of step j is nonnegative at these lower bounds, so they fail
    lower_bounds = {3: lambda: alphas[1] * beta.beta_max, 4: lambda: alphas[2]}
    for step in (3, 4):
        label = f"alpha{step}"

        def margin_fn(a: float, step: int = step) -> float:
            return step_margin(alphas + [a], step, beta)

        floor = lower_bounds[step]()
        passing, _ = _grow_until_certified(margin_fn, floor * growth, growth, label, margins)
        threshold = _numeric_threshold(margin_fn, floor, passing)
        value, margin = _grow_until_certified(margin_fn, threshold * growth, growth, label, margins)
        margins[label] = margin
        alphas.append(value)

    chain = AlphaChain(alphas=np.array(alphas), beta=beta, margins=margins)
    logger.info(
        f"alpha chain for beta in [{beta.beta_min:g}, {beta.beta_max:g}]: "
        f"{np.array2string(chain.alphas, precision=4)}"
    )
    return chain


def k_from_alpha(chain: AlphaChain) -> KVector:
    a1, a2, a3, a4 = chain.alphas
    return KVector(-a1 * a2 * a3 * a4, -a2 * a3 * a4, -a3 * a4, -a4)


def alpha_from_k(k: KVector) -> Optional[np.ndarray]:
    """Invert k_from_alpha; None when k has no positive alpha chain"""
    kk = k.as_array()
    if np.any(kk >= 0):
        return None
    a4 = -kk[3]
    a3 = kk[2] / kk[3]
    a2 = kk[1] / kk[2]
    a1 = kk[0] / kk[1]
    return np.array([a1, a2, a3, a4])


@dataclass
class ChainCertificate:
    """Full 4x4 Lyapunov certificate for V = |y|^2"""
    vertex_eigenvalues: Dict[float, np.ndarray]
    margin: float
    transform: np.ndarray
    condition: float
    horizon: float

    @property
    def passed(self) -> bool:
        return self.margin < 0


def _decay_horizon(margin: float, condition: float) -> float:
    """Time after which |chi| <= 1e-3 |chi(0)| follows from V' <= margin * V"""
    return 2.0 * math.log(condition / DECAY_RATIO) / abs(margin)


def certify_chain(chain: AlphaChain) -> ChainCertificate:
    eigs = {b: np.linalg.eigvalsh(step_certificate(chain.alphas, 4, b)) for b in chain.beta.vertices}
    margin = max(float(e[-1]) for e in eigs.values())
    T = backstepping_transform(chain.alphas)
    cond = float(np.linalg.cond(T))
    horizon = _decay_horizon(margin, cond) if margin < 0 else math.inf
    return ChainCertificate(vertex_eigenvalues=eigs, margin=margin, transform=T,
                            condition=cond, horizon=horizon)


@dataclass
class ChiCertificate:
    vertex_eigenvalues: Dict[float, np.ndarray]
    vertex_ok: bool
    horizon: float = 0.0
    trials: int = 0
    decayed: int = 0
    worst_ratio: float = math.nan
    descent_checked: bool = False
    max_descent_violation: float = math.nan
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.vertex_ok and self.decayed == self.trials and not self.failures


def _beta_signal(rng: np.random.Generator, kind: str, beta: BetaBound,
                 times: np.ndarray, horizon: float) -> Tuple[np.ndarray, str]:
    lo, hi = beta.vertices
    if kind == "piecewise":
        dwell = horizon / rng.uniform(10.0, 80.0)
        switches = np.cumsum(rng.exponential(dwell, size=int(4 * horizon / dwell) + 8))
        levels = rng.uniform(lo, hi, size=switches.size + 1)
        signal = levels[np.searchsorted(switches, times)]
        return signal, f"piecewise-constant, mean dwell {dwell:.4g}s"
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    amp = half * rng.uniform(0.5, 1.0)
    omega = rng.uniform(0.1, 10.0)
    phase = rng.uniform(0.0, 2 * math.pi)
    return mid + amp * np.sin(omega * times + phase), f"sinusoid amp {amp:.4g} omega {omega:.4g} rad/s"


def certify_chi_closed_loop(k: KVector, beta: BetaBound, trials: int = 100, seed: int = 0,
                            steps: int = 4000, levels: int = 257) -> ChiCertificate:
    """Vertex eigenvalue check plus randomized beta(t) decay and Lyapunov descent trials.

    Each trial holds beta constant over a step (quantized onto a grid inside the
    interval) and propagates with the exact step matrix, so stiffness of the gains
    does not limit the step size.
    """
    eigs = {b: np.linalg.eigvals(chi_matrix(k, b)) for b in beta.vertices}
    bad = [b for b, e in eigs.items() if np.any(e.real >= 0)]
    if bad:
        failures = [f"vertex beta={b:g}: max real eigenvalue {eigs[b].real.max():.4g}" for b in bad]
        logger.warning(f"chi closed loop fails vertex check: {failures}")
        return ChiCertificate(vertex_eigenvalues=eigs, vertex_ok=False, failures=failures)

    alphas = alpha_from_k(k)
    T = None
    margin = math.nan
    if alphas is not None:
        T = backstepping_transform(alphas)
        margin = max(max_sym_eig(step_certificate(alphas, 4, b)) for b in beta.vertices)
    if T is not None and margin < 0:
        horizon = _decay_horizon(margin, float(np.linalg.cond(T)))
    else:
        # no quadratic certificate; fall back to the slowest frozen mode
        slowest = min(abs(e.real.max()) for e in eigs.values())
        horizon = 2.0 * math.log(1.0 / DECAY_RATIO ** 2) / slowest
        T = None

    dt = horizon / steps
    grid = np.linspace(beta.beta_min, beta.beta_max, levels) if beta.beta_max > beta.beta_min \
        else np.array([beta.beta_min])
    step_maps = np.stack([expm(chi_matrix(k, b) * dt) for b in grid])
    mid_times = (np.arange(steps) + 0.5) * dt

    cert = ChiCertificate(vertex_eigenvalues=eigs, vertex_ok=True, horizon=horizon, trials=trials,
                          descent_checked=T is not None)
    idx = np.empty((trials, steps), dtype=int)
    labels = []
    x0 = np.empty((trials, 4))
    for i in range(trials):
        rng = np.random.default_rng([seed, i])
        kind = "piecewise" if i % 2 == 0 else "sinusoid"
        signal, label = _beta_signal(rng, kind, beta, mid_times, horizon)
        if grid.size > 1:
            pos = (signal - grid[0]) / (grid[-1] - grid[0]) * (grid.size - 1)
            idx[i] = np.clip(np.rint(pos), 0, grid.size - 1).astype(int)
        else:
            idx[i] = 0
        labels.append(label)
        v = rng.standard_normal(4)
        x0[i] = v / np.linalg.norm(v)

    X = x0.copy()
    V_prev = np.sum((X @ T.T) ** 2, axis=1) if T is not None else None
    V0 = V_prev.copy() if V_prev is not None else None
    worst_rise = np.full(trials, -np.inf)
    for n in range(steps):
        X = np.einsum("tij,tj->ti", step_maps[idx[:, n]], X)
        if V_prev is not None:
            V = np.sum((X @ T.T) ** 2, axis=1)
            worst_rise = np.maximum(worst_rise, (V - V_prev) / V0)
            V_prev = V

    ratios = np.linalg.norm(X, axis=1)
    cert.decayed = int(np.sum(ratios < DECAY_RATIO))
    cert.worst_ratio = float(ratios.max())
    if T is not None:
        cert.max_descent_violation = float(max(worst_rise.max(), 0.0))
    for i in range(trials):
        if ratios[i] >= DECAY_RATIO:
            cert.failures.append(f"trial {i} ({labels[i]}): |chi(T)|/|chi(0)| = {ratios[i]:.3e}")
        elif T is not None and worst_rise[i] > DESCENT_SLACK:
            cert.failures.append(f"trial {i} ({labels[i]}): V rose by {worst_rise[i]:.3e} V(0) in one step")
    if cert.failures:
        logger.warning(f"chi certification: {len(cert.failures)} failing trials")
    return cert


# Pole placement

def butterworth_poles(omega: float, order: int = 4) -> np.ndarray:
    """Left half-plane poles omega * exp(i pi (2k + n - 1) / 2n), k = 1..n"""
    if omega <= 0:
        raise InvalidInputError(f"omega must be positive, got {omega}")
    k = np.arange(1, order + 1)
    return omega * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))


def _check_conjugate_closed(poles: np.ndarray) -> None:
    if np.any(poles.real >= 0):
        raise InvalidInputError(f"poles must lie in the open left half-plane, got {poles.tolist()}")
    for p in poles:
        if abs(p.imag) > 0 and not np.any(np.isclose(poles, np.conj(p), atol=1e-12)):
            raise InvalidInputError(f"complex pole {p} has no conjugate partner")


def _poly_from_poles(poles: np.ndarray) -> np.ndarray:
    """Monic real coefficients, expanded one conjugate pair at a time"""
    coeffs = np.array([1.0])
    remaining = list(poles)
    while remaining:
        p = remaining.pop(0)
        if abs(p.imag) > 0:
            partner = min(range(len(remaining)), key=lambda j: abs(remaining[j] - np.conj(p)))
            remaining.pop(partner)
            factor = np.array([1.0, -2.0 * p.real, abs(p) ** 2])
        else:
            factor = np.array([1.0, -p.real])
        coeffs = np.polymul(coeffs, factor)
    return coeffs


def gamma_from_family(family: str, omega: Optional[float] = None,
                      poles: Optional[Sequence[complex]] = None,
                      values: Optional[Sequence[float]] = None) -> GammaSet:
    """Coefficients of a Newton, Butterworth, modal (given poles) or explicit quartic"""
    if family in ("newton", "butterworth"):
        if omega is None or not omega > 0:
            raise InvalidInputError(f"omega must be positive, got {omega}")
        if family == "newton":
            coeffs = np.array([1.0, 4 * omega, 6 * omega ** 2, 4 * omega ** 3, omega ** 4])
        else:
            coeffs = _poly_from_poles(butterworth_poles(omega))
    elif family == "modal":
        if poles is None or len(poles) != 4:
            raise InvalidInputError("modal family needs four poles")
        p = np.asarray(poles, dtype=complex)
        _check_conjugate_closed(p)
        coeffs = _poly_from_poles(p)
    elif family == "explicit":
        if values is None or len(values) != 4:
            raise InvalidInputError("explicit family needs gamma1..gamma4")
        return GammaSet(gamma=np.asarray(values, dtype=float), family=family, omega=omega)
    else:
        raise InvalidInputError(f"unknown polynomial family {family!r}")
    return GammaSet(gamma=coeffs[1:][::-1].copy(), family=family, omega=omega)


def kvector_from_polynomial(gamma: GammaSet) -> KVector:
    """k placing the frozen beta = 1 chi-loop poles at the roots of the gamma polynomial"""
    return KVector.from_array(-gamma.gamma)


def pd_gains_from_poles(altitude_poles: Sequence[complex], yaw_poles: Sequence[complex]) -> PDGains:
    """Per channel: k1 = p q, k2 = -(p + q), so s^2 + k2 s + k1 has roots p, q"""
    k1, k2 = [], []
    for poles in (altitude_poles, yaw_poles):
        p = np.asarray(poles, dtype=complex)
        if p.shape != (2,):
            raise InvalidInputError("each channel needs exactly two poles")
        _check_conjugate_closed(p)
        k1.append(float((p[0] * p[1]).real))
        k2.append(float(-(p[0] + p[1]).real))
    return PDGains(k1=np.array(k1), k2=np.array(k2))


def poles_from_pairs(pairs: Sequence[Sequence[float]]) -> List[complex]:
    """Config (re, im) pairs to complex numbers"""
    return [complex(re, im) for re, im in pairs]


def charpoly_mismatch(A: np.ndarray, coefficients: np.ndarray, power: int = 1) -> float:
    """Relative distance between det(sI - A) and coefficients**power"""
    expected = np.array([1.0])
    for _ in range(power):
        expected = np.polymul(expected, coefficients)
    actual = np.real(np.poly(A))
    return float(np.max(np.abs(actual - expected)) / np.max(np.abs(expected)))


class GainService:
    """Runs the synthesis pipeline and assembles the certification report"""

    def chain_report(self, beta: BetaBound, alpha1: float, growth: float,
                     trials: int, seed: int) -> Tuple[Dict, bool]:
        chain = synthesize_alpha_chain(beta, alpha1=alpha1, growth=growth)
        cert = certify_chain(chain)
        k = k_from_alpha(chain)
        chi = certify_chi_closed_loop(k, beta, trials=trials, seed=seed)
        report = {
            "alphas": chain.alphas,
            "alpha2_star": alpha2_star(alpha1, beta.beta_min),
            "step_margins": chain.margins,
            "k": k.as_array(),
            "horizontal_gains": k.diagonal_entries(),
            "certificate": {
                "passed": cert.passed,
                "margin": cert.margin,
                "vertex_eigenvalues": cert.vertex_eigenvalues,
                "transform": cert.transform,
                "condition": cert.condition,
                "decay_horizon": cert.horizon,
            },
            "chi_trials": {
                "passed": chi.passed,
                "trials": chi.trials,
                "decayed": chi.decayed,
                "worst_ratio": chi.worst_ratio,
                "max_descent_violation": chi.max_descent_violation,
                "horizon": chi.horizon,
                "failures": chi.failures[:10],
            },
        }
        return report, cert.passed and chi.passed

    def pd_report(self, pd: PDGains) -> Tuple[Dict, bool]:
        channels = {}
        ok = True
        for index, name in enumerate(("altitude", "yaw")):
            poles = np.linalg.eigvals(pd.channel_matrix(index))
            stable = bool(np.all(poles.real < 0))
            ok = ok and stable
            channels[name] = {"k1": pd.k1[index], "k2": pd.k2[index], "poles": poles, "hurwitz": stable}
        return channels, ok

    def family_report(self, gamma: GammaSet) -> Tuple[Dict, bool]:
        from services.controller_service import closed_loop_b_matrix

        A = closed_loop_b_matrix(gamma)
        mismatch = charpoly_mismatch(A, gamma.coefficients(), power=4)
        poles = gamma.poles()
        ok = is_hurwitz(gamma.companion()) and mismatch < 1e-9
        return {
            "family": gamma.family,
            "omega": gamma.omega,
            "gamma": gamma.gamma,
            "poles": poles,
            "pole_magnitudes": np.abs(poles),
            "closed_loop_charpoly_mismatch": mismatch,
            "hurwitz": ok,
        }, ok

    def build_report(self, beta: BetaBound, alpha1: float = 1.0, growth: float = 1.1, trials: int = 100,
                     seed: int = 0, pd: Optional[PDGains] = None,
                     gammas: Sequence[GammaSet] = ()) -> Tuple[Dict, bool]:
        """Full report; the flag is True iff every certificate passes. SynthesisError propagates"""
        logger.info(f"Synthesizing gains for beta in [{beta.beta_min:g}, {beta.beta_max:g}], alpha1={alpha1:g}")
        chain, passed = self.chain_report(beta, alpha1, growth, trials, seed)
        report = {
            "beta": {"beta_min": beta.beta_min, "beta_max": beta.beta_max, "alpha_sat": beta.alpha_sat},
            "chain": chain,
        }
        if pd is not None:
            report["pd"], ok = self.pd_report(pd)
            passed = passed and ok
        families = []
        for gamma in gammas:
            entry, ok = self.family_report(gamma)
            families.append(entry)
            passed = passed and ok
        report["families"] = families
        report["passed"] = passed
        if not passed:
            logger.warning("Gain certification failed; see report for margins")
        return report, passed


# Singleton instance
_gain_service: Optional[GainService] = None


def get_gain_service() -> GainService:
    """Get singleton gain service"""
    global _gain_service
    if _gain_service is None:
        _gain_service = GainService()
    return _gain_service
