"""Pydantic models for everything read from a run configuration file"""

import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1

# (real, imaginary) pair; complex poles must come with their conjugate
Pole = Tuple[float, float]
Vec2 = Tuple[float, float]
Vec3 = Tuple[float, float, float]
Vec4 = Tuple[float, float, float, float]


class StrictModel(BaseModel):
    """Frozen model that rejects unknown keys and non-finite floats"""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class QuadParams(StrictModel):
    """Physical constants of the quadcopter"""
    m: float = Field(1.0, gt=0, description="mass, kg")
    g: float = Field(9.81, gt=0, description="gravitational acceleration, m/s^2")
    ell: float = Field(0.2, gt=0, description="arm length, m")
    J_psi: float = Field(0.01, gt=0, description="roll inertia, kg m^2")
    J_theta: float = Field(0.01, gt=0, description="pitch inertia, kg m^2")
    J_phi: float = Field(0.02, gt=0, description="yaw inertia, kg m^2")
    C: float = Field(0.05, gt=0, description="reaction torque per unit thrust, m")
    a_x: float = Field(0.0, ge=0)
    a_y: float = Field(0.0, ge=0)
    a_z: float = Field(0.0, ge=0)
    a_psi: float = Field(0.0, ge=0)
    a_theta: float = Field(0.0, ge=0)
    a_phi: float = Field(0.0, ge=0)


class Target(StrictModel):
    """Desired altitude, yaw and horizontal position (roll = pitch = 0 implied)"""
    z_star: float = 0.0
    phi_star: float = 0.0
    x_star: float = 0.0
    y_star: float = 0.0


class InitialState(StrictModel):
    pos: Vec3 = (0.0, 0.0, 0.0)
    vel: Vec3 = (0.0, 0.0, 0.0)
    # (yaw, roll, pitch)
    angles: Vec3 = (0.0, 0.0, 0.0)
    rates: Vec3 = (0.0, 0.0, 0.0)

    @field_validator("angles")
    @classmethod
    def _tilt_domain(cls, v: Vec3) -> Vec3:
        if abs(v[1]) >= math.pi / 2 or abs(v[2]) >= math.pi / 2:
            raise ValueError("roll and pitch must satisfy |angle| < pi/2")
        return v


def _check_poles(poles: List[Pole], count: int) -> List[Pole]:
    if len(poles) != count:
        raise ValueError(f"expected {count} poles, got {len(poles)}")
    for re, _ in poles:
        if re >= 0:
            raise ValueError("requested poles must have negative real parts")
    return poles


class PDGainsConfig(StrictModel):
    """Altitude/yaw PD gains: explicit (k1, k2) pairs or per-channel pole requests"""
    k1: Optional[Vec2] = None
    k2: Optional[Vec2] = None
    altitude_poles: Optional[List[Pole]] = None
    yaw_poles: Optional[List[Pole]] = None

    @model_validator(mode="after")
    def _one_source(self) -> "PDGainsConfig":
        explicit = self.k1 is not None or self.k2 is not None
        poles = self.altitude_poles is not None or self.yaw_poles is not None
        if explicit == poles:
            raise ValueError("give either k1/k2 or altitude_poles/yaw_poles")
        if explicit and (self.k1 is None or self.k2 is None):
            raise ValueError("explicit PD gains need both k1 and k2")
        if poles:
            if self.altitude_poles is None or self.yaw_poles is None:
                raise ValueError("pole requests need both altitude_poles and yaw_poles")
            _check_poles(self.altitude_poles, 2)
            _check_poles(self.yaw_poles, 2)
        return self


class BacksteppingConfig(StrictModel):
    alpha1: float = Field(1.0, gt=0)
    growth: float = Field(1.1, gt=1)


class HorizontalGainsConfig(StrictModel):
    """One horizontal axis: explicit k-vector, a polynomial family, modal poles or a backstepping chain"""
    k: Optional[Vec4] = None
    family: Optional[Literal["newton", "butterworth"]] = None
    omega: Optional[float] = Field(None, gt=0)
    poles: Optional[List[Pole]] = None
    backstepping: Optional[BacksteppingConfig] = None

    @model_validator(mode="after")
    def _one_source(self) -> "HorizontalGainsConfig":
        sources = [self.k is not None, self.family is not None,
                   self.poles is not None, self.backstepping is not None]
        if sum(sources) != 1:
            raise ValueError("horizontal gains need exactly one of k, family, poles, backstepping")
        if self.family is not None and self.omega is None:
            raise ValueError("a polynomial family needs omega")
        if self.poles is not None:
            _check_poles(self.poles, 4)
        return self


class ControllerASection(StrictModel):
    kind: Literal["A"]
    alpha_sat: float = 0.5
    pd: PDGainsConfig
    horizontal: HorizontalGainsConfig
    # y-axis gains; the x-axis gains are reused when omitted
    horizontal_y: Optional[HorizontalGainsConfig] = None
    # permits zero gains, used only by fault-injection scenarios
    allow_zero_gains: bool = False

    @field_validator("alpha_sat")
    @classmethod
    def _alpha_range(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError(f"alpha_sat must satisfy alpha in (0, 1), got {v}")
        return v


class GammaConfig(StrictModel):
    """Controller B characteristic polynomial request"""
    family: Literal["newton", "butterworth", "modal", "explicit"]
    omega: Optional[float] = Field(None, gt=0)
    poles: Optional[List[Pole]] = None
    values: Optional[Vec4] = None

    @model_validator(mode="after")
    def _family_fields(self) -> "GammaConfig":
        if self.family in ("newton", "butterworth") and self.omega is None:
            raise ValueError(f"family {self.family} needs omega")
        if self.family == "modal":
            if self.poles is None:
                raise ValueError("family modal needs poles")
            _check_poles(self.poles, 4)
        if self.family == "explicit" and self.values is None:
            raise ValueError("family explicit needs values (gamma1..gamma4)")
        return self


class ControllerBSection(StrictModel):
    kind: Literal["B"]
    gamma: GammaConfig
    u12_0: Vec2 = (0.0, 0.0)
    rho12_0: Vec2 = (0.0, 0.0)


ControllerSection = Annotated[Union[ControllerASection, ControllerBSection],
                              Field(discriminator="kind")]


class ScenarioSection(StrictModel):
    params: QuadParams = QuadParams()
    initial: InitialState = InitialState()
    target: Target = Target()
    controller: ControllerSection
    dt: float = Field(1e-3, gt=0)
    horizon: float = Field(20.0, gt=0)
    friction_enabled: bool = False
    nonneg_thrust: bool = False
    fault_policy: Literal["abort", "hold"] = "abort"
    seed: int = 0
    log_stacks: bool = True
    convergence_tol: float = Field(1e-3, gt=0)

    @model_validator(mode="after")
    def _horizon_covers_step(self) -> "ScenarioSection":
        if self.horizon < self.dt:
            raise ValueError("horizon must be at least one step (horizon >= dt)")
        return self


class BetaSection(StrictModel):
    """Admissible interval of beta(t): from a saturation level or given directly"""
    alpha_sat: Optional[float] = None
    beta_min: Optional[float] = None
    beta_max: Optional[float] = None

    @model_validator(mode="after")
    def _interval(self) -> "BetaSection":
        if self.alpha_sat is not None:
            if self.beta_min is not None or self.beta_max is not None:
                raise ValueError("give either alpha_sat or beta_min/beta_max")
            if not 0.0 < self.alpha_sat < 1.0:
                raise ValueError(f"alpha_sat must satisfy alpha in (0, 1), got {self.alpha_sat}")
            return self
        if self.beta_min is None or self.beta_max is None:
            raise ValueError("beta interval needs alpha_sat or both beta_min and beta_max")
        if self.beta_min <= 0:
            raise ValueError(f"beta_min must be positive (0 < beta_min <= beta(t)), got {self.beta_min}")
        if not self.beta_min <= 1.0 <= self.beta_max:
            raise ValueError("beta interval must satisfy beta_min <= 1 <= beta_max")
        return self


class GainsSection(StrictModel):
    beta: BetaSection
    alpha1: float = Field(1.0, gt=0)
    growth: float = Field(1.1, gt=1)
    # falls back to the certify_trials setting
    trials: Optional[int] = Field(None, ge=1)
    seed: int = 0
    pd: Optional[PDGainsConfig] = None
    families: List[GammaConfig] = []


class OutputSection(StrictModel):
    # falls back to the output_dir setting
    directory: Optional[str] = None
    trajectory: str = "trajectory.csv"
    metrics: str = "metrics.json"
    report: str = "gains.json"


class RunConfig(StrictModel):
    schema_version: Literal[1]
    scenario: Optional[ScenarioSection] = None
    gains: Optional[GainsSection] = None
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _has_work(self) -> "RunConfig":
        if self.scenario is None and self.gains is None:
            raise ValueError("config needs a scenario section, a gains section, or both")
        return self
