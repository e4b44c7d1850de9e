"""Exception hierarchy shared by all services"""

from typing import Dict, Optional


class QuadStabError(Exception):
    """Base class for every error raised by the library"""


class InvalidInputError(QuadStabError):
    """Non-finite input or a parameter outside its admissible range"""


class DomainError(QuadStabError):
    """Roll or pitch outside the open interval (-pi/2, pi/2)"""


class SingularityError(QuadStabError):
    """A b-matrix that has to be inverted is (numerically) singular"""

    def __init__(self, message: str, det: Optional[float] = None):
        super().__init__(message)
        self.det = det


class ControlFault(QuadStabError):
    """The controller could not produce a command at the current point"""

    def __init__(self, message: str, diagnostic: Optional[Dict] = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class IntegrationFault(QuadStabError):
    """The integrator produced or received a non-finite value"""


class SynthesisError(QuadStabError):
    """The backstepping search did not certify within its budget"""

    def __init__(self, message: str, margins: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.margins = margins or {}


class ConfigError(QuadStabError):
    """Malformed or invalid run configuration"""
