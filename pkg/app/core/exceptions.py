"""
Custom Exception Classes
Domain errors raised by the simulation, learning and harness layers.
"""

from typing import Any, Dict, Optional


class EvacSimException(Exception):
    """Base exception for the evacuation engine."""

    def __init__(
        self,
        message: str,
        code: str = "INTERNAL_ERROR",
        exit_code: int = 1,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.code = code
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class ConfigError(EvacSimException):
    """Raised when a config file or parameter string cannot be used."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, code="CONFIG_ERROR", exit_code=2, details=details)


class ScenarioError(EvacSimException):
    """Raised when a scenario cannot be built from the given parameters."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, code="SCENARIO_ERROR", exit_code=2, details=details)


class NumericalError(EvacSimException):
    """Raised when activations, losses or gradients stop being finite."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, code="NUMERICAL_ERROR", exit_code=3, details=details)


class ReplayBufferError(EvacSimException):
    """Raised when the replay buffer cannot serve a request."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, code="REPLAY_BUFFER_ERROR", exit_code=3, details=details)


class CheckpointError(EvacSimException):
    """Raised when a checkpoint cannot be written or decoded."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, code="CHECKPOINT_ERROR", exit_code=4, details=details)


class PolicyError(EvacSimException):
    """Raised when a policy handle cannot be turned into a policy."""

    def __init__(self, message: str, kind: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            code=f"{kind.upper()}_POLICY_ERROR",
            exit_code=2,
            details=details,
        )


class OutputError(EvacSimException):
    """Raised when an output directory or file cannot be written."""

    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"Cannot write output at '{path}': {reason}",
            code="OUTPUT_ERROR",
            exit_code=5,
            details={"path": path, "reason": reason},
        )
