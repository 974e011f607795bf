"""Exception types raised across the package."""


class FPKError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(FPKError, ValueError):
    """An argument violates a documented precondition."""


class OutOfDomainError(FPKError, ValueError):
    """A tabulated density was queried outside its grid under the strict policy."""


class SimulationError(FPKError, RuntimeError):
    """Non-finite drift encountered while stepping a trajectory."""

    def __init__(self, message, traj_index, step_index):
        super().__init__(f"{message} (trajectory {traj_index}, step {step_index})")
        self.traj_index = traj_index
        self.step_index = step_index


class EscapeError(FPKError, RuntimeError):
    """A trajectory left omega while the strict escape policy was active."""

    def __init__(self, traj_index, step_index, node_index=None):
        where = "" if node_index is None else f" at node {node_index}"
        super().__init__(
            f"trajectory {traj_index} left omega at step {step_index}{where} (policy=strict)"
        )
        self.traj_index = traj_index
        self.step_index = step_index
        self.node_index = node_index


class DegenerateEstimateError(FPKError, RuntimeError):
    """No trajectories were admitted into an estimate, or nothing to normalize."""


class ConfigError(FPKError, ValueError):
    """A run configuration failed validation."""
