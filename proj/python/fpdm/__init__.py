"""Fixed-point diffusion models."""

from ._core import (
    AuditError,
    NumericError,
    UsageError,
    mmd_rbf,
    plan_constant,
    plan_ramp,
    run_cli,
    schedule,
    sliced_wasserstein,
)

__all__ = [
    "AuditError",
    "NumericError",
    "UsageError",
    "mmd_rbf",
    "plan_constant",
    "plan_ramp",
    "run_cli",
    "schedule",
    "sliced_wasserstein",
]
