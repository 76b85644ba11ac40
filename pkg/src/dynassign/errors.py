"""Error taxonomy shared across the package.

CLI exit codes map onto these: validation -> 1, infeasibility -> 2, I/O -> 3.
"""


class ValidationError(ValueError):
    """Malformed or out-of-contract input (non-finite costs, bad schema, ...)."""


class InfeasibleError(ValueError):
    """Capacity cannot accommodate the requested assignment."""
