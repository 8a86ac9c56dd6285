"""
Error hierarchy for subgroup-quotient

Library code raises these; only the CLI maps them to exit codes.
"""

from typing import Optional


class SubgroupError(Exception):
    """Base error for the whole package"""

    code = "error"
    exit_code = 1

    def __init__(self, message: str, *, detail: Optional[str] = None):
        super().__init__(message)
        self.detail = detail

    def __str__(self) -> str:
        message = super().__str__()
        if self.detail:
            return f"[{self.code}] {message} ({self.detail})"
        return f"[{self.code}] {message}"


class ConfigError(SubgroupError):
    """Invalid configuration or command-line values"""

    code = "config"
    exit_code = 2


class OracleCapError(ConfigError):
    """Exhaustive search refused: universe larger than the configured cap"""

    code = "oracle-cap"


class DataError(SubgroupError):
    """Invalid dataset contents"""

    code = "data"
    exit_code = 3


class MissingColumnError(DataError):
    code = "missing-column"


class UnknownLevelError(DataError):
    code = "unknown-level"


class NonPositiveBiomarkerError(DataError):
    code = "non-positive-biomarker"


class EmptyHVError(DataError):
    code = "empty-hv"


class EmptyNonHVError(DataError):
    code = "empty-non-hv"


class DatasetHashMismatchError(DataError):
    code = "hash-mismatch"


class InfeasiblePlantError(DataError):
    code = "infeasible-plant"


class EmptySubgroupError(DataError):
    """Fold change is undefined over an empty subgroup"""

    code = "empty-subgroup"


class UniverseMismatchError(SubgroupError, ValueError):
    """Atom id out of range or bit vectors of different lengths"""

    code = "universe-mismatch"


class IllConditionedModelError(SubgroupError):
    """GP covariance could not be factorised even after jitter escalation"""

    code = "ill-conditioned"
