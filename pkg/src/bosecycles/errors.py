"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class ContractError(RuntimeError):
    """A numeric contract (sum rule, invariant) was violated (CLI exit code 3)."""


class NonErgodicWarning(UserWarning):
    """Permutation-move acceptance too low for the chain to mix (CLI exit code 4 under --strict)."""


class PoorOverlapWarning(UserWarning):
    """Open-sector residence fraction too small for a reliable two-sector estimate."""
