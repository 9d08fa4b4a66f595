"""Error taxonomy shared by the library, the service, and the CLI.

Every failure carries a stable ``code`` string (asserted by tests and
surfaced over the service API) and a ``category`` that the CLI maps to
an exit code: validation -> 2, io -> 3, config -> 4.
"""

EXIT_CODES = {"validation": 2, "io": 3, "config": 4}


class ClensError(Exception):
    category = "validation"

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ValidationError(ClensError):
    """Inputs parse but violate a contract (bad row sums, shape mismatch...)."""

    category = "validation"


class FormatError(ClensError):
    """File-level failures: missing files, bad magic, truncation, I/O."""

    category = "io"


class ConfigError(ClensError):
    """Bad flags, bad config files, unknown presets."""

    category = "config"
