"""Exception hierarchy shared across the package.

Every error carries a machine-parsable category and the process exit code
the CLI maps it to (0 success, 2 usage, 3 config, 4 data integrity,
5 backend).
"""

from __future__ import annotations


class RagGateError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    category = "error"


class UsageError(RagGateError):
    """Bad command-line invocation (unknown mode, malformed flag value)."""

    exit_code = 2
    category = "usage"


class ConfigError(RagGateError):
    """Invalid or incomplete configuration for the requested operation."""

    exit_code = 3
    category = "config"


class DataError(RagGateError):
    """Invalid data encountered: malformed files, broken invariants."""

    exit_code = 4
    category = "data"


class ParseError(DataError):
    """A record on disk could not be parsed."""


class IntegrityError(DataError):
    """Referential integrity violated (duplicate or dangling ids)."""


class TemplateError(DataError):
    """A prompt template was rendered with an invalid argument set."""


class ContractError(DataError):
    """A documented precondition was violated by the caller."""


class UncertaintyUndefinedError(DataError):
    """Uncertainty requested for a generation without token log-probs."""


class BackendError(RagGateError):
    """A remote or scripted backend failed."""

    exit_code = 5
    category = "backend"


class EmbeddingError(BackendError):
    """Embedding backend failure; carries the failing batch indices."""

    def __init__(self, message: str, failed_indices: list[int] | None = None):
        super().__init__(message)
        self.failed_indices = list(failed_indices or [])


class GenerationError(BackendError):
    """Generation backend failure after retries were exhausted."""


class ScriptedMissError(GenerationError):
    """The deterministic mock had no entry for the requested prompt."""

    def __init__(self, prompt_sha256: str):
        super().__init__(f"no scripted response for prompt sha256={prompt_sha256}")
        self.prompt_sha256 = prompt_sha256
