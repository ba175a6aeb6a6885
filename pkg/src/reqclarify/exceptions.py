"""Exception hierarchy. The CLI maps each family to an exit status."""


class ReqClarifyError(Exception):
    exit_status = 1


class UsageError(ReqClarifyError, ValueError):
    """Bad arguments or violated preconditions."""

    exit_status = 1


class ConfigurationError(UsageError):
    pass


class DegenerateSplitError(UsageError):
    pass


class IntegrityError(ReqClarifyError):
    """Stored data is inconsistent (dangling keys, overwrites, missing verdicts)."""

    exit_status = 2


class ParseError(IntegrityError):
    def __init__(self, message, raw=None, line=None):
        super().__init__(message)
        self.raw = raw
        self.line = line


class MissingFixtureError(IntegrityError):
    def __init__(self, fingerprint, repetition_index=None):
        where = "" if repetition_index is None else f" (repetition {repetition_index})"
        super().__init__(f"no replay record for fingerprint {fingerprint}{where}")
        self.fingerprint = fingerprint
        self.repetition_index = repetition_index


class DegenerateEmbeddingError(IntegrityError):
    pass


class TransportError(ReqClarifyError):
    """Network, auth, or rate-limit failure after retries."""

    exit_status = 3
