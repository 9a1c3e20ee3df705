"""Exception hierarchy.

``InputError`` subclasses map to CLI exit code 2, everything else under
``SpacexError`` maps to exit code 1.
"""


class SpacexError(Exception):
    exit_code = 1


class InputError(SpacexError):
    exit_code = 2


class AnalysisError(SpacexError):
    exit_code = 1


# repo-ingest
class NotARepository(InputError):
    pass


class EmptyRepository(InputError):
    pass


class UnreadableObject(InputError):
    pass


# forge-ingest
class SchemaViolation(InputError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class TimestampParseError(SchemaViolation):
    pass


class AuthFailure(InputError):
    pass


class RateLimited(InputError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class NetworkError(InputError):
    pass


class MissingArtifact(InputError):
    def __init__(self, message: str, missing=(), changed=(), unlisted=()):
        super().__init__(message)
        self.missing = list(missing)
        self.changed = list(changed)
        self.unlisted = list(unlisted)


# analysis
class ConfigError(AnalysisError):
    pass


class EmptyInput(AnalysisError):
    pass


class UnknownColumn(AnalysisError):
    pass


class AlignmentError(AnalysisError):
    pass


class DegenerateInput(AnalysisError):
    pass


class DomainError(AnalysisError):
    pass


class RankDeficient(AnalysisError):
    pass


class Underdetermined(AnalysisError):
    pass


class NonCount(AnalysisError):
    pass


class NotConverged(AnalysisError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class AllDegenerate(AnalysisError):
    pass


class NoDimensions(AnalysisError):
    pass
