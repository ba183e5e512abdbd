"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class SfqaError(Exception):
    """Base class for all errors raised by this package."""


# --- corpus ---------------------------------------------------------------


class InvalidStrategy(SfqaError):
    """A split strategy was constructed with missing or out-of-range knobs."""


class DuplicateDocId(SfqaError):
    """Two documents in one corpus stream share an id."""


class EmptyCorpus(SfqaError):
    """A snapshot build produced zero passages."""


class SnapshotIntegrityError(SfqaError):
    """A persisted snapshot does not match its recorded checksum."""


# --- ranker ---------------------------------------------------------------


class UnknownPassage(SfqaError):
    """A passage id was scored against an index that does not contain it."""


class MalformedCache(SfqaError):
    """A ranking cache file violates the wire format."""

    def __init__(self, message: str, question_id: str | None = None):
        super().__init__(message)
        self.question_id = question_id


class ScorerFailure(SfqaError):
    """A rerank scorer raised or returned a non-finite value."""

    def __init__(self, message: str, passage_id: str):
        super().__init__(message)
        self.passage_id = passage_id


# --- reader ---------------------------------------------------------------


class ReaderUnavailable(SfqaError):
    """The remote reader endpoint cannot be reached or is failing."""


class ReaderProtocolError(SfqaError):
    """A remote reader reply violates the wire protocol."""


# --- fusion ---------------------------------------------------------------


class UnknownPassageInCandidates(SfqaError):
    """A reader candidate points at a passage missing from the ranked list."""

    def __init__(self, message: str, passage_id: str):
        super().__init__(message)
        self.passage_id = passage_id


# --- evaluation -----------------------------------------------------------


class DuplicateQuestionId(SfqaError):
    """Two examples in one evaluation batch share a question id."""


class MissingRanking(SfqaError):
    """An example has no ranked list in the evaluation inputs."""

    def __init__(self, message: str, question_id: str):
        super().__init__(message)
        self.question_id = question_id


# --- pipeline -------------------------------------------------------------


class ConfigParseError(SfqaError):
    """The config source is not parseable YAML."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class ConfigValidationError(SfqaError):
    """The config parsed but a field is missing, unknown, or out of range."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class CacheMiss(SfqaError):
    """A cached run hit a question absent from the ranking cache."""

    def __init__(self, message: str, question_id: str):
        super().__init__(message)
        self.question_id = question_id


class CacheTooShallow(SfqaError):
    """The ranking cache holds fewer entries per question than top_k needs."""

    def __init__(self, message: str, question_id: str, depth: int):
        super().__init__(message)
        self.question_id = question_id
        self.depth = depth


class EmptyDataset(SfqaError):
    """A run was started with zero questions."""
