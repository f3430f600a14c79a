"""Exception hierarchy for the retrieval engine.

Three failure families map onto the CLI exit codes: validation problems
(bad inputs, degenerate data) exit 2, storage problems (missing or corrupt
files) exit 3, and numeric failures during training exit 4.
"""


class PatchRankError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class ValidationError(PatchRankError):
    """Invalid or degenerate input data."""

    exit_code = 2


class StorageError(PatchRankError):
    """Missing, corrupt, or unreadable persisted data."""

    exit_code = 3


class NumericError(PatchRankError):
    """Non-finite values encountered during optimization."""

    exit_code = 4


class DimensionMismatch(ValidationError):
    pass


class ZeroVector(ValidationError):
    """L2 norm below 1e-12; the descriptor is degenerate."""


class ZeroPatch(ValidationError):
    """A feature-map position has (near-)zero activation."""

    def __init__(self, position: int):
        super().__init__(f"patch {position} has zero norm")
        self.position = position


class EmptyStore(ValidationError):
    pass


class EmptyPatchSet(ValidationError):
    pass


class DuplicateId(ValidationError):
    def __init__(self, doc_id: str):
        super().__init__(f"duplicate document id {doc_id!r}")
        self.doc_id = doc_id


class BadSplit(ValidationError):
    def __init__(self, line_no: int, value: str = ""):
        super().__init__(f"line {line_no}: unknown split {value!r}")
        self.line_no = line_no


class MalformedLine(ValidationError):
    def __init__(self, line_no: int, reason: str = ""):
        msg = f"line {line_no}: malformed manifest line"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)
        self.line_no = line_no


class InsufficientClasses(ValidationError):
    pass


class DegenerateLabels(ValidationError):
    pass


class UnknownQuery(ValidationError):
    def __init__(self, query_id: str):
        super().__init__(f"query id {query_id!r} not in manifest query split")
        self.query_id = query_id


class EmptyRelevantSet(ValidationError):
    pass


class BadMagic(StorageError):
    pass


class UnsupportedVersion(StorageError):
    def __init__(self, version: int):
        super().__init__(f"unsupported format version {version}")
        self.version = version


class TruncatedFile(StorageError):
    pass


class NonFiniteValue(StorageError):
    def __init__(self, index: int):
        super().__init__(f"non-finite value at flat index {index}")
        self.index = index


class ChecksumMismatch(StorageError):
    def __init__(self, doc_id: str):
        super().__init__(f"sha256 mismatch for {doc_id!r}")
        self.doc_id = doc_id


class MissingFeatureMap(StorageError):
    def __init__(self, doc_id: str):
        super().__init__(f"no feature map available for {doc_id!r}")
        self.doc_id = doc_id


class NonFiniteLoss(NumericError):
    def __init__(self, step: int):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step
