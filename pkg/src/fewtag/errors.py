"""Exception hierarchy shared across the package.

Every error raised by fewtag derives from :class:`FewtagError`, so callers
(including the CLI) can catch one type and report a single diagnostic line.
"""


class FewtagError(Exception):
    """Base class for all fewtag errors."""


class ValidationError(FewtagError):
    """A domain type was constructed or used with invariant-violating fields."""


class LengthMismatchError(ValidationError):
    """Token and label sequences differ in length (or are empty)."""


class UnknownLabelError(ValidationError):
    """A label does not belong to the label set in use."""

    def __init__(self, label):
        super().__init__(f"unknown label: {label!r}")
        self.label = label


class CorpusFormatError(FewtagError):
    """Malformed corpus text input."""


class MalformedLineError(CorpusFormatError):
    def __init__(self, line_number: int, line: str):
        super().__init__(f"malformed line {line_number}: expected two columns, got {line!r}")
        self.line_number = line_number


class EmptyCorpusError(CorpusFormatError):
    def __init__(self):
        super().__init__("empty corpus: no sentences found")


class StoreFormatError(FewtagError):
    """Unreadable or corrupt embedding-store stream (bad magic, truncation,
    non-finite values, duplicate records)."""


class MissingEmbeddingError(FewtagError):
    def __init__(self, sentence_id: int, token_index: int):
        super().__init__(f"missing embedding for sentence {sentence_id}, token {token_index}")
        self.sentence_id = sentence_id
        self.token_index = token_index


class ZeroVectorError(FewtagError):
    """The hash embedder produced an exactly-zero vector (practically impossible;
    reported rather than silently renormalized)."""


class InsufficientDataError(FewtagError):
    """The corpus cannot satisfy the requested episode shape."""

    def __init__(self, what: str, have: int, need: int, detail: str = ""):
        msg = f"insufficient data for {what}: have {have}, need {need}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.what = what
        self.have = have
        self.need = need


class ExhaustedCandidatesError(FewtagError):
    """Greedy episode construction ran out of candidate sentences."""


class EmptyClassError(FewtagError):
    def __init__(self, what):
        super().__init__(f"no support tokens for class {what}")
        self.what = what


class NoPositiveError(FewtagError):
    def __init__(self, slot: int):
        super().__init__(f"no positive tokens for way-slot {slot}")
        self.slot = slot


class NoNegativeError(FewtagError):
    def __init__(self, slot: int):
        super().__init__(f"no negative tokens for way-slot {slot}")
        self.slot = slot


class NonFiniteError(FewtagError):
    """A NaN or infinity appeared where finite values are required."""


class TraceMismatchError(FewtagError):
    """A backward pass was given a trace produced by a different forward call."""


class CheckpointError(FewtagError):
    """Unreadable or corrupt network checkpoint."""


class DimensionMismatchError(FewtagError):
    """Vector dimensions disagree (query vs region centers, etc.)."""


class ShapeMismatchError(FewtagError):
    """Gold and predicted label sequences have different shapes."""
