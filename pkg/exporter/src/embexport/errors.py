class ExportError(Exception):
    """Base class for exporter failures."""


class CorpusFormatError(ExportError):
    """Malformed CoNLL input."""


class EncoderLoadError(ExportError):
    """The encoder name/path could not be resolved to a usable model."""


class AlignmentError(ExportError):
    """A corpus token could not be aligned to any encoder word piece."""

    def __init__(self, sentence_id: int, token_index: int, detail: str = ""):
        msg = f"cannot align sentence {sentence_id}, token {token_index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.sentence_id = sentence_id
        self.token_index = token_index
