"""Minimal two-column CoNLL reader: token and tag per line, blank line
between sentences. Only the tokens matter here; tags are validated for
shape and otherwise ignored."""

from __future__ import annotations

import io
from typing import TextIO, Union

from .errors import CorpusFormatError


def read_conll_tokens(source: Union[str, TextIO]) -> list[list[str]]:
    """Token lists per sentence, in file order (sentence_id = list index)."""
    if isinstance(source, str):
        source = io.StringIO(source)
    sentences: list[list[str]] = []
    tokens: list[str] = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            if tokens:
                sentences.append(tokens)
                tokens = []
            continue
        cols = line.split()
        if len(cols) != 2:
            raise CorpusFormatError(
                f"malformed line {lineno}: expected two columns, got {raw.rstrip()!r}"
            )
        tokens.append(cols[0])
    if tokens:
        sentences.append(tokens)
    if not sentences:
        raise CorpusFormatError("empty corpus: no sentences found")
    return sentences
