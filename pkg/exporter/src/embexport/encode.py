"""Frozen-encoder token embedding extraction.

Sentences are fed pre-split; the tokenizer's word alignment maps word
pieces back to corpus tokens, and the final hidden layer is pooled per
token (first piece or mean of pieces). The encoder runs in eval mode with
gradients disabled, so a fixed encoder gives byte-identical exports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conll import read_conll_tokens
from .errors import AlignmentError, EncoderLoadError, ExportError
from .writer import write_embv1

POOLING_MODES = ("first", "mean")
DEFAULT_ENCODER = "bert-base-uncased"


@dataclass(frozen=True)
class ExportJob:
    corpus_path: str
    out_path: str
    encoder: str = DEFAULT_ENCODER
    pooling: str = "first"
    batch_size: int = 8
    device: str = "cpu"

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ExportError(f"pooling must be one of {POOLING_MODES}")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")


def _load_encoder(name: str, device: str):
    import torch
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except Exception as exc:
        raise EncoderLoadError(f"cannot load encoder {name!r}: {exc}") from exc
    if not getattr(tokenizer, "is_fast", False):
        raise EncoderLoadError(
            f"encoder {name!r} has no fast tokenizer; word alignment needs one"
        )
    model.eval()
    model.to(device)
    return tokenizer, model


def encode_sentences(
    sentences: list[list[str]],
    tokenizer,
    model,
    pooling: str,
    batch_size: int,
    device: str,
    first_sentence_id: int = 0,
) -> list[tuple[int, int, np.ndarray]]:
    """One pooled final-layer vector per token, as (sentence_id, index, vec)."""
    import torch

    max_len = getattr(model.config, "max_position_embeddings", None)
    records: list[tuple[int, int, np.ndarray]] = []
    for start in range(0, len(sentences), batch_size):
        batch = sentences[start : start + batch_size]
        enc = tokenizer(
            batch, is_split_into_words=True, padding=True, return_tensors="pt"
        )
        if max_len is not None and enc["input_ids"].shape[1] > max_len:
            raise ExportError(
                f"a sentence near id {first_sentence_id + start} expands to "
                f"{enc['input_ids'].shape[1]} pieces, beyond the encoder limit {max_len}"
            )
        with torch.no_grad():
            hidden = model(**{k: v.to(device) for k, v in enc.items()}).last_hidden_state
        hidden = hidden.cpu().numpy()
        for row, tokens in enumerate(batch):
            sid = first_sentence_id + start + row
            pieces_per_word: dict[int, list[int]] = {}
            for pos, wid in enumerate(enc.word_ids(row)):
                if wid is not None:
                    pieces_per_word.setdefault(wid, []).append(pos)
            for ti in range(len(tokens)):
                pieces = pieces_per_word.get(ti)
                if not pieces:
                    raise AlignmentError(sid, ti, f"token {tokens[ti]!r} produced no pieces")
                if pooling == "first":
                    vec = hidden[row, pieces[0]]
                else:
                    vec = hidden[row, pieces].mean(axis=0)
                records.append((sid, ti, vec.astype(np.float32)))
    return records


def export(job: ExportJob) -> int:
    """Run the job end to end; returns the number of records written."""
    with open(job.corpus_path, "r", encoding="utf-8") as fh:
        sentences = read_conll_tokens(fh)
    tokenizer, model = _load_encoder(job.encoder, job.device)
    records = encode_sentences(
        sentences, tokenizer, model, job.pooling, job.batch_size, job.device
    )
    dim = int(model.config.hidden_size)
    with open(job.out_path, "wb") as out:
        write_embv1(out, dim, records)
    return len(records)
