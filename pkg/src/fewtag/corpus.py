"""Corpus parsing and token-embedding providers.

Two providers exist: a binary EMBV1 store holding precomputed encoder
vectors, and a deterministic hash embedder used as a desk-scale stand-in.
Both map (sentence, token index) to a D-dimensional float32 vector.

EMBV1 layout (little-endian): magic "EMBV1\\0" (6 bytes), u32 dim D,
u64 record count R, then R records of (u32 sentence_id, u32 token_index,
D x f32).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, TextIO, Union

import numpy as np

from .errors import (
    EmptyCorpusError,
    MalformedLineError,
    MissingEmbeddingError,
    StoreFormatError,
    ValidationError,
    ZeroVectorError,
)
from .rng import fnv1a_64, splitmix64_outputs
from .types import LabeledSentence, LabelSet, O_LABEL_ID, validate_sentence

DEFAULT_DIM = 768

_EMB_MAGIC = b"EMBV1\x00"
_EMB_HEADER = struct.Struct("<6sIQ")
_REC_HEADER = struct.Struct("<II")


@dataclass(frozen=True)
class Corpus:
    """Validated sentences plus a per-type index of containing sentence ids."""

    sentences: tuple[LabeledSentence, ...]
    label_set: LabelSet
    index: dict[int, tuple[int, ...]]

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        ids = [s.sentence_id for s in self.sentences]
        if len(set(ids)) != len(ids):
            raise ValidationError("sentence ids must be corpus-unique")
        for sent in self.sentences:
            validate_sentence(sent.tokens, sent.labels, self.label_set)
        if self.index != _build_index(self.sentences, self.label_set):
            raise ValidationError("type index is inconsistent with the sentences")

    @classmethod
    def from_sentences(cls, sentences: Iterable[LabeledSentence], label_set: LabelSet) -> "Corpus":
        sentences = tuple(sentences)
        return cls(sentences, label_set, _build_index(sentences, label_set))

    def sentence_by_id(self, sentence_id: int) -> LabeledSentence:
        if not hasattr(self, "_by_id"):
            object.__setattr__(self, "_by_id", {s.sentence_id: s for s in self.sentences})
        return self._by_id[sentence_id]


def _build_index(sentences, label_set: LabelSet) -> dict[int, tuple[int, ...]]:
    index = {t: [] for t in label_set.entity_ids}
    for sent in sentences:
        present = set(sent.labels) - {O_LABEL_ID}
        for t in sorted(present):
            index[t].append(sent.sentence_id)
    return {t: tuple(v) for t, v in index.items()}


def parse_conll(source: Union[str, TextIO], o_tag: str = "O") -> Corpus:
    """Parse two-column CoNLL text (token, tag) into a Corpus.

    Blank lines separate sentences; a final sentence without a trailing blank
    line is still emitted. Tags equal to `o_tag` become the O label, every
    other tag becomes an entity type in first-appearance order.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    type_names: list[str] = []
    type_ids: dict[str, int] = {}
    sentences: list[LabeledSentence] = []
    tokens: list[str] = []
    labels: list[int] = []

    def flush():
        if tokens:
            sentences.append(LabeledSentence(len(sentences), tuple(tokens), tuple(labels)))
            tokens.clear()
            labels.clear()

    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            flush()
            continue
        cols = line.split()
        if len(cols) != 2:
            raise MalformedLineError(lineno, raw.rstrip("\n"))
        token, tag = cols
        if tag == o_tag:
            labels.append(O_LABEL_ID)
        else:
            if tag not in type_ids:
                type_names.append(tag)
                type_ids[tag] = len(type_names)
            labels.append(type_ids[tag])
        tokens.append(token)
    flush()
    if not sentences:
        raise EmptyCorpusError()
    return Corpus.from_sentences(sentences, LabelSet(tuple(type_names), o_label=o_tag))


def corpus_to_conll(corpus: Corpus) -> str:
    """Render a corpus back to two-column CoNLL text."""
    blocks = []
    for sent in corpus.sentences:
        lines = [
            f"{tok} {corpus.label_set.name_of(l)}"
            for tok, l in zip(sent.tokens, sent.labels)
        ]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def assert_disjoint_label_sets(train: LabelSet, test: LabelSet) -> None:
    """Enforce the disjoint-split invariant between train and test types."""
    overlap = set(train.entity_types) & set(test.entity_types)
    if overlap:
        raise ValidationError(f"train/test entity types overlap: {sorted(overlap)}")


class EmbeddingStore:
    """Frozen (sentence_id, token_index) -> float32 vector map.

    Read-only after construction; record order is preserved so that a
    loaded store re-serializes byte-for-byte.
    """

    def __init__(self, dim: int, records: dict[tuple[int, int], np.ndarray]):
        if dim < 1:
            raise ValidationError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.records: dict[tuple[int, int], np.ndarray] = {}
        for key, vec in records.items():
            vec = np.asarray(vec, dtype=np.float32)
            if vec.shape != (self.dim,):
                raise ValidationError(
                    f"record {key} has shape {vec.shape}, expected ({self.dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise StoreFormatError(f"non-finite value in record {key}")
            self.records[(int(key[0]), int(key[1]))] = vec

    def __len__(self) -> int:
        return len(self.records)

    def vector(self, sentence_id: int, token_index: int) -> np.ndarray:
        try:
            return self.records[(sentence_id, token_index)]
        except KeyError:
            raise MissingEmbeddingError(sentence_id, token_index) from None


def save_embedding_store(store: EmbeddingStore, sink: BinaryIO | None = None) -> bytes | None:
    """Serialize a store to the EMBV1 format, preserving record order."""
    out = sink if sink is not None else io.BytesIO()
    out.write(_EMB_HEADER.pack(_EMB_MAGIC, store.dim, len(store.records)))
    for (sid, tid), vec in store.records.items():
        out.write(_REC_HEADER.pack(sid, tid))
        out.write(vec.astype("<f4", copy=False).tobytes())
    if sink is None:
        return out.getvalue()
    return None


def load_embedding_store(source: Union[bytes, BinaryIO]) -> EmbeddingStore:
    """Read an EMBV1 stream, verifying magic, length, and value finiteness."""
    data = source if isinstance(source, bytes) else source.read()
    if len(data) < _EMB_HEADER.size:
        raise StoreFormatError("truncated stream: header incomplete")
    magic, dim, count = _EMB_HEADER.unpack_from(data, 0)
    if magic != _EMB_MAGIC:
        raise StoreFormatError(f"bad magic: {magic!r}")
    if dim < 1:
        raise StoreFormatError(f"bad dimension in header: {dim}")
    rec_size = _REC_HEADER.size + 4 * dim
    expected = _EMB_HEADER.size + count * rec_size
    if len(data) != expected:
        raise StoreFormatError(
            f"truncated stream: header promises {count} records "
            f"({expected} bytes), got {len(data)} bytes"
        )
    rec_dtype = np.dtype([("sid", "<u4"), ("tid", "<u4"), ("vec", "<f4", (dim,))])
    raw = np.frombuffer(data, dtype=rec_dtype, count=count, offset=_EMB_HEADER.size)
    records: dict[tuple[int, int], np.ndarray] = {}
    for rec in raw:
        key = (int(rec["sid"]), int(rec["tid"]))
        if key in records:
            raise StoreFormatError(f"duplicate record for {key}")
        records[key] = np.array(rec["vec"], dtype=np.float32)
    return EmbeddingStore(dim, records)


@dataclass(frozen=True)
class HashEmbedder:
    """Deterministic pseudo-random unit embeddings keyed by token bytes.

    A stand-in provider for desk-scale runs: vectors are a pure function of
    (token, seed, dim), pinned to FNV-1a-64 + SplitMix64 so any
    implementation reproduces them exactly.
    """

    dim: int = DEFAULT_DIM
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")


def hash_embed(embedder: HashEmbedder, token: str) -> np.ndarray:
    """L2-normalized D-vector for one token.

    Pipeline: state = FNV-1a-64(utf-8 token) XOR seed; take D SplitMix64
    outputs; map each unsigned value u to u / 2^63 - 1 in [-1, 1); normalize.
    """
    state = fnv1a_64(token.encode("utf-8")) ^ embedder.seed
    raw = splitmix64_outputs(state, embedder.dim)
    v = raw.astype(np.float64) / float(2**63) - 1.0
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVectorError(f"hash embedding of {token!r} is the zero vector")
    return (v / norm).astype(np.float32)


Provider = Union[EmbeddingStore, HashEmbedder]


def provider_dim(provider: Provider) -> int:
    return provider.dim


def embeddings_for(provider: Provider, sentence: LabeledSentence) -> np.ndarray:
    """Token vectors for one sentence, shape (len(sentence), D), token order."""
    if isinstance(provider, HashEmbedder):
        return np.stack([hash_embed(provider, tok) for tok in sentence.tokens])
    return np.stack(
        [provider.vector(sentence.sentence_id, i) for i in range(len(sentence))]
    )
