"""Synthetic corpus + embedding-store generator with controlled geometry.

Entity types are isotropic Gaussian clusters at well-separated centers; the
O class is a mixture of `modes_o` Gaussian modes. Two placements exist:

* spread-out (default): every center sits on its own scaled coordinate axis,
  all pairwise distances equal `mode_separation`. Cleanly separable.
* anchored O (`anchored_o=True`): entity centers are pushed far apart
  (`entity_spread` times farther) and each O mode sits `mode_separation`
  away from one entity cluster. O tokens are then near some entity region
  but the mean of all O tokens lands far from every O mode, which is the
  failure mode a single O prototype runs into.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, EmbeddingStore
from .errors import ValidationError
from .types import LabeledSentence, LabelSet, O_LABEL_ID


@dataclass(frozen=True)
class SynthSpec:
    """Geometry and size of one synthetic corpus."""

    n_types: int
    modes_o: int
    dim: int
    cluster_std: float
    mode_separation: float
    sentences: int
    tokens_per_sentence: int
    seed: int
    entity_fraction: float = 0.5
    type_prefix: str = "T"
    anchored_o: bool = False
    entity_spread: float = 1.6

    def __post_init__(self):
        if min(self.n_types, self.modes_o, self.sentences, self.tokens_per_sentence) < 1:
            raise ValidationError("all synth counts must be >= 1")
        if self.dim < self.n_types + self.modes_o:
            raise ValidationError(
                f"dim must be >= n_types + modes_o = {self.n_types + self.modes_o} "
                "(centers sit on distinct axes)"
            )
        if self.cluster_std <= 0 or self.mode_separation <= 0:
            raise ValidationError("cluster_std and mode_separation must be positive")
        if not 0.0 < self.entity_fraction < 1.0:
            raise ValidationError("entity_fraction must lie strictly inside (0, 1)")
        if self.entity_spread <= 1.0:
            raise ValidationError("entity_spread must exceed 1")


def separable_spec(
    n_types: int = 10,
    dim: int = 32,
    seed: int = 0,
    sentences: int = 240,
    tokens_per_sentence: int = 8,
    type_prefix: str = "T",
) -> SynthSpec:
    """Well-separated preset (separation 25x the cluster std)."""
    return SynthSpec(
        n_types=n_types,
        modes_o=2,
        dim=dim,
        cluster_std=0.08,
        mode_separation=2.0,
        sentences=sentences,
        tokens_per_sentence=tokens_per_sentence,
        seed=seed,
        type_prefix=type_prefix,
    )


def multimodal_o_spec(
    n_types: int = 10,
    modes_o: int = 5,
    dim: int = 32,
    seed: int = 0,
    sentences: int = 240,
    tokens_per_sentence: int = 8,
    type_prefix: str = "T",
) -> SynthSpec:
    """Multi-modal O preset: O modes anchored near distinct entity clusters."""
    return SynthSpec(
        n_types=n_types,
        modes_o=modes_o,
        dim=dim,
        cluster_std=0.08,
        mode_separation=2.0,
        sentences=sentences,
        tokens_per_sentence=tokens_per_sentence,
        seed=seed,
        type_prefix=type_prefix,
        anchored_o=True,
    )


def cluster_centers(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """(entity centers (n_types, dim), O-mode centers (modes_o, dim))."""
    scale = spec.mode_separation / np.sqrt(2.0)
    entity = np.zeros((spec.n_types, spec.dim))
    o_modes = np.zeros((spec.modes_o, spec.dim))
    if spec.anchored_o:
        for j in range(spec.n_types):
            entity[j, j] = spec.entity_spread * scale
        for m in range(spec.modes_o):
            o_modes[m] = entity[m % spec.n_types]
            o_modes[m, spec.n_types + m] = spec.mode_separation
    else:
        for j in range(spec.n_types):
            entity[j, j] = scale
        for m in range(spec.modes_o):
            o_modes[m, spec.n_types + m] = scale
    return entity, o_modes


def generate(spec: SynthSpec) -> tuple[Corpus, EmbeddingStore]:
    """Deterministically generate a mutually consistent corpus and store."""
    rng = np.random.default_rng(spec.seed)
    entity_centers, o_centers = cluster_centers(spec)
    label_set = LabelSet(
        tuple(f"{spec.type_prefix}{i + 1:02d}" for i in range(spec.n_types))
    )
    sentences = []
    records: dict[tuple[int, int], np.ndarray] = {}
    for sid in range(spec.sentences):
        tokens, labels = [], []
        for ti in range(spec.tokens_per_sentence):
            if rng.random() < spec.entity_fraction:
                t = int(rng.integers(spec.n_types))
                center = entity_centers[t]
                labels.append(t + 1)
            else:
                center = o_centers[int(rng.integers(spec.modes_o))]
                labels.append(O_LABEL_ID)
            vec = center + rng.normal(0.0, spec.cluster_std, spec.dim)
            records[(sid, ti)] = vec.astype(np.float32)
            tokens.append(f"w{sid}_{ti}")
        sentences.append(LabeledSentence(sid, tuple(tokens), tuple(labels)))
    corpus = Corpus.from_sentences(sentences, label_set)
    return corpus, EmbeddingStore(spec.dim, records)
