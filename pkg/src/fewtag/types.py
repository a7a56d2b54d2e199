"""Core domain types: labeled sentences, label sets, episodes, and run configs.

Labels are interned as small integer ids against a LabelSet; the O (outside)
label is always id 0 because it is compared on every token during evaluation.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import LengthMismatchError, UnknownLabelError, ValidationError
from .rng import MASK64

O_LABEL_ID = 0

# Way-slot value used for "no entity region" predictions (distinct from the
# corpus-space O_LABEL_ID, which is a label id).
O_SLOT = -1

LOSS_VARIANTS = ("improved", "improved-no-weights", "improved-fixed-margin", "original")
INFERENCE_VARIANTS = ("margin-region", "nearest-prototype-with-o")
OUTER_OPTIMIZERS = ("sgd", "adamw")


@dataclass(frozen=True)
class LabelSet:
    """Ordered set of entity-type names plus the distinguished O label.

    Entity type at position j has label id j+1; the O label has id 0.
    """

    entity_types: tuple[str, ...]
    o_label: str = "O"

    def __post_init__(self):
        object.__setattr__(self, "entity_types", tuple(self.entity_types))
        if len(set(self.entity_types)) != len(self.entity_types):
            raise ValidationError("entity types must be unique")
        if self.o_label in self.entity_types:
            raise ValidationError(f"o_label {self.o_label!r} collides with an entity type")

    @property
    def n_types(self) -> int:
        return len(self.entity_types)

    @property
    def entity_ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.entity_types) + 1))

    def id_of(self, name: str) -> int:
        if name == self.o_label:
            return O_LABEL_ID
        try:
            return self.entity_types.index(name) + 1
        except ValueError:
            raise UnknownLabelError(name) from None

    def name_of(self, label_id: int) -> str:
        if label_id == O_LABEL_ID:
            return self.o_label
        if 1 <= label_id <= len(self.entity_types):
            return self.entity_types[label_id - 1]
        raise UnknownLabelError(label_id)

    def is_valid_id(self, label_id: int) -> bool:
        return 0 <= label_id <= len(self.entity_types)


@dataclass(frozen=True)
class LabeledSentence:
    """Token strings with one interned label id per token."""

    sentence_id: int
    tokens: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(int(l) for l in self.labels))
        if self.sentence_id < 0:
            raise ValidationError(f"sentence_id must be >= 0, got {self.sentence_id}")
        if len(self.tokens) != len(self.labels):
            raise LengthMismatchError(
                f"{len(self.tokens)} tokens vs {len(self.labels)} labels "
                f"in sentence {self.sentence_id}"
            )
        if not self.tokens:
            raise LengthMismatchError(f"sentence {self.sentence_id} is empty")
        for l in self.labels:
            if l < 0:
                raise UnknownLabelError(l)

    def __len__(self) -> int:
        return len(self.tokens)


def validate_sentence(tokens: Sequence[str], labels: Sequence[int], label_set: LabelSet) -> None:
    """Check that raw token/label sequences form a valid sentence for `label_set`.

    Raises LengthMismatchError or UnknownLabelError (naming the offending
    label id); returns None when everything holds.
    """
    if len(tokens) != len(labels) or len(tokens) == 0:
        raise LengthMismatchError(f"{len(tokens)} tokens vs {len(labels)} labels")
    for l in labels:
        if not label_set.is_valid_id(l):
            raise UnknownLabelError(l)


@dataclass(frozen=True)
class EpisodeConfig:
    """Shape of one N-way K-shot episode plus the sampling seed."""

    n_ways: int
    k_shots: int
    query_size: int
    seed: int = 0

    def __post_init__(self):
        if self.n_ways < 2:
            raise ValidationError(f"n_ways must be >= 2, got {self.n_ways}")
        if self.k_shots < 1:
            raise ValidationError(f"k_shots must be >= 1, got {self.k_shots}")
        if self.query_size < 1:
            raise ValidationError(f"query_size must be >= 1, got {self.query_size}")
        if not 0 <= self.seed <= MASK64:
            raise ValidationError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class Episode:
    """N sampled entity types with relabeled support and query sentences.

    In both sentence sets, mentions of types outside `types` carry the O
    label; the constructor rejects any other label, as well as overlapping
    support/query sentence ids. Per-type mention-count requirements depend on
    the episode config and are checked by the sampler.
    """

    types: tuple[int, ...]
    support: tuple[LabeledSentence, ...]
    query: tuple[LabeledSentence, ...]

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "query", tuple(self.query))
        if not self.types:
            raise ValidationError("episode has no sampled types")
        if len(set(self.types)) != len(self.types):
            raise ValidationError("sampled types must be distinct")
        if O_LABEL_ID in self.types:
            raise ValidationError("the O label cannot be a sampled type")
        support_ids = {s.sentence_id for s in self.support}
        query_ids = {s.sentence_id for s in self.query}
        overlap = support_ids & query_ids
        if overlap:
            raise ValidationError(f"support/query sentence ids overlap: {sorted(overlap)}")
        allowed = set(self.types) | {O_LABEL_ID}
        for sent in self.support + self.query:
            for l in sent.labels:
                if l not in allowed:
                    raise ValidationError(
                        f"label {l} in sentence {sent.sentence_id} is outside the episode types"
                    )

    @property
    def n_ways(self) -> int:
        return len(self.types)

    def slot_of(self, label_id: int) -> int:
        """Way-slot index of a corpus label id; O_SLOT for the O label."""
        if label_id == O_LABEL_ID:
            return O_SLOT
        return self.types.index(label_id)


def mention_counts(sentences: Iterable[LabeledSentence], types: Sequence[int]) -> dict[int, int]:
    """Entity-token mention count per type over a group of sentences.

    Under the IO scheme every labeled token is one countable mention.
    """
    counts = {t: 0 for t in types}
    for sent in sentences:
        for l in sent.labels:
            if l in counts:
                counts[l] += 1
    return counts


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of episodic training and inference variant switches.

    Defaults follow the reported experiment setup: inner learning rate 0.2,
    meta learning rate 1e-4, 3 inner steps, balance weight 0.3, dropout 0.1,
    one episode per batch, 6000 epochs, fixed margin 5 for the
    non-adaptive-loss variants. `neg_per_class=None` means "use k_shots".
    """

    inner_lr: float = 0.2
    meta_lr: float = 1e-4
    inner_steps: int = 3
    alpha: float = 0.3
    epochs: int = 6000
    dropout_rate: float = 0.1
    episodes_per_batch: int = 1
    neg_per_class: int | None = None
    loss_variant: str = "improved"
    inference_variant: str = "margin-region"
    fixed_margin: float = 5.0
    outer_optimizer: str = "sgd"

    def __post_init__(self):
        if self.inner_lr <= 0 or self.meta_lr <= 0:
            raise ValidationError("learning rates must be strictly positive")
        if self.inner_steps < 0:
            raise ValidationError("inner_steps must be >= 0")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.episodes_per_batch < 1:
            raise ValidationError("episodes_per_batch must be >= 1")
        if self.neg_per_class is not None and self.neg_per_class < 1:
            raise ValidationError("neg_per_class must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValidationError(f"loss_variant must be one of {LOSS_VARIANTS}")
        if self.inference_variant not in INFERENCE_VARIANTS:
            raise ValidationError(f"inference_variant must be one of {INFERENCE_VARIANTS}")
        if self.fixed_margin <= 0:
            raise ValidationError("fixed_margin must be strictly positive")
        if self.outer_optimizer not in OUTER_OPTIMIZERS:
            raise ValidationError(f"outer_optimizer must be one of {OUTER_OPTIMIZERS}")

    def resolve_neg_per_class(self, k_shots: int) -> int:
        return self.neg_per_class if self.neg_per_class is not None else k_shots
