"""N-way K-shot episode construction.

Sampling is sentence-level and greedy: draw N distinct entity types, shuffle
the candidate sentences, and add a sentence to the support set when it
mentions an under-filled sampled type without pushing any sampled type past
the mention cap (2K for support, 2L for query by default). Query sentences
are drawn the same way from the remaining candidates, so support and query
never share a sentence. Mentions of non-sampled types are relabeled to O.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Iterable, TextIO

from .corpus import Corpus
from .errors import ExhaustedCandidatesError, InsufficientDataError, UnknownLabelError
from .rng import STREAM_SAMPLER, derive_seed
from .types import (
    Episode,
    EpisodeConfig,
    LabeledSentence,
    LabelSet,
    O_LABEL_ID,
    mention_counts,
)


@dataclass
class SamplerState:
    """Deterministic episode stream: (seed, counter) fixes each episode.

    max-mention caps default to 2x the per-type target (2K support, 2L
    query); explicit values override both.
    """

    seed: int
    counter: int = 0
    support_cap: int | None = None
    query_cap: int | None = None

    def episode_rng(self) -> random.Random:
        return random.Random(derive_seed(self.seed, STREAM_SAMPLER, self.counter))


def relabel_for_episode(sentence: LabeledSentence, types: Iterable[int]) -> LabeledSentence:
    """Map labels outside the sampled `types` to O; tokens are untouched."""
    keep = set(types)
    labels = tuple(l if l in keep else O_LABEL_ID for l in sentence.labels)
    return LabeledSentence(sentence.sentence_id, sentence.tokens, labels)


def _greedy_fill(candidates, per_sentence_counts, types, target, cap, what):
    """Pick sentences until every type has >= target mentions, respecting cap.

    Returns (chosen sentence ids, remaining candidate ids in order).
    """
    counts = {t: 0 for t in types}
    chosen: list[int] = []
    remaining: list[int] = []
    done = False
    for sid in candidates:
        if done:
            remaining.append(sid)
            continue
        sent_counts = per_sentence_counts[sid]
        helps = any(counts[t] < target and sent_counts.get(t, 0) > 0 for t in types)
        fits = all(counts[t] + sent_counts.get(t, 0) <= cap for t in types)
        if helps and fits:
            chosen.append(sid)
            for t in types:
                counts[t] += sent_counts.get(t, 0)
            done = all(counts[t] >= target for t in types)
        else:
            remaining.append(sid)
    if not done:
        lacking = {t: c for t, c in counts.items() if c < target}
        raise ExhaustedCandidatesError(
            f"ran out of candidate sentences for the {what} set; "
            f"short types (have vs need {target}): {lacking}"
        )
    return chosen, remaining


def sample_episode(corpus: Corpus, cfg: EpisodeConfig, state: SamplerState) -> Episode:
    """Draw one episode and advance the sampler counter."""
    rng = state.episode_rng()
    state.counter += 1

    type_ids = list(corpus.label_set.entity_ids)
    if len(type_ids) < cfg.n_ways:
        raise InsufficientDataError("entity types", len(type_ids), cfg.n_ways)
    types = rng.sample(type_ids, cfg.n_ways)

    need = cfg.k_shots + cfg.query_size
    for t in types:
        holding = corpus.index[t]
        total = sum(corpus.sentence_by_id(sid).labels.count(t) for sid in holding)
        name = corpus.label_set.name_of(t)
        if total < need:
            raise InsufficientDataError(f"type {name!r}", total, need)
        if len(holding) < 2:
            raise InsufficientDataError(
                f"type {name!r}", len(holding), 2,
                detail="mentions must be spread over at least 2 sentences",
            )

    candidate_ids = sorted({sid for t in types for sid in corpus.index[t]})
    rng.shuffle(candidate_ids)
    per_sentence = {
        sid: {
            t: corpus.sentence_by_id(sid).labels.count(t)
            for t in types
            if t in corpus.sentence_by_id(sid).labels
        }
        for sid in candidate_ids
    }

    support_cap = state.support_cap if state.support_cap is not None else 2 * cfg.k_shots
    query_cap = state.query_cap if state.query_cap is not None else 2 * cfg.query_size
    support_ids, remaining = _greedy_fill(
        candidate_ids, per_sentence, types, cfg.k_shots, support_cap, "support"
    )
    query_ids, _ = _greedy_fill(
        remaining, per_sentence, types, cfg.query_size, query_cap, "query"
    )

    support = tuple(relabel_for_episode(corpus.sentence_by_id(s), types) for s in support_ids)
    query = tuple(relabel_for_episode(corpus.sentence_by_id(s), types) for s in query_ids)
    return Episode(tuple(types), support, query)


def episode_counts(episode: Episode) -> tuple[dict[int, int], dict[int, int]]:
    """Per-type mention counts in (support, query); used by invariant checks."""
    return (
        mention_counts(episode.support, episode.types),
        mention_counts(episode.query, episode.types),
    )


def _sentence_to_json(sent: LabeledSentence, label_set: LabelSet) -> dict:
    return {
        "id": sent.sentence_id,
        "tokens": list(sent.tokens),
        "labels": [label_set.name_of(l) for l in sent.labels],
    }


def _sentence_from_json(obj: dict, label_set: LabelSet) -> LabeledSentence:
    labels = tuple(label_set.id_of(name) for name in obj["labels"])
    return LabeledSentence(int(obj["id"]), tuple(obj["tokens"]), labels)


def episode_to_json(episode: Episode, label_set: LabelSet) -> str:
    """One-line JSON rendering with label names instead of interned ids."""
    doc = {
        "types": [label_set.name_of(t) for t in episode.types],
        "support": [_sentence_to_json(s, label_set) for s in episode.support],
        "query": [_sentence_to_json(s, label_set) for s in episode.query],
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=True)


def episode_from_json(line: str, label_set: LabelSet) -> Episode:
    """Inverse of episode_to_json; revalidates all episode invariants."""
    doc = json.loads(line)
    types = tuple(label_set.id_of(name) for name in doc["types"])
    if O_LABEL_ID in types:
        raise UnknownLabelError(label_set.o_label)
    support = tuple(_sentence_from_json(s, label_set) for s in doc["support"])
    query = tuple(_sentence_from_json(s, label_set) for s in doc["query"])
    return Episode(types, support, query)


def write_episodes(episodes: Iterable[Episode], label_set: LabelSet, sink: TextIO) -> None:
    for ep in episodes:
        sink.write(episode_to_json(ep, label_set))
        sink.write("\n")
