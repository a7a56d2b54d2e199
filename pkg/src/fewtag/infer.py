"""Region-based inference and token-level micro-F1 evaluation.

A region is a ball around a mapped prototype whose radius is the slot's
effective margin. A query point outside every region is labeled O; inside
exactly one region it takes that region's type; inside several it takes the
nearest center (boundary inclusive, ties to the smallest slot). The
nearest-prototype-with-O baseline instead adds an O center (mean of mapped
support O tokens) and picks the closest center outright.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import Corpus, Provider, assert_disjoint_label_sets
from .errors import DimensionMismatchError, ShapeMismatchError, ValidationError
from .net import MARGIN_FLOOR, TripletNetParams
from .rng import STREAM_EVAL, derive_seed
from .sampler import SamplerState, sample_episode
from .types import EpisodeConfig, LabelSet, O_LABEL_ID, O_SLOT, TrainConfig


@dataclass(frozen=True)
class RegionSet:
    """Per-way-slot region centers (mapped prototypes) and radii (margins)."""

    centers: np.ndarray  # (n_ways, hidden2)
    radii: np.ndarray  # (n_ways,)

    def __post_init__(self):
        if self.centers.ndim != 2 or self.centers.shape[0] < 1:
            raise ValidationError("centers must be a non-empty (n_ways, dim) matrix")
        if self.radii.shape != (self.centers.shape[0],):
            raise ValidationError("need exactly one radius per center")
        if np.any(self.radii < MARGIN_FLOOR):
            raise ValidationError(f"region radii must be >= {MARGIN_FLOOR}")

    @property
    def n_ways(self) -> int:
        return self.centers.shape[0]


def margin_region_predict_batch(regions: RegionSet, queries: np.ndarray) -> np.ndarray:
    """Way-slot (or O_SLOT) per query row, under the region rule."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != regions.centers.shape[1]:
        raise DimensionMismatchError(
            f"query dim {queries.shape[1]} != center dim {regions.centers.shape[1]}"
        )
    dists = np.linalg.norm(queries[:, None, :] - regions.centers[None, :, :], axis=2)
    inside = dists <= regions.radii  # boundary inclusive
    # argmin over distances masked to the containing set; first minimum wins,
    # which realizes the smallest-slot tie rule.
    masked = np.where(inside, dists, np.inf)
    best = masked.argmin(axis=1)
    return np.where(inside.any(axis=1), best, O_SLOT)


def margin_region_predict(regions: RegionSet, query: np.ndarray) -> int:
    """Single-query form of the region rule."""
    return int(margin_region_predict_batch(regions, np.asarray(query)[None, :])[0])


def nearest_prototype_predict_batch(
    entity_centers: np.ndarray, queries: np.ndarray, o_center: np.ndarray | None = None
) -> np.ndarray:
    """Plain nearest-center labels; entity slots win distance ties over O."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    entity_centers = np.asarray(entity_centers, dtype=np.float64)
    n_entities = entity_centers.shape[0]
    if n_entities + (0 if o_center is None else 1) < 2:
        raise ValidationError("nearest-prototype inference needs at least 2 centers")
    centers = entity_centers
    if o_center is not None:
        centers = np.vstack([entity_centers, np.asarray(o_center, dtype=np.float64)])
    if queries.shape[1] != centers.shape[1]:
        raise DimensionMismatchError(
            f"query dim {queries.shape[1]} != center dim {centers.shape[1]}"
        )
    dists = np.linalg.norm(queries[:, None, :] - centers[None, :, :], axis=2)
    best = dists.argmin(axis=1)  # O is ordered last, so ties prefer entities
    return np.where(best < n_entities, best, O_SLOT)


def nearest_prototype_predict(
    entity_centers: np.ndarray, query: np.ndarray, o_center: np.ndarray | None = None
) -> int:
    return int(
        nearest_prototype_predict_batch(entity_centers, np.asarray(query)[None, :], o_center)[0]
    )


def token_counts(
    gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]], o_label: int = O_LABEL_ID
) -> tuple[int, int, int]:
    """(true positives, predicted non-O, gold non-O) over all tokens."""
    if len(gold) != len(pred):
        raise ShapeMismatchError(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    tp = pred_pos = gold_pos = 0
    for g_seq, p_seq in zip(gold, pred):
        if len(g_seq) != len(p_seq):
            raise ShapeMismatchError(
                f"sequence length mismatch: {len(g_seq)} gold vs {len(p_seq)} predicted"
            )
        for g, p in zip(g_seq, p_seq):
            if p != o_label:
                pred_pos += 1
            if g != o_label:
                gold_pos += 1
            if p == g and g != o_label:
                tp += 1
    return tp, pred_pos, gold_pos


def prf_from_counts(tp: int, pred_pos: int, gold_pos: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with the all-zero conventions (empty -> 0)."""
    precision = tp / pred_pos if pred_pos > 0 else 0.0
    recall = tp / gold_pos if gold_pos > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def micro_f1(
    gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]], o_label: int = O_LABEL_ID
) -> tuple[float, float, float]:
    """Token-level micro precision/recall/F1 over pooled counts."""
    return prf_from_counts(*token_counts(gold, pred, o_label))


def label_spans(labels: Sequence[int], o_label: int = O_LABEL_ID) -> set[tuple[int, int, int]]:
    """Maximal same-label runs of non-O labels as (start, end, label)."""
    spans = set()
    start = None
    current = o_label
    for i, l in enumerate(labels):
        if l != current:
            if current != o_label:
                spans.add((start, i, current))
            start = i
            current = l
    if current != o_label:
        spans.add((start, len(labels), current))
    return spans


def span_counts(
    gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]], o_label: int = O_LABEL_ID
) -> tuple[int, int, int]:
    if len(gold) != len(pred):
        raise ShapeMismatchError(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    tp = pred_pos = gold_pos = 0
    for g_seq, p_seq in zip(gold, pred):
        if len(g_seq) != len(p_seq):
            raise ShapeMismatchError("sequence length mismatch")
        g_spans = label_spans(g_seq, o_label)
        p_spans = label_spans(p_seq, o_label)
        tp += len(g_spans & p_spans)
        pred_pos += len(p_spans)
        gold_pos += len(g_spans)
    return tp, pred_pos, gold_pos


def span_f1(
    gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]], o_label: int = O_LABEL_ID
) -> tuple[float, float, float]:
    """Span-level (exact-match) precision/recall/F1 for comparison runs."""
    return prf_from_counts(*span_counts(gold, pred, o_label))


@dataclass(frozen=True)
class EvalReport:
    """Pooled token micro metrics plus the per-episode F1 distribution."""

    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_episode_f1: tuple[float, ...]
    n_episodes: int
    span_precision: float | None = None
    span_recall: float | None = None
    span_f1: float | None = None

    def __post_init__(self):
        p, r = self.micro_precision, self.micro_recall
        expected = 2 * p * r / (p + r) if p + r > 0 else 0.0
        if not math.isclose(self.micro_f1, expected, rel_tol=1e-9, abs_tol=1e-12):
            raise ValidationError("micro_f1 is not the harmonic mean of precision and recall")
        if len(self.per_episode_f1) != self.n_episodes:
            raise ValidationError("per-episode list length disagrees with n_episodes")

    def per_episode_mean(self) -> float:
        return float(np.mean(self.per_episode_f1)) if self.per_episode_f1 else 0.0

    def per_episode_std(self) -> float:
        return float(np.std(self.per_episode_f1)) if self.per_episode_f1 else 0.0

    def to_line(self) -> str:
        """Machine-readable record: n, P, R, F1, per-episode mean, std."""
        fields = (
            str(self.n_episodes),
            f"{self.micro_precision:.10g}",
            f"{self.micro_recall:.10g}",
            f"{self.micro_f1:.10g}",
            f"{self.per_episode_mean():.10g}",
            f"{self.per_episode_std():.10g}",
        )
        return "\t".join(fields)

    def to_text(self, show_span: bool = False) -> str:
        lines = [
            f"episodes:            {self.n_episodes}",
            f"micro precision:     {self.micro_precision:.4f}",
            f"micro recall:        {self.micro_recall:.4f}",
            f"micro F1 (pooled):   {self.micro_f1:.4f}",
            f"per-episode F1 mean: {self.per_episode_mean():.4f}",
            f"per-episode F1 std:  {self.per_episode_std():.4f}",
        ]
        if show_span and self.span_f1 is not None:
            lines += [
                f"span precision:      {self.span_precision:.4f}",
                f"span recall:         {self.span_recall:.4f}",
                f"span F1 (pooled):    {self.span_f1:.4f}",
            ]
        return "\n".join(lines)


def evaluate(
    params: TripletNetParams,
    corpus: Corpus,
    provider: Provider,
    cfg: TrainConfig,
    episode_cfg: EpisodeConfig,
    n_episodes: int = 500,
    workers: int = 1,
    train_label_set: LabelSet | None = None,
) -> EvalReport:
    """Adapt-and-predict over sampled test episodes; pool token counts.

    Episodes are sampled deterministically from episode_cfg.seed; when the
    training label set is supplied the disjoint-split invariant is enforced.
    Workers only parallelize the per-episode math, never the sampling, so the
    report is identical for any worker count.
    """
    from . import trainer  # deferred: trainer imports this module

    if train_label_set is not None:
        assert_disjoint_label_sets(train_label_set, corpus.label_set)
    if n_episodes < 1:
        raise ValidationError(f"n_episodes must be >= 1, got {n_episodes}")
    cfg = replace(cfg, neg_per_class=cfg.resolve_neg_per_class(episode_cfg.k_shots))

    state = SamplerState(episode_cfg.seed)
    episodes = [sample_episode(corpus, episode_cfg, state) for _ in range(n_episodes)]

    def run_one(i: int):
        episode = episodes[i]
        adapt_seed = derive_seed(episode_cfg.seed, STREAM_EVAL, i)
        preds = trainer.test_adapt_and_predict(
            params, episode, provider, cfg, adapt_seed=adapt_seed
        )
        gold = [s.labels for s in episode.query]
        return token_counts(gold, preds), span_counts(gold, preds), micro_f1(gold, preds)[2]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, range(n_episodes)))
    else:
        results = [run_one(i) for i in range(n_episodes)]

    tok = np.sum([res[0] for res in results], axis=0)
    spn = np.sum([res[1] for res in results], axis=0)
    p, r, f1 = prf_from_counts(*tok)
    sp, sr, sf1 = prf_from_counts(*spn)
    return EvalReport(
        micro_precision=p,
        micro_recall=r,
        micro_f1=f1,
        per_episode_f1=tuple(res[2] for res in results),
        n_episodes=n_episodes,
        span_precision=sp,
        span_recall=sr,
        span_f1=sf1,
    )
