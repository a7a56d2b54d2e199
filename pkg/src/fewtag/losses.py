"""Prototype construction, triple mining, and the triplet loss family.

The improved loss weighs each term by how badly it violates the region
geometry: for distance d_p from anchor to positive, d_n from anchor to
negative, slot margin m, and balance weight alpha,

    loss = alpha * sigmoid(d_p - m) * d_p
         + (1 - alpha) * sigmoid(m - d_n) * max(m - d_n, 0)

so positives are pulled toward the anchor absolutely and negatives are
pushed out of the margin ball. Variants: `improved-no-weights` replaces both
sigmoid factors by 1, `improved-fixed-margin` uses one fixed margin with no
margin gradient, `original` is the classic relative hinge
max(0, m + d_p - d_n). All gradients are exact analytic partials; hinge
kinks return subgradient 0. Per-triple losses are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    EmptyClassError,
    NonFiniteError,
    NoNegativeError,
    NoPositiveError,
    ValidationError,
)
from .net import Grads, TripletNetParams, backward_batch, forward_batch
from .types import TrainConfig


@dataclass(frozen=True)
class PrototypeSet:
    """Per-way-slot class centers: input-space means, optionally mapped."""

    inputs: np.ndarray  # (n_ways, dim_in)
    mapped: np.ndarray | None = None  # (n_ways, hidden2) under some params

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValidationError("prototype inputs must be a (n_ways, dim) matrix")
        if not np.all(np.isfinite(self.inputs)):
            raise NonFiniteError("non-finite prototype")

    @property
    def n_ways(self) -> int:
        return self.inputs.shape[0]

    def with_mapped(self, mapped: np.ndarray) -> "PrototypeSet":
        return replace(self, mapped=mapped)


@dataclass(frozen=True)
class Triple:
    """Anchor (mapped prototype), positive, negative, plus their origins."""

    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray
    slot: int
    positive_index: int
    negative_index: int


def build_prototypes(vectors: np.ndarray, slots: np.ndarray, n_ways: int) -> PrototypeSet:
    """Arithmetic mean of the vectors of each way-slot's labeled tokens.

    `slots` holds the way-slot per token, with negatives (O) ignored.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    slots = np.asarray(slots)
    protos = np.empty((n_ways, vectors.shape[1]), dtype=np.float64)
    for i in range(n_ways):
        members = vectors[slots == i]
        if members.shape[0] == 0:
            raise EmptyClassError(i)
        protos[i] = members.mean(axis=0)
    return PrototypeSet(protos)


def construct_triples(
    protos: PrototypeSet, mapped_tokens: np.ndarray, slots: np.ndarray, k: int
) -> list[Triple]:
    """One triple per (positive, nearest-negative) pair for every way-slot.

    Negatives are the k tokens not labeled with the slot's type (O included)
    nearest to the mapped anchor in Euclidean distance; ties break toward the
    lower token position. Output order: slot ascending, then positive token
    position, then negative nearness rank.
    """
    if protos.mapped is None:
        raise ValidationError("construct_triples needs mapped prototypes")
    if k < 1:
        raise ValidationError(f"neg_per_class must be >= 1, got {k}")
    mapped_tokens = np.asarray(mapped_tokens, dtype=np.float64)
    slots = np.asarray(slots)
    triples: list[Triple] = []
    for i in range(protos.n_ways):
        anchor = protos.mapped[i]
        pos_idx = np.flatnonzero(slots == i)
        neg_idx = np.flatnonzero(slots != i)
        if pos_idx.size == 0:
            raise NoPositiveError(i)
        if neg_idx.size == 0:
            raise NoNegativeError(i)
        dists = np.linalg.norm(mapped_tokens[neg_idx] - anchor, axis=1)
        order = np.lexsort((neg_idx, dists))[: min(k, neg_idx.size)]
        chosen = neg_idx[order]
        for p in pos_idx:
            for n in chosen:
                triples.append(
                    Triple(anchor, mapped_tokens[p], mapped_tokens[n], i, int(p), int(n))
                )
    return triples


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _improved_terms(dp, dn, m, alpha, weighted=True):
    """Vectorized loss and partials (d_p, d_n, margin) of the improved loss."""
    hinge = np.maximum(m - dn, 0.0)
    active = (m - dn) > 0.0  # hinge kink gets subgradient 0
    if weighted:
        s_p = _sigmoid(dp - m)
        s_n = _sigmoid(m - dn)
        ds_p = s_p * (1.0 - s_p)
        ds_n = s_n * (1.0 - s_n)
        loss = alpha * s_p * dp + (1.0 - alpha) * s_n * hinge
        g_dp = alpha * (ds_p * dp + s_p)
        g_dn = -(1.0 - alpha) * (ds_n * hinge + s_n * active)
        g_m = -alpha * ds_p * dp + (1.0 - alpha) * (ds_n * hinge + s_n * active)
    else:
        loss = alpha * dp + (1.0 - alpha) * hinge
        g_dp = alpha * np.ones_like(dp)
        g_dn = -(1.0 - alpha) * active.astype(np.float64)
        g_m = (1.0 - alpha) * active.astype(np.float64)
    return loss, g_dp, g_dn, g_m


def _original_terms(dp, dn, m):
    loss = np.maximum(m + dp - dn, 0.0)
    inside = (m + dp - dn) > 0.0  # subgradient 0 at the boundary
    g = inside.astype(np.float64)
    return loss, g, -g, np.zeros_like(g)


def improved_triplet_loss(
    d_p: float, d_n: float, m_i: float, alpha: float
) -> tuple[float, float, float, float]:
    """Scalar improved loss with exact partials (loss, d/dd_p, d/dd_n, d/dm_i)."""
    if not (np.isfinite(d_p) and np.isfinite(d_n) and np.isfinite(m_i) and np.isfinite(alpha)):
        raise NonFiniteError("non-finite loss input")
    loss, g_dp, g_dn, g_m = _improved_terms(
        np.float64(d_p), np.float64(d_n), np.float64(m_i), alpha
    )
    return float(loss), float(g_dp), float(g_dn), float(g_m)


def original_triplet_loss(d_p: float, d_n: float, m: float) -> tuple[float, float, float]:
    """Relative-hinge triplet loss max(0, m + d_p - d_n) and its partials."""
    if not (np.isfinite(d_p) and np.isfinite(d_n) and np.isfinite(m)):
        raise NonFiniteError("non-finite loss input")
    loss, g_dp, g_dn, _ = _original_terms(np.float64(d_p), np.float64(d_n), np.float64(m))
    return float(loss), float(g_dp), float(g_dn)


def _variant_terms(cfg: TrainConfig, dp, dn, m_eff):
    if cfg.loss_variant == "improved":
        return _improved_terms(dp, dn, m_eff, cfg.alpha, weighted=True)
    if cfg.loss_variant == "improved-no-weights":
        return _improved_terms(dp, dn, m_eff, cfg.alpha, weighted=False)
    if cfg.loss_variant == "improved-fixed-margin":
        loss, g_dp, g_dn, _ = _improved_terms(
            dp, dn, np.full_like(dp, cfg.fixed_margin), cfg.alpha, weighted=True
        )
        return loss, g_dp, g_dn, np.zeros_like(dp)
    if cfg.loss_variant == "original":
        return _original_terms(dp, dn, np.full_like(dp, cfg.fixed_margin))
    raise ValidationError(f"unknown loss variant {cfg.loss_variant!r}")


def loss_margins(params: TripletNetParams, cfg: TrainConfig, n_ways: int) -> np.ndarray:
    """Effective per-slot margins under the configured loss variant.

    Adaptive variants use the learned (floored) margins; the fixed-margin
    and original variants use cfg.fixed_margin everywhere. The same values
    act as region radii at inference time.
    """
    if cfg.loss_variant in ("improved", "improved-no-weights"):
        if params.n_margins < n_ways:
            raise ValidationError(
                f"network holds {params.n_margins} margins but the episode has {n_ways} ways"
            )
        return params.effective_margins()[:n_ways]
    return np.full(n_ways, float(cfg.fixed_margin))


def episode_loss(
    params: TripletNetParams,
    protos: PrototypeSet,
    token_vecs: np.ndarray,
    token_slots: np.ndarray,
    cfg: TrainConfig,
    neg_per_class: int | None = None,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, Grads]:
    """Mean triple loss of one episode side and its full parameter gradient.

    Prototypes and tokens pass through the shared-weight network (one
    realized dropout mask per vector per call); gradients flow back through
    the anchor, positive, and negative branches, and into the margins for
    the adaptive variants.
    """
    k = neg_per_class if neg_per_class is not None else cfg.neg_per_class
    if k is None:
        raise ValidationError("neg_per_class is unset; pass it or set it in the config")

    rate = cfg.dropout_rate if train_mode else 0.0
    proto_out, proto_trace = forward_batch(params, protos.inputs, train_mode, rate, rng)
    tok_out, tok_trace = forward_batch(params, token_vecs, train_mode, rate, rng)
    n_ways = protos.n_ways
    m_eff = loss_margins(params, cfg, n_ways)

    triples = construct_triples(protos.with_mapped(proto_out), tok_out, token_slots, k)
    slot_arr = np.array([t.slot for t in triples])
    pos_arr = np.array([t.positive_index for t in triples])
    neg_arr = np.array([t.negative_index for t in triples])

    dp = np.linalg.norm(proto_out[slot_arr] - tok_out[pos_arr], axis=1)
    dn = np.linalg.norm(proto_out[slot_arr] - tok_out[neg_arr], axis=1)
    losses, g_dp, g_dn, g_m = _variant_terms(cfg, dp, dn, m_eff[slot_arr])
    weight = 1.0 / len(triples)
    total = float(losses.sum() * weight)

    # Distance direction vectors; subgradient 0 where a distance is exactly 0.
    with np.errstate(invalid="ignore", divide="ignore"):
        u_p = np.where(
            dp[:, None] > 0.0, (proto_out[slot_arr] - tok_out[pos_arr]) / dp[:, None], 0.0
        )
        u_n = np.where(
            dn[:, None] > 0.0, (proto_out[slot_arr] - tok_out[neg_arr]) / dn[:, None], 0.0
        )

    g_proto_out = np.zeros_like(proto_out)
    g_tok_out = np.zeros_like(tok_out)
    np.add.at(g_proto_out, slot_arr, weight * (g_dp[:, None] * u_p + g_dn[:, None] * u_n))
    np.add.at(g_tok_out, pos_arr, -weight * g_dp[:, None] * u_p)
    np.add.at(g_tok_out, neg_arr, -weight * g_dn[:, None] * u_n)

    net_grads = backward_batch(params, proto_trace, g_proto_out)
    net_grads.add_(backward_batch(params, tok_trace, g_tok_out))

    margin_grads = np.zeros(params.n_margins)
    np.add.at(margin_grads[:n_ways], slot_arr, weight * g_m)
    return total, Grads(net_grads.w1, net_grads.b1, net_grads.w2, net_grads.b2, margin_grads)
