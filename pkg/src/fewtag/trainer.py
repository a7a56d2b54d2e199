"""Episodic meta-training: inner adaptation on support, outer meta-update.

One outer step samples an episode, runs T full-batch gradient steps of the
episode loss on the support triples (inner learning rate gamma, margins
included, re-floored after every step), then evaluates the query loss at the
adapted parameters and applies that gradient to the original parameters with
the meta learning rate beta. This is the first-order approximation of the
meta-gradient: second-derivative terms through the inner steps are dropped.
Meta-testing reuses the same inner adaptation on an unseen episode's support
set and predicts its query tokens from the adapted regions.

All randomness derives from one seed: parameter init, episode sampling, and
per-step dropout use independent named sub-streams, so identical seeds give
bit-identical checkpoints.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, TextIO

import numpy as np

from .corpus import Corpus, Provider, embeddings_for, provider_dim
from .errors import NonFiniteError, ValidationError
from .infer import (
    RegionSet,
    margin_region_predict_batch,
    nearest_prototype_predict_batch,
)
from .losses import PrototypeSet, build_prototypes, episode_loss, loss_margins
from .net import (
    DEFAULT_HIDDEN1,
    DEFAULT_HIDDEN2,
    Grads,
    MARGIN_FLOOR,
    TripletNetParams,
    forward_batch,
    init_params,
    save_checkpoint,
)
from .rng import STREAM_DROPOUT, STREAM_EVAL, STREAM_INIT, derive_seed
from .sampler import SamplerState, sample_episode
from .types import (
    Episode,
    EpisodeConfig,
    O_LABEL_ID,
    O_SLOT,
    TrainConfig,
    mention_counts,
)

LossFn = Callable[[TripletNetParams, np.random.Generator | None], tuple[float, Grads]]


@dataclass(frozen=True)
class EncodedEpisode:
    """An episode realized as embedding matrices and way-slot labels."""

    types: tuple[int, ...]
    support_x: np.ndarray  # (n_support_tokens, dim)
    support_slots: np.ndarray  # way-slot per token, O_SLOT for O
    query_x: np.ndarray
    query_slots: np.ndarray
    query_lengths: tuple[int, ...]  # tokens per query sentence, in order
    protos: PrototypeSet  # input-space prototypes from the support set


def encode_episode(episode: Episode, provider: Provider) -> EncodedEpisode:
    """Embed every token and build the support prototypes."""
    slot_of = {t: i for i, t in enumerate(episode.types)}

    def realize(sentences):
        mats, slots = [], []
        for sent in sentences:
            mats.append(embeddings_for(provider, sent))
            slots.extend(slot_of.get(l, O_SLOT) for l in sent.labels)
        return np.vstack(mats).astype(np.float64), np.array(slots, dtype=np.int64)

    support_x, support_slots = realize(episode.support)
    query_x, query_slots = realize(episode.query)
    protos = build_prototypes(support_x, support_slots, len(episode.types))
    return EncodedEpisode(
        episode.types,
        support_x,
        support_slots,
        query_x,
        query_slots,
        tuple(len(s) for s in episode.query),
        protos,
    )


def apply_sgd(params: TripletNetParams, grads: Grads, lr: float) -> TripletNetParams:
    """One plain gradient step; margins floored; storage dtype preserved."""
    dtype = params.w1.dtype
    if grads.margins is None:
        margins = params.margins.copy()
    else:
        margins = np.maximum(
            params.margins.astype(np.float64) - lr * grads.margins, MARGIN_FLOOR
        ).astype(dtype)
    try:
        return TripletNetParams(
            (params.w1 - lr * grads.w1).astype(dtype),
            (params.b1 - lr * grads.b1).astype(dtype),
            (params.w2 - lr * grads.w2).astype(dtype),
            (params.b2 - lr * grads.b2).astype(dtype),
            margins,
        )
    except NonFiniteError as exc:
        raise NonFiniteError(f"non-finite update: {exc}") from exc


def _init_adamw_state(params: TripletNetParams) -> dict:
    zeros = lambda a: np.zeros(a.shape)
    return {
        "step": 0,
        "m": {n: zeros(getattr(params, n)) for n in ("w1", "b1", "w2", "b2", "margins")},
        "v": {n: zeros(getattr(params, n)) for n in ("w1", "b1", "w2", "b2", "margins")},
    }


def apply_adamw(
    params: TripletNetParams,
    grads: Grads,
    lr: float,
    opt: dict,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> TripletNetParams:
    """Adam with decoupled weight decay; decay hits the weight matrices only
    (biases and margins are excluded, as is conventional)."""
    opt["step"] += 1
    t = opt["step"]
    dtype = params.w1.dtype
    new = {}
    for name in ("w1", "b1", "w2", "b2", "margins"):
        g = getattr(grads, name)
        value = getattr(params, name).astype(np.float64)
        if g is None:
            new[name] = value.astype(dtype)
            continue
        m = opt["m"][name] = beta1 * opt["m"][name] + (1 - beta1) * g
        v = opt["v"][name] = beta2 * opt["v"][name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        step = m_hat / (np.sqrt(v_hat) + eps)
        if name in ("w1", "w2"):
            step = step + weight_decay * value
        new[name] = (value - lr * step).astype(dtype)
    new["margins"] = np.maximum(new["margins"], MARGIN_FLOOR).astype(dtype)
    try:
        return TripletNetParams(**new)
    except NonFiniteError as exc:
        raise NonFiniteError(f"non-finite update: {exc}") from exc


@dataclass
class TrainerState:
    """Parameters plus everything needed to continue training deterministically."""

    params: TripletNetParams
    seed: int
    epoch: int = 0
    opt: dict | None = None
    history: list[tuple[float, float]] = field(default_factory=list)


def _support_loss_fn(enc: EncodedEpisode, cfg: TrainConfig) -> LossFn:
    def fn(params, rng):
        return episode_loss(
            params, enc.protos, enc.support_x, enc.support_slots, cfg,
            train_mode=True, rng=rng,
        )

    return fn


def inner_adapt(
    params: TripletNetParams,
    enc: EncodedEpisode,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    loss_fn: LossFn | None = None,
) -> TripletNetParams:
    """T full-batch steps on the support triples; the input params are
    never mutated. loss_fn is a test seam replacing the episode loss."""
    if loss_fn is None:
        loss_fn = _support_loss_fn(enc, cfg)
    adapted = params
    for _ in range(cfg.inner_steps):
        _, grads = loss_fn(adapted, rng)
        adapted = apply_sgd(adapted, grads, cfg.inner_lr)
    return adapted


def _query_loss_and_grads(adapted, enc, cfg, rng):
    return episode_loss(
        adapted, enc.protos, enc.query_x, enc.query_slots, cfg, train_mode=True, rng=rng
    )


def outer_step(state: TrainerState, enc: EncodedEpisode, cfg: TrainConfig) -> TrainerState:
    """One meta-update from a single episode: adapt on support, step the
    original parameters with the query gradient taken at the adapted point."""
    return outer_step_batch(state, [enc], cfg)


def outer_step_batch(
    state: TrainerState, encs: Sequence[EncodedEpisode], cfg: TrainConfig
) -> TrainerState:
    """Meta-update from a batch of episodes (gradients averaged)."""
    if not encs:
        raise ValidationError("outer step needs at least one episode")
    total_grads: Grads | None = None
    support_losses, query_losses = [], []
    for j, enc in enumerate(encs):
        rng = np.random.default_rng(derive_seed(state.seed, STREAM_DROPOUT, state.epoch, j))
        adapted = inner_adapt(state.params, enc, cfg, rng=rng)
        support_after, _ = episode_loss(
            adapted, enc.protos, enc.support_x, enc.support_slots, cfg, train_mode=False
        )
        query_loss, grads = _query_loss_and_grads(adapted, enc, cfg, rng)
        support_losses.append(support_after)
        query_losses.append(query_loss)
        if total_grads is None:
            total_grads = grads
        else:
            total_grads.add_(grads)
    total_grads.scale_(1.0 / len(encs))

    if cfg.outer_optimizer == "adamw":
        opt = state.opt if state.opt is not None else _init_adamw_state(state.params)
        new_params = apply_adamw(state.params, total_grads, cfg.meta_lr, opt)
    else:
        opt = state.opt
        new_params = apply_sgd(state.params, total_grads, cfg.meta_lr)

    state.history.append((float(np.mean(support_losses)), float(np.mean(query_losses))))
    return TrainerState(
        params=new_params, seed=state.seed, epoch=state.epoch + 1, opt=opt,
        history=state.history,
    )


def train(
    corpus: Corpus,
    provider: Provider,
    cfg: TrainConfig,
    episode_cfg: EpisodeConfig,
    epochs: int | None = None,
    hidden1: int = DEFAULT_HIDDEN1,
    hidden2: int = DEFAULT_HIDDEN2,
    checkpoint_dir: str | None = None,
    checkpoint_every: int = 0,
    log_sink: TextIO | None = None,
) -> TrainerState:
    """Run the full episodic training loop.

    Episodes are sampled one batch per outer step; the loss log gets one
    tab-separated line per step (step, support loss after adaptation, query
    loss). Checkpoints are written every `checkpoint_every` steps (0 means
    final only, and only when checkpoint_dir is set).
    """
    epochs = cfg.epochs if epochs is None else epochs
    if epochs < 0:
        raise ValidationError("epochs must be >= 0")
    cfg = replace(cfg, neg_per_class=cfg.resolve_neg_per_class(episode_cfg.k_shots))

    params = init_params(
        provider_dim(provider),
        episode_cfg.n_ways,
        derive_seed(episode_cfg.seed, STREAM_INIT),
        hidden1,
        hidden2,
    )
    state = TrainerState(params=params, seed=episode_cfg.seed)
    sampler = SamplerState(episode_cfg.seed)

    for step in range(epochs):
        encs = [
            encode_episode(sample_episode(corpus, episode_cfg, sampler), provider)
            for _ in range(cfg.episodes_per_batch)
        ]
        state = outer_step_batch(state, encs, cfg)
        support_loss, query_loss = state.history[-1]
        if log_sink is not None:
            log_sink.write(f"{step + 1}\t{support_loss:.10g}\t{query_loss:.10g}\n")
        if checkpoint_dir and checkpoint_every and (step + 1) % checkpoint_every == 0:
            save_checkpoint(
                state.params, os.path.join(checkpoint_dir, f"ckpt_{step + 1:06d}.mtn")
            )
    if checkpoint_dir:
        save_checkpoint(state.params, os.path.join(checkpoint_dir, "checkpoint.mtn"))
    return state


def adapted_regions(
    params: TripletNetParams, enc: EncodedEpisode, cfg: TrainConfig
) -> RegionSet:
    """Mapped support prototypes with their margin radii, in eval mode."""
    centers, _ = forward_batch(params, enc.protos.inputs)
    radii = loss_margins(params, cfg, enc.protos.n_ways)
    return RegionSet(centers, radii)


def test_adapt_and_predict(
    params: TripletNetParams,
    episode: Episode,
    provider: Provider,
    cfg: TrainConfig,
    adapt_seed: int = 0,
) -> list[np.ndarray]:
    """Fine-tune a parameter clone on the episode's support set, then label
    its query tokens; returns one label-id array per query sentence.

    The episode is expected to come from a label set disjoint from training
    (enforced by `evaluate` when it knows the training labels). The input
    parameters are never modified. When cfg.neg_per_class is unset it
    defaults to the episode's own shot count (its smallest per-type support
    mention count).
    """
    enc = encode_episode(episode, provider)
    if cfg.neg_per_class is None:
        counts = mention_counts(episode.support, episode.types)
        cfg = replace(cfg, neg_per_class=min(counts.values()))
    rng = np.random.default_rng(derive_seed(adapt_seed, STREAM_EVAL))
    adapted = inner_adapt(params, enc, cfg, rng=rng)

    query_out, _ = forward_batch(adapted, enc.query_x)
    if cfg.inference_variant == "margin-region":
        slots = margin_region_predict_batch(adapted_regions(adapted, enc, cfg), query_out)
    else:
        centers, _ = forward_batch(adapted, enc.protos.inputs)
        o_mask = enc.support_slots == O_SLOT
        o_center = None
        if np.any(o_mask):
            support_out, _ = forward_batch(adapted, enc.support_x[o_mask])
            o_center = support_out.mean(axis=0)
        slots = nearest_prototype_predict_batch(centers, query_out, o_center)

    type_of_slot = np.array(episode.types, dtype=np.int64)
    labels = np.where(slots >= 0, type_of_slot[np.maximum(slots, 0)], O_LABEL_ID)
    out, offset = [], 0
    for length in enc.query_lengths:
        out.append(labels[offset : offset + length])
        offset += length
    return out
