"""Command-line interface.

Subcommands: train, eval, sample-episodes, export-points. Exit codes:
0 success, 1 runtime error, 2 usage or config error. Diagnostics go to
stderr; data goes to stdout or --out. Every run is reproducible from the
single --seed flag. An optional key=value config file supplies defaults;
explicit flags override it.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from typing import Sequence, TextIO

import numpy as np

from .corpus import (
    Corpus,
    HashEmbedder,
    Provider,
    load_embedding_store,
    parse_conll,
)
from .errors import FewtagError, ValidationError
from .infer import evaluate
from .net import DEFAULT_HIDDEN1, DEFAULT_HIDDEN2, forward_batch, load_checkpoint
from .sampler import SamplerState, sample_episode, write_episodes
from .trainer import adapted_regions, encode_episode, inner_adapt, train
from .rng import STREAM_EVAL, derive_seed
from .types import EpisodeConfig, O_SLOT, TrainConfig


class _UsageError(Exception):
    """Bad flags, paths, or config values; mapped to exit code 2."""


def _require_file(path: str | None, flag: str) -> str:
    if not path:
        raise _UsageError(f"{flag} is required")
    if not os.path.isfile(path):
        raise _UsageError(f"{flag}: file not found: {path}")
    return path


def _load_corpus(path: str, flag: str = "--corpus") -> Corpus:
    with open(_require_file(path, flag), "r", encoding="utf-8") as fh:
        return parse_conll(fh)


def _provider(args) -> Provider:
    if args.store:
        with open(_require_file(args.store, "--store"), "rb") as fh:
            return load_embedding_store(fh)
    return HashEmbedder(dim=args.hash_dim, seed=args.hash_seed)


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(
            inner_lr=args.inner_lr,
            meta_lr=args.meta_lr,
            inner_steps=args.inner_steps,
            alpha=args.alpha,
            epochs=max(args.epochs, 1) if hasattr(args, "epochs") else 1,
            dropout_rate=args.dropout,
            episodes_per_batch=getattr(args, "episodes_per_batch", 1),
            neg_per_class=getattr(args, "neg_per_class", None),
            loss_variant=args.loss_variant,
            inference_variant=args.inference_variant,
            fixed_margin=args.fixed_margin,
            outer_optimizer=getattr(args, "outer_optimizer", "sgd"),
        )
    except ValidationError as exc:
        raise _UsageError(str(exc)) from exc


def _episode_config(args) -> EpisodeConfig:
    try:
        return EpisodeConfig(
            n_ways=args.n_ways,
            k_shots=args.k_shots,
            query_size=args.query_size,
            seed=args.seed,
        )
    except ValidationError as exc:
        raise _UsageError(str(exc)) from exc


def _open_out(args) -> TextIO:
    return open(args.out, "w", encoding="utf-8") if args.out else sys.stdout


def write_points_csv(
    queries: np.ndarray,
    query_slots: Sequence[int],
    query_labels: Sequence[str],
    prototypes: np.ndarray,
    type_names: Sequence[str],
    sink: TextIO,
) -> None:
    """CSV of mapped query tokens and prototypes for external plotting.

    Header: kind,slot,label,dim_0..dim_{H-1}. Floats are written with repr
    precision so the file re-parses losslessly.
    """
    dim = prototypes.shape[1] if prototypes.ndim == 2 else queries.shape[1]
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["kind", "slot", "label"] + [f"dim_{i}" for i in range(dim)])
    for vec, slot, label in zip(queries, query_slots, query_labels):
        writer.writerow(["query", int(slot), label] + [repr(float(v)) for v in vec])
    for i, (vec, name) in enumerate(zip(prototypes, type_names)):
        writer.writerow(["prototype", i, name] + [repr(float(v)) for v in vec])


def cmd_train(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _provider(args)
    cfg = _train_config(args)
    episode_cfg = _episode_config(args)
    if args.epochs < 0:
        raise _UsageError("--epochs must be >= 0")
    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, "loss_log.tsv")
    with open(log_path, "w", encoding="utf-8") as log:
        train(
            corpus,
            provider,
            cfg,
            episode_cfg,
            epochs=args.epochs,
            hidden1=args.hidden1,
            hidden2=args.hidden2,
            checkpoint_dir=args.out_dir,
            checkpoint_every=args.checkpoint_every,
            log_sink=log,
        )
    print(
        f"wrote {os.path.join(args.out_dir, 'checkpoint.mtn')} and {log_path}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _provider(args)
    params = load_checkpoint(_require_file(args.checkpoint, "--checkpoint"))
    cfg = _train_config(args)
    episode_cfg = _episode_config(args)
    train_labels = None
    if args.train_corpus:
        train_labels = _load_corpus(args.train_corpus, "--train-corpus").label_set
    report = evaluate(
        params,
        corpus,
        provider,
        cfg,
        episode_cfg,
        n_episodes=args.episodes,
        workers=args.workers,
        train_label_set=train_labels,
    )
    out = _open_out(args)
    try:
        if args.format == "line":
            out.write(report.to_line() + "\n")
        else:
            out.write(report.to_text(show_span=args.span_f1) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_sample_episodes(args) -> int:
    corpus = _load_corpus(args.corpus)
    episode_cfg = _episode_config(args)
    state = SamplerState(episode_cfg.seed)
    episodes = [sample_episode(corpus, episode_cfg, state) for _ in range(args.episodes)]
    out = _open_out(args)
    try:
        write_episodes(episodes, corpus.label_set, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_export_points(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _provider(args)
    params = load_checkpoint(_require_file(args.checkpoint, "--checkpoint"))
    cfg = _train_config(args)
    episode_cfg = _episode_config(args)
    state = SamplerState(episode_cfg.seed, counter=args.episode_index)
    episode = sample_episode(corpus, episode_cfg, state)
    enc = encode_episode(episode, provider)
    if args.adapt:
        cfg_resolved = replace(
            cfg, neg_per_class=cfg.resolve_neg_per_class(episode_cfg.k_shots)
        )
        rng = np.random.default_rng(derive_seed(episode_cfg.seed, STREAM_EVAL, args.episode_index))
        params = inner_adapt(params, enc, cfg_resolved, rng=rng)
    mapped_queries, _ = forward_batch(params, enc.query_x)
    regions = adapted_regions(params, enc, cfg)
    names = [corpus.label_set.name_of(t) for t in enc.types]
    labels = [
        names[s] if s != O_SLOT else corpus.label_set.o_label for s in enc.query_slots
    ]
    out = _open_out(args)
    try:
        write_points_csv(mapped_queries, enc.query_slots, labels, regions.centers, names, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _add_provider_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--store", help="EMBV1 embedding store path (default: hash embedder)")
    p.add_argument("--hash-dim", type=int, default=768, help="hash embedder dimension")
    p.add_argument("--hash-seed", type=int, default=0, help="hash embedder seed")


def _add_episode_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-ways", type=int, default=5, help="entity types per episode (N)")
    p.add_argument("--k-shots", type=int, default=5, help="support mentions per type (K)")
    p.add_argument("--query-size", type=int, default=5, help="query mentions per type (L)")
    p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")


def _add_train_hparams(p: argparse.ArgumentParser) -> None:
    p.add_argument("--inner-lr", type=float, default=0.2, help="support-set learning rate")
    p.add_argument("--meta-lr", type=float, default=1e-4, help="meta (outer) learning rate")
    p.add_argument("--inner-steps", type=int, default=3, help="adaptation steps per episode")
    p.add_argument("--alpha", type=float, default=0.3, help="loss balancing weight")
    p.add_argument("--dropout", type=float, default=0.1, help="dropout rate (train mode)")
    p.add_argument(
        "--loss-variant",
        choices=["improved", "improved-no-weights", "improved-fixed-margin", "original"],
        default="improved",
        help="triplet loss flavor",
    )
    p.add_argument(
        "--inference-variant",
        choices=["margin-region", "nearest-prototype-with-o"],
        default="margin-region",
        help="query labeling rule",
    )
    p.add_argument(
        "--fixed-margin", type=float, default=5.0,
        help="margin for the fixed-margin/original variants",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewtag",
        description="Few-shot tagging with an adaptive-margin triplet network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("train", help="meta-train on a corpus", formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="CoNLL training corpus")
    p.add_argument("--config", help="key=value defaults file (flags override)")
    _add_provider_args(p)
    _add_episode_args(p)
    _add_train_hparams(p)
    p.add_argument("--epochs", type=int, default=6000, help="outer steps")
    p.add_argument(
        "--episodes-per-batch", type=int, default=1, help="episodes per outer step"
    )
    p.add_argument(
        "--neg-per-class", type=int, default=None,
        help="negatives mined per class (default: K)",
    )
    p.add_argument(
        "--outer-optimizer", choices=["sgd", "adamw"], default="sgd",
        help="outer-loop optimizer",
    )
    p.add_argument("--hidden1", type=int, default=DEFAULT_HIDDEN1, help="first hidden width")
    p.add_argument("--hidden2", type=int, default=DEFAULT_HIDDEN2, help="output width")
    p.add_argument("--out-dir", default=".", help="directory for checkpoint and loss log")
    p.add_argument(
        "--checkpoint-every", type=int, default=0,
        help="also write a checkpoint every this many steps (0: final only)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on meta-test episodes",
                       formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="CoNLL meta-test corpus")
    p.add_argument("--config", help="key=value defaults file (flags override)")
    p.add_argument("--checkpoint", required=True, help="MTN1 checkpoint path")
    _add_provider_args(p)
    _add_episode_args(p)
    _add_train_hparams(p)
    p.add_argument("--episodes", type=int, default=500, help="meta-test episodes")
    p.add_argument("--workers", type=int, default=1, help="evaluation parallelism cap")
    p.add_argument(
        "--train-corpus", default=None,
        help="training corpus used to verify the label sets are disjoint",
    )
    p.add_argument("--span-f1", action="store_true", help="also show span-level F1")
    p.add_argument("--format", choices=["text", "line"], default="text",
                   help="report style")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample-episodes", help="emit episodes as JSON lines",
                       formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="CoNLL corpus")
    p.add_argument("--config", help="key=value defaults file (flags override)")
    _add_episode_args(p)
    p.add_argument("--episodes", type=int, default=10, help="episodes to emit")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_sample_episodes)

    p = sub.add_parser("export-points", help="CSV of mapped query points and prototypes",
                       formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="CoNLL corpus")
    p.add_argument("--config", help="key=value defaults file (flags override)")
    p.add_argument("--checkpoint", required=True, help="MTN1 checkpoint path")
    _add_provider_args(p)
    _add_episode_args(p)
    _add_train_hparams(p)
    p.add_argument("--episode-index", type=int, default=0, help="episode counter to export")
    p.add_argument("--adapt", action=argparse.BooleanOptionalAction, default=True,
                   help="fine-tune on the episode support set first")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_export_points)

    return parser


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file entries in as flags placed before the explicit ones."""
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise _UsageError("--config needs a path")
    path = argv[at + 1]
    rest = argv[:at] + argv[at + 2 :]
    if not rest:
        raise _UsageError("--config must follow a subcommand")
    if not os.path.isfile(path):
        raise _UsageError(f"--config: file not found: {path}")
    flags: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _UsageError(f"--config: line {lineno} is not key=value: {raw.rstrip()}")
            key, value = (part.strip() for part in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() in ("true", "false"):
                if value.lower() == "true":
                    flags.append(flag)
            else:
                flags.extend([flag, value])
    return [rest[0]] + flags + rest[1:]


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _expand_config(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FewtagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
