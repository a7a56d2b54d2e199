import io
from collections import Counter

import pytest

from fewtag.corpus import Corpus
from fewtag.errors import ExhaustedCandidatesError, InsufficientDataError
from fewtag.sampler import (
    SamplerState,
    episode_counts,
    episode_from_json,
    episode_to_json,
    relabel_for_episode,
    sample_episode,
    write_episodes,
)
from fewtag.types import EpisodeConfig, LabeledSentence, LabelSet, O_LABEL_ID


def _sent(sid, labels):
    return LabeledSentence(sid, tuple(f"t{sid}_{i}" for i in range(len(labels))), tuple(labels))


def test_relabel_examples():
    s = _sent(0, [1, 3, 0])
    assert relabel_for_episode(s, {1}).labels == (1, 0, 0)
    s_all_o = _sent(1, [0, 0])
    assert relabel_for_episode(s_all_o, {1}).labels == (0, 0)
    s_keep = _sent(2, [2, 2])
    assert relabel_for_episode(s_keep, {1, 2}) == s_keep


def test_single_mention_sentences_force_exact_episode():
    # every sentence holds exactly one single-token mention of one type
    ls = LabelSet(("A", "B"))
    sents = [_sent(i, [1 if i % 2 == 0 else 2]) for i in range(8)]
    corpus = Corpus.from_sentences(sents, ls)
    cfg = EpisodeConfig(n_ways=2, k_shots=1, query_size=1, seed=3)
    ep = sample_episode(corpus, cfg, SamplerState(cfg.seed))
    assert len(ep.support) == 2 and len(ep.query) == 2
    sup, qry = episode_counts(ep)
    assert all(v == 1 for v in sup.values()) and all(v == 1 for v in qry.values())
    assert {s.sentence_id for s in ep.support}.isdisjoint(
        {s.sentence_id for s in ep.query}
    )


def test_type_in_single_sentence_is_insufficient():
    ls = LabelSet(("A", "B"))
    sents = [
        _sent(0, [1]),
        _sent(1, [1]),
        _sent(2, [2, 2]),  # B only ever occurs here
    ]
    corpus = Corpus.from_sentences(sents, ls)
    cfg = EpisodeConfig(n_ways=2, k_shots=1, query_size=1, seed=0)
    with pytest.raises(InsufficientDataError):
        sample_episode(corpus, cfg, SamplerState(0))


def test_too_few_types_is_insufficient():
    ls = LabelSet(("A",))
    corpus = Corpus.from_sentences([_sent(0, [1]), _sent(1, [1])], ls)
    with pytest.raises(InsufficientDataError) as exc:
        sample_episode(corpus, EpisodeConfig(2, 1, 1, 0), SamplerState(0))
    assert exc.value.have == 1 and exc.value.need == 2


def test_too_few_mentions_is_insufficient():
    ls = LabelSet(("A", "B"))
    sents = [_sent(0, [1]), _sent(1, [1]), _sent(2, [2]), _sent(3, [2]), _sent(4, [1])]
    corpus = Corpus.from_sentences(sents, ls)
    # B has 2 mentions but K+L = 4
    with pytest.raises(InsufficientDataError):
        sample_episode(corpus, EpisodeConfig(2, 2, 2, 1), SamplerState(1))


def test_cap_blocked_sentences_exhaust_candidates():
    ls = LabelSet(("A", "B"))
    sents = [
        _sent(0, [1, 1, 1, 2]),  # 3 A-mentions: exceeds the 2K cap for K=1
        _sent(1, [2]),
        _sent(2, [1]),
        _sent(3, [1]),
    ]
    corpus = Corpus.from_sentences(sents, ls)
    with pytest.raises(ExhaustedCandidatesError):
        # B is only elsewhere in s1; query pass cannot refill it
        sample_episode(corpus, EpisodeConfig(2, 1, 1, 5), SamplerState(5))


def test_same_seed_and_counter_reproduce_episode(small_synth):
    corpus, _ = small_synth
    cfg = EpisodeConfig(3, 2, 2, seed=77)
    a = sample_episode(corpus, cfg, SamplerState(cfg.seed, counter=4))
    b = sample_episode(corpus, cfg, SamplerState(cfg.seed, counter=4))
    assert a == b
    c = sample_episode(corpus, cfg, SamplerState(cfg.seed, counter=5))
    assert a != c


def test_episode_invariants_over_many_draws(small_synth):
    corpus, _ = small_synth
    cfg = EpisodeConfig(3, 2, 2, seed=11)
    state = SamplerState(cfg.seed)
    for _ in range(300):
        ep = sample_episode(corpus, cfg, state)
        assert len(set(ep.types)) == cfg.n_ways
        sup, qry = episode_counts(ep)
        for t in ep.types:
            assert cfg.k_shots <= sup[t] <= 2 * cfg.k_shots
            assert cfg.query_size <= qry[t] <= 2 * cfg.query_size
        sup_ids = {s.sentence_id for s in ep.support}
        qry_ids = {s.sentence_id for s in ep.query}
        assert not sup_ids & qry_ids
        allowed = set(ep.types) | {O_LABEL_ID}
        for sent in ep.support + ep.query:
            assert set(sent.labels) <= allowed


def test_type_selection_is_roughly_uniform(small_synth):
    corpus, _ = small_synth
    cfg = EpisodeConfig(2, 1, 1, seed=42)
    state = SamplerState(cfg.seed)
    seen = Counter()
    n = 1000
    for _ in range(n):
        seen.update(sample_episode(corpus, cfg, state).types)
    expected = n * cfg.n_ways / len(corpus.label_set.entity_ids)
    for t in corpus.label_set.entity_ids:
        assert abs(seen[t] - expected) <= 0.2 * expected


def test_episode_json_round_trip(small_synth):
    corpus, _ = small_synth
    cfg = EpisodeConfig(3, 2, 2, seed=9)
    state = SamplerState(cfg.seed)
    episodes = [sample_episode(corpus, cfg, state) for _ in range(5)]
    sink = io.StringIO()
    write_episodes(episodes, corpus.label_set, sink)
    lines = sink.getvalue().splitlines()
    assert len(lines) == 5
    for line, ep in zip(lines, episodes):
        again = episode_from_json(line, corpus.label_set)
        assert again == ep
        assert episode_to_json(again, corpus.label_set) == line
