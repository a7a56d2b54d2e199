"""Few-shot sequence tagging with an adaptive-margin triplet network.

Entity types get prototype centers and learnable margins in a mapped metric
space; the O class is never modeled directly. Queries outside every margin
region are labeled O. Training is episodic with an inner/outer loop.
"""

from .corpus import (
    Corpus,
    EmbeddingStore,
    HashEmbedder,
    embeddings_for,
    hash_embed,
    load_embedding_store,
    parse_conll,
    save_embedding_store,
)
from .errors import FewtagError, ValidationError
from .infer import (
    EvalReport,
    RegionSet,
    evaluate,
    margin_region_predict,
    micro_f1,
    nearest_prototype_predict,
    span_f1,
)
from .losses import (
    PrototypeSet,
    Triple,
    build_prototypes,
    construct_triples,
    episode_loss,
    improved_triplet_loss,
    original_triplet_loss,
)
from .net import (
    MARGIN_FLOOR,
    TripletNetParams,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .sampler import SamplerState, relabel_for_episode, sample_episode
from .synth import SynthSpec, generate, multimodal_o_spec, separable_spec
from .trainer import (
    TrainerState,
    encode_episode,
    inner_adapt,
    outer_step,
    test_adapt_and_predict,
    train,
)
from .types import (
    Episode,
    EpisodeConfig,
    LabeledSentence,
    LabelSet,
    TrainConfig,
    validate_sentence,
)

__version__ = "0.1.0"
