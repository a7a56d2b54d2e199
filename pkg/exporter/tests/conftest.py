import pytest
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers
from tokenizers.processors import TemplateProcessing
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "hello", "wor", "##li", "##ng", "a", "b", ".", "the", "paris",
    "in", "##s", "city", "big",
]
HIDDEN = 16


@pytest.fixture(scope="session")
def hidden_size():
    return HIDDEN


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory):
    """A tiny randomly initialized word-piece encoder saved to disk, so the
    full export path runs offline."""
    path = tmp_path_factory.mktemp("encoder")
    wp = models.WordPiece(
        {t: i for i, t in enumerate(VOCAB)}, unk_token="[UNK]",
        max_input_chars_per_word=100,
    )
    tk = Tokenizer(wp)
    tk.normalizer = normalizers.BertNormalizer(lowercase=True)
    tk.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tk.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[("[CLS]", VOCAB.index("[CLS]")), ("[SEP]", VOCAB.index("[SEP]"))],
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tk, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]",
    )
    config = BertConfig(
        vocab_size=len(VOCAB), hidden_size=HIDDEN, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=32, max_position_embeddings=48,
    )
    torch.manual_seed(1234)
    model = BertModel(config)
    model.eval()
    fast.save_pretrained(str(path))
    model.save_pretrained(str(path))
    return str(path)


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    """Ten sentences; 'worling' splits into three pieces for pooling tests."""
    lines = []
    sents = [
        ["hello", "worling", "."],
        ["the", "paris", "city"],
        ["a", "b", "a", "b"],
        ["big", "hello"],
        ["paris", "in", "the", "city"],
        ["worling", "worling"],
        ["the", "big", "b"],
        ["a", "."],
        ["hello", "the", "paris"],
        ["in", "a", "city", "."],
    ]
    for sent in sents:
        for tok in sent:
            lines.append(f"{tok} O")
        lines.append("")
    path = tmp_path_factory.mktemp("corpus") / "ten.conll"
    path.write_text("\n".join(lines), encoding="utf-8")
    return str(path)
