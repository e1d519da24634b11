"""Tiny local backbones shared across the suite.

Everything runs offline on CPU: a two-layer BERT-style encoder with a
whitespace word-level tokenizer, and a two-layer ViT. Both are randomly
initialized, saved once per session, and loaded from disk by the code under
test exactly like a real checkpoint directory.
"""

import numpy as np
import pytest
import torch
import transformers
from PIL import Image
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from transformers import (
    BertConfig,
    BertModel,
    PreTrainedTokenizerFast,
    ViTConfig,
    ViTModel,
)

transformers.utils.logging.set_verbosity_error()
transformers.utils.logging.disable_progress_bar()

WORDS = [
    "the", "a", "cat", "dog", "sat", "ran", "on", "under", "mat", "tree",
    "red", "blue", "fast", "slow", "bird", "fish", "sky", "sea", "sun", "moon",
]
TEXT_HIDDEN = 32
VISION_HIDDEN = 24
# Distinct from the 32px low-resolution protocol so the two resize paths
# cannot coincide.
VISION_RESOLUTION = 48


@pytest.fixture(scope="session")
def text_backbone(tmp_path_factory):
    path = tmp_path_factory.mktemp("text-backbone")
    vocab = {"[PAD]": 0, "[UNK]": 1}
    for word in WORDS:
        vocab[word] = len(vocab)
    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, pad_token="[PAD]", unk_token="[UNK]"
    )
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=TEXT_HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(7)
    model = BertModel(config)
    model.save_pretrained(str(path))
    fast.save_pretrained(str(path))
    return str(path)


@pytest.fixture(scope="session")
def vision_backbone(tmp_path_factory):
    path = tmp_path_factory.mktemp("vision-backbone")
    config = ViTConfig(
        hidden_size=VISION_HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=48,
        image_size=VISION_RESOLUTION,
        patch_size=8,
        num_channels=3,
    )
    torch.manual_seed(9)
    model = ViTModel(config)
    model.save_pretrained(str(path))
    return str(path)


def make_sentences(rng: np.random.Generator, n: int) -> list[str]:
    lengths = rng.integers(1, 13, size=n)
    return [" ".join(rng.choice(WORDS, size=k)) for k in lengths]


def save_png(path, rng: np.random.Generator, width: int, height: int) -> str:
    arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    Image.fromarray(arr).save(path)
    return str(path)
