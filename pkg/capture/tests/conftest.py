"""Shared fixture: a tiny randomly initialized GPT-2 checkpoint on disk.

No model-hub access is available here, so the tests exercise the real
loading, hooking, generation, and serialization paths against a local
4-block, 32-wide transformer with a functional byte-level tokenizer.
"""

import json

import pytest
import torch
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer


def _byte_alphabet():
    # byte-level BPE base alphabet: printable remap of all 256 byte values
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return [chr(c) for c in cs]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinygpt")
    torch.manual_seed(1234)
    config = GPT2Config(
        vocab_size=257,
        n_positions=256,
        n_embd=32,
        n_layer=4,
        n_head=4,
        bos_token_id=None,
        eos_token_id=None,  # never stops early: token counts stay exact
    )
    GPT2LMHeadModel(config).save_pretrained(root)

    vocab = {ch: i for i, ch in enumerate(_byte_alphabet())}
    vocab["<|endoftext|>"] = 256
    (root / "vocab.json").write_text(json.dumps(vocab))
    (root / "merges.txt").write_text("#version: 0.2\n")
    GPT2Tokenizer(str(root / "vocab.json"), str(root / "merges.txt")).save_pretrained(root)
    return str(root)
