"""Hidden-activation capture from a causal transformer during generation.

Runs token-by-token generation on a HuggingFace causal LM and records, for
every generated token, the concatenated last-position hidden states of a
chosen subset of transformer blocks. Rows are emitted either as an "SPAC" v1
activation container (the format the rmtkit toolkit consumes) or as
length-prefixed float32 frames pushed to a TCP socket for live monitoring.

The byte layout is produced here independently from the consumer; the
container format is the only contract between the two packages.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

SPAC_MAGIC = b"SPAC"
SPAC_VERSION = 1
FLAG_STRUCTURED = 0x0001


@dataclass
class CaptureConfig:
    """What to capture and where to send it.

    ``layers`` are transformer block indices (0-based); None selects every
    fourth block, which is dense enough for spectral monitoring since
    adjacent blocks carry strongly correlated spectra. Exactly one of ``out``
    (container path) and ``stream`` (HOST:PORT) must be set before a run.
    """

    model: str
    layers: list[int] | None = None
    max_new_tokens: int = 128
    temperature: float = 0.2
    greedy: bool = False
    seed: int = 0
    final_norm: bool = False  # also pass states through the model's final norm
    structured_flag: bool = False  # value of the container's label bit
    out: str | None = None
    stream: str | None = None

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.layers is not None and len(self.layers) == 0:
            raise ValueError("need at least one layer index")
        if (self.out is None) == (self.stream is None):
            raise ValueError("exactly one of out= (container) and stream= (HOST:PORT) is required")


def default_layers(n_blocks: int) -> list[int]:
    return list(range(0, n_blocks, 4))


def write_container(path: str | Path, rows: np.ndarray, structured: bool = False) -> None:
    """Write a T x D float32 matrix in the "SPAC" v1 byte layout."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    t, d = rows.shape
    flags = FLAG_STRUCTURED if structured else 0
    with open(path, "wb") as fh:
        fh.write(SPAC_MAGIC)
        fh.write(struct.pack("<HHII", SPAC_VERSION, flags, t, d))
        fh.write(rows.tobytes())


def encode_frame(row: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(row, dtype="<f4").tobytes()
    return struct.pack("<I", len(payload)) + payload


def _resolve_prompt_ids(tokenizer_source: str, prompt, prompt_ids) -> torch.Tensor:
    if (prompt is None) == (prompt_ids is None):
        raise ValueError("exactly one of prompt (text) and prompt_ids is required")
    if prompt_ids is not None:
        ids = [int(t) for t in prompt_ids]
        if not ids:
            raise ValueError("prompt_ids is empty")
        return torch.tensor([ids], dtype=torch.long)
    tokenizer = AutoTokenizer.from_pretrained(tokenizer_source)
    ids = tokenizer(prompt).input_ids
    if not ids:
        raise ValueError("prompt tokenized to zero tokens")
    return torch.tensor([ids], dtype=torch.long)


def capture_run(config: CaptureConfig, prompt: str | None = None, prompt_ids=None) -> tuple[int, int]:
    """Generate and capture; returns (tokens_written, row_width).

    One row per generated token: the concatenation of the selected blocks'
    hidden states at the position whose logits produced that token, in
    float32. File output is buffered and written whole, so a width violation
    can never leave a partial container behind.
    """
    model = AutoModelForCausalLM.from_pretrained(config.model)
    model.eval()
    n_blocks = int(model.config.num_hidden_layers)
    layers = default_layers(n_blocks) if config.layers is None else list(config.layers)
    if not layers:
        raise ValueError("need at least one layer index")
    for layer in layers:
        if not (0 <= layer < n_blocks):
            raise ValueError(f"layer index {layer} out of range [0, {n_blocks})")

    final_norm = None
    if config.final_norm:
        final_norm = _find_final_norm(model)

    ids = _resolve_prompt_ids(config.model, prompt, prompt_ids)
    max_context = getattr(model.config, "max_position_embeddings", None)
    generator = torch.Generator().manual_seed(config.seed)
    eos = model.config.eos_token_id

    sink = _open_sink(config)
    rows: list[np.ndarray] = []
    width: int | None = None
    try:
        with torch.no_grad():
            for _ in range(config.max_new_tokens):
                if max_context is not None and ids.shape[1] >= max_context:
                    break
                output = model(ids, output_hidden_states=True, use_cache=False)
                hidden = output.hidden_states  # embeddings + one entry per block
                pieces = []
                for layer in layers:
                    state = hidden[layer + 1][0, -1]
                    if final_norm is not None:
                        state = final_norm(state)
                    pieces.append(state)
                row = torch.cat(pieces).to(torch.float32).numpy()
                if width is None:
                    width = row.shape[0]
                elif row.shape[0] != width:
                    raise RuntimeError(
                        f"row width changed mid-capture: {row.shape[0]} != {width}"
                    )
                rows.append(row)
                sink.push(row)

                logits = output.logits[0, -1]
                if config.greedy:
                    next_id = int(torch.argmax(logits))
                else:
                    probs = torch.softmax(logits / config.temperature, dim=-1)
                    next_id = int(torch.multinomial(probs, 1, generator=generator))
                ids = torch.cat([ids, torch.tensor([[next_id]], dtype=torch.long)], dim=1)
                if eos is not None and next_id == eos:
                    break
        if not rows:
            raise RuntimeError("no tokens were generated")
        sink.finish(np.stack(rows))
    finally:
        sink.close()
    return len(rows), int(width)


def _find_final_norm(model):
    for attr_path in ("transformer.ln_f", "model.norm", "gpt_neox.final_layer_norm"):
        obj = model
        try:
            for part in attr_path.split("."):
                obj = getattr(obj, part)
        except AttributeError:
            continue
        return obj
    raise ValueError("could not locate the model's final normalization layer")


class _FileSink:
    """Buffers rows and writes the whole container at the end."""

    def __init__(self, path: str, structured: bool) -> None:
        self.path = path
        self.structured = structured

    def push(self, row: np.ndarray) -> None:
        pass  # rows are buffered by the caller

    def finish(self, rows: np.ndarray) -> None:
        write_container(self.path, rows, structured=self.structured)

    def close(self) -> None:
        pass


class _SocketSink:
    """Streams one frame per generated token to a TCP endpoint."""

    def __init__(self, address: str) -> None:
        host, _, port = address.rpartition(":")
        self.conn = socket.create_connection((host or "127.0.0.1", int(port)))

    def push(self, row: np.ndarray) -> None:
        self.conn.sendall(encode_frame(row))

    def finish(self, rows: np.ndarray) -> None:
        pass

    def close(self) -> None:
        self.conn.close()


def _open_sink(config: CaptureConfig):
    if config.out is not None:
        return _FileSink(config.out, config.structured_flag)
    return _SocketSink(config.stream)
