"""Capture shim tests: shapes, determinism, round-trip through the primary
toolkit's parser, frame streaming, and failure modes."""

import json
import socket
import struct
import subprocess
import sys
import threading

import numpy as np
import pytest

from capture_shim.cli import main
from capture_shim.shim import CaptureConfig, capture_run, default_layers

PROMPT_IDS = [71, 68, 75, 75, 78]  # "hello" under the byte-level vocab


def read_container(path):
    blob = path.read_bytes()
    assert blob[:4] == b"SPAC"
    version, flags, t, d = struct.unpack_from("<HHII", blob, 4)
    assert version == 1
    assert len(blob) == 16 + 4 * t * d
    data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(t, d)
    return data, flags


class TestContainerCapture:
    def test_shape_arithmetic_two_layers(self, tiny_model_dir, tmp_path):
        # 2 layers x width 32, 10 tokens -> D = 64, T = 10
        out = tmp_path / "cap.spac"
        config = CaptureConfig(
            model=tiny_model_dir, layers=[1, 3], max_new_tokens=10, greedy=True, out=str(out)
        )
        tokens, width = capture_run(config, prompt_ids=PROMPT_IDS)
        assert (tokens, width) == (10, 64)
        data, _ = read_container(out)
        assert data.shape == (10, 64)
        assert out.stat().st_size == 16 + 10 * 64 * 4

    def test_greedy_fixed_seed_is_byte_identical(self, tiny_model_dir, tmp_path):
        blobs = []
        for name in ("a.spac", "b.spac"):
            out = tmp_path / name
            config = CaptureConfig(
                model=tiny_model_dir, layers=[0, 2], max_new_tokens=12, greedy=True,
                seed=7, out=str(out),
            )
            capture_run(config, prompt_ids=PROMPT_IDS)
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_sampled_decoding_seed_determinism(self, tiny_model_dir, tmp_path):
        blobs = []
        for name in ("a.spac", "b.spac"):
            out = tmp_path / name
            config = CaptureConfig(
                model=tiny_model_dir, layers=[0], max_new_tokens=8, temperature=0.2,
                seed=3, out=str(out),
            )
            capture_run(config, prompt_ids=PROMPT_IDS)
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_text_prompt_path(self, tiny_model_dir, tmp_path):
        out = tmp_path / "cap.spac"
        config = CaptureConfig(
            model=tiny_model_dir, layers=[0], max_new_tokens=4, greedy=True, out=str(out)
        )
        tokens, width = capture_run(config, prompt="hi there")
        assert tokens == 4 and width == 32

    def test_final_norm_flag_changes_rows(self, tiny_model_dir, tmp_path):
        rows = {}
        for flag in (False, True):
            out = tmp_path / f"norm_{flag}.spac"
            config = CaptureConfig(
                model=tiny_model_dir, layers=[1], max_new_tokens=5, greedy=True,
                final_norm=flag, out=str(out),
            )
            capture_run(config, prompt_ids=PROMPT_IDS)
            rows[flag], _ = read_container(out)
        assert not np.array_equal(rows[False], rows[True])

    def test_default_layer_selection(self):
        assert default_layers(4) == [0]
        assert default_layers(12) == [0, 4, 8]

    def test_invalid_layer_aborts_without_output(self, tiny_model_dir, tmp_path):
        out = tmp_path / "never.spac"
        config = CaptureConfig(
            model=tiny_model_dir, layers=[99], max_new_tokens=4, greedy=True, out=str(out)
        )
        with pytest.raises(ValueError, match="out of range"):
            capture_run(config, prompt_ids=PROMPT_IDS)
        assert not out.exists()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CaptureConfig(model="x", temperature=0.0, out="y")
        with pytest.raises(ValueError):
            CaptureConfig(model="x", layers=[], out="y")
        with pytest.raises(ValueError):
            CaptureConfig(model="x")  # neither out nor stream


class TestPrimaryRoundTrip:
    def test_container_validates_against_primary_parser(self, tiny_model_dir, tmp_path):
        out = tmp_path / "cap.spac"
        config = CaptureConfig(
            model=tiny_model_dir, layers=[1, 3], max_new_tokens=12, greedy=True,
            out=str(out),
        )
        capture_run(config, prompt_ids=PROMPT_IDS)
        ndjson = tmp_path / "features.ndjson"
        proc = subprocess.run(
            [
                "rmtkit", "analyze", "--in", str(out), "--out", str(ndjson),
                "--window", "6", "--stride", "2",
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        records = [json.loads(line) for line in ndjson.read_text().splitlines()]
        assert len(records) == (12 - 6) // 2 + 1
        assert all(len(r["features"]) == 22 for r in records)


class TestFrameStreaming:
    def test_socket_mode_emits_exact_frames(self, tiny_model_dir, tmp_path):
        received = bytearray()
        ready = threading.Event()
        with socket.create_server(("127.0.0.1", 0)) as server:
            port = server.getsockname()[1]

            def serve():
                ready.set()
                conn, _ = server.accept()
                with conn:
                    while chunk := conn.recv(65536):
                        received.extend(chunk)

            thread = threading.Thread(target=serve)
            thread.start()
            ready.wait()
            config = CaptureConfig(
                model=tiny_model_dir, layers=[0, 2], max_new_tokens=7, greedy=True,
                stream=f"127.0.0.1:{port}",
            )
            tokens, width = capture_run(config, prompt_ids=PROMPT_IDS)
            thread.join(timeout=30)
        assert (tokens, width) == (7, 64)
        frame_size = 4 + width * 4
        assert len(received) == tokens * frame_size
        for i in range(tokens):
            (length,) = struct.unpack_from("<I", received, i * frame_size)
            assert length == width * 4


class TestCli:
    def test_cli_writes_container(self, tiny_model_dir, tmp_path):
        out = tmp_path / "cli.spac"
        code = main(
            [
                "--model", tiny_model_dir, "--layers", "1,3", "--max-new-tokens", "6",
                "--greedy", "--out", str(out), "--prompt-ids", ",".join(map(str, PROMPT_IDS)),
            ]
        )
        assert code == 0
        data, _ = read_container(out)
        assert data.shape == (6, 64)

    def test_cli_invalid_layer_nonzero_exit(self, tiny_model_dir, tmp_path):
        code = main(
            [
                "--model", tiny_model_dir, "--layers", "42", "--max-new-tokens", "2",
                "--out", str(tmp_path / "x.spac"), "--prompt-ids", "1,2",
            ]
        )
        assert code != 0

    def test_cli_unloadable_model_nonzero_exit(self, tmp_path):
        code = main(
            [
                "--model", str(tmp_path / "missing"), "--max-new-tokens", "2",
                "--out", str(tmp_path / "x.spac"), "--prompt-ids", "1,2",
            ]
        )
        assert code != 0
