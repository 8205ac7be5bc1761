"""Transformer activation capture into rmtkit wire formats."""

from .shim import CaptureConfig, capture_run, default_layers, encode_frame, write_container

__version__ = "0.1.0"
