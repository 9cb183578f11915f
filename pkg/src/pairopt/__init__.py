"""Inference-time code-efficiency refinement via contrastive candidate pairing."""

__version__ = "0.1.0"
