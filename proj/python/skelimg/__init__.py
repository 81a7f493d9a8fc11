"""Skeleton image encodings for action recognition, with a small CNN."""

from ._skelimg import (
    Model,
    SkelimgError,
    chain,
    default_protocol,
    encode,
    evaluate,
    kinect_chain,
    late_fusion,
    parse_name,
    quantize,
    read_skeleton,
    split,
    synthesize,
    train,
)

__all__ = [
    "Model",
    "SkelimgError",
    "chain",
    "default_protocol",
    "encode",
    "evaluate",
    "kinect_chain",
    "late_fusion",
    "parse_name",
    "quantize",
    "read_skeleton",
    "split",
    "synthesize",
    "train",
]
