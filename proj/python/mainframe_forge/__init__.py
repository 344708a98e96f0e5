"""Python bindings for the forge toolchain."""

import json

from ._core import (
    CorruptionError,
    ParameterError,
    StructuralError,
    ValidationError,
    __version__,
    average_precision,
    bleu4,
    config_hash,
    estimate_jaccard,
    exact_jaccard,
    extract_choice,
    meteor,
    metric_tokens,
    minhash_signature,
    parse_trailing_int_list,
    plan_upscale,
    porter_stem,
    rouge_l,
    token_f1,
)
from . import _core


def dedup(docs, k=5, num_hashes=256, bands=32, rows=8, threshold=0.8, exact_verify=False):
    """Near-duplicate clustering over (id, text) pairs."""
    return json.loads(_core._dedup(list(docs), k, num_hashes, bands, rows, threshold, exact_verify))


def upscale(src, dst, m=6, layer_template="model.layers.{i}."):
    return json.loads(_core._upscale(str(src), str(dst), m, layer_template))


def verify_upscaled(src, dst, m=6, layer_template="model.layers.{i}."):
    return json.loads(_core._verify_upscaled(str(src), str(dst), m, layer_template))


def run_pipeline(config, stages=("all",), force=False, allow_pending=False):
    return json.loads(_core._run_pipeline(str(config), list(stages), force, allow_pending))


__all__ = [
    "CorruptionError",
    "ParameterError",
    "StructuralError",
    "ValidationError",
    "__version__",
    "average_precision",
    "bleu4",
    "config_hash",
    "dedup",
    "estimate_jaccard",
    "exact_jaccard",
    "extract_choice",
    "meteor",
    "metric_tokens",
    "minhash_signature",
    "parse_trailing_int_list",
    "plan_upscale",
    "porter_stem",
    "rouge_l",
    "run_pipeline",
    "token_f1",
    "upscale",
    "verify_upscaled",
]
