"""Batch extraction of frozen encoder latents into the LTNT exchange format.

Text inputs become mean-pooled final-layer token states (or per-token dumps
with mask sidecars); images become final class-token states. Outputs are
plain LTNT files any consumer of the format can read, with run provenance in
a JSON sidecar. Backbones are loaded from local checkpoint directories and
never updated.
"""

from ._run import ExtractReport
from .errors import (
    ArgumentError,
    BackboneError,
    ExtractionFailure,
    ExtractorError,
    FormatError,
)
from .ltnt import (
    LTNT_MAGIC,
    LTNT_VERSION,
    meta_path,
    read_ltnt,
    write_ltnt,
    write_mask,
    write_meta,
)
from .pooling import masked_mean, masked_mean_batch
from .text import TextSpec, extract_text, load_text_backbone, read_sentences
from .vision import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    VisionSpec,
    extract_vision,
    load_vision_backbone,
    preprocess_image,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "BackboneError",
    "ExtractReport",
    "ExtractionFailure",
    "ExtractorError",
    "FormatError",
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "LTNT_MAGIC",
    "LTNT_VERSION",
    "TextSpec",
    "VisionSpec",
    "extract_text",
    "extract_vision",
    "load_text_backbone",
    "load_vision_backbone",
    "masked_mean",
    "masked_mean_batch",
    "meta_path",
    "preprocess_image",
    "read_ltnt",
    "read_sentences",
    "write_ltnt",
    "write_mask",
    "write_meta",
]
