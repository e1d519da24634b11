"""Vision latent extraction from a frozen encoder checkpoint.

An image's latent is the class-token row of the final hidden states, taken
after the encoder's last layer normalization; backbones that expose a
dedicated pooled-output field can be read through it instead (use_pooler).

Preprocessing: decode to RGB, resize to the model's input resolution with
bilinear resampling, scale to [0, 1], then normalize per channel with the
ImageNet statistics. The low-resolution protocol (celeba_protocol) first
resizes to 32x32 and only then up to the model resolution, so the backbone
sees the same degraded content a 32x32 benchmark pipeline would feed it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from ._run import ExtractReport, batches
from .errors import ArgumentError, BackboneError, ExtractionFailure
from .ltnt import meta_path, write_ltnt, write_meta

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float64)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float64)
LOWRES_SIDE = 32


@dataclass(frozen=True)
class VisionSpec:
    """What to run. backbone is a local checkpoint directory.

    resolution defaults to the backbone's configured input size.
    """

    backbone: str
    resolution: int | None = None
    celeba_protocol: bool = False
    use_pooler: bool = False
    batch: int = 8
    dataset: str = ""
    split: str = ""

    def __post_init__(self):
        if self.resolution is not None and self.resolution < 1:
            raise ArgumentError(f"resolution must be positive, got {self.resolution}")
        if self.batch < 1:
            raise ArgumentError(f"batch must be positive, got {self.batch}")


def load_vision_backbone(path: str):
    from transformers import AutoModel

    try:
        model = AutoModel.from_pretrained(path)
    except Exception as exc:
        raise BackboneError(f"cannot load vision backbone from {path}: {exc}") from exc
    model.eval()
    return model


def preprocess_image(image: Image.Image, resolution: int, celeba_protocol: bool = False) -> np.ndarray:
    """PIL image to a normalized float32 (3, resolution, resolution) tensor."""
    rgb = image.convert("RGB")
    if celeba_protocol:
        rgb = rgb.resize((LOWRES_SIDE, LOWRES_SIDE), Image.BILINEAR)
    if rgb.size != (resolution, resolution):
        rgb = rgb.resize((resolution, resolution), Image.BILINEAR)
    scaled = np.asarray(rgb, dtype=np.float64) / 255.0
    normalized = (scaled - IMAGENET_MEAN) / IMAGENET_STD
    return normalized.transpose(2, 0, 1).astype(np.float32)


def _load_pixels(paths: list[str], resolution: int, celeba_protocol: bool) -> np.ndarray:
    pixels = []
    bad = []
    for path in paths:
        try:
            with Image.open(path) as img:
                pixels.append(preprocess_image(img, resolution, celeba_protocol))
        except (OSError, ValueError) as exc:
            bad.append((path, str(exc)))
    if bad:
        raise ExtractionFailure(bad)
    return np.stack(pixels)


def _pool(output, use_pooler: bool) -> np.ndarray:
    if use_pooler:
        pooled = getattr(output, "pooler_output", None)
        if pooled is None:
            raise BackboneError("backbone exposes no pooled-output field")
        return pooled.numpy().astype(np.float64)
    return output.last_hidden_state[:, 0].numpy().astype(np.float64)


def extract_vision(spec: VisionSpec, image_paths: list[str], out: str) -> ExtractReport:
    """Extract one latent row per image and write them to out.

    Unreadable images are reported together, per path, and nothing is
    written unless every image succeeds.
    """
    image_paths = [str(p) for p in image_paths]
    if not image_paths:
        raise ArgumentError("no input images")
    model = load_vision_backbone(spec.backbone)
    resolution = spec.resolution or int(getattr(model.config, "image_size", 0))
    if resolution < 1:
        raise ArgumentError(
            "backbone config has no image size; pass resolution explicitly"
        )

    pixels = _load_pixels(image_paths, resolution, spec.celeba_protocol)
    forward_kwargs = {}
    if resolution != int(getattr(model.config, "image_size", resolution)):
        # Off-spec input sizes need the position grid resampled; backbones
        # without this kwarg simply cannot run at a foreign resolution.
        forward_kwargs["interpolate_pos_encoding"] = True
    rows = []
    for start, stop in batches(len(image_paths), spec.batch):
        batch = torch.from_numpy(pixels[start:stop])
        with torch.no_grad():
            output = model(pixel_values=batch, **forward_kwargs)
        rows.append(_pool(output, spec.use_pooler))
    rows = np.concatenate(rows)

    write_ltnt(out, rows)
    write_meta(
        meta_path(out),
        {
            "format": "ltnt/1",
            "modality": "vision",
            "backbone": spec.backbone,
            "dataset": spec.dataset,
            "split": spec.split,
            "pooling": "pooled-output" if spec.use_pooler else "cls",
            "resize": "lowres-32-first" if spec.celeba_protocol else "direct",
            "resolution": resolution,
            "count": int(rows.shape[0]),
            "dim": int(rows.shape[1]),
        },
    )
    return ExtractReport(
        count=rows.shape[0], dim=rows.shape[1], out=str(out), files=(str(out),)
    )
