"""Text latent extraction from a frozen encoder checkpoint.

A sequence's latent is the mean of its non-padding token hidden states from
the final encoder layer ("smp" pooling). The "per-token" variant instead
dumps one LTNT file per sequence holding the full hidden-state matrix, plus
a 0/1 mask sidecar naming the real tokens, so pooling can be replayed or
replaced offline. Dumped rows keep the batch padding; the mask is what marks
the real tokens.

The backbone is never updated: the model runs in eval mode under
torch.no_grad(), and batches are formed from consecutive inputs so repeated
runs see identical padding and produce identical bytes.
"""

from __future__ import annotations

import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ._run import ExtractReport, batches
from .errors import ArgumentError, BackboneError, ExtractionFailure
from .ltnt import meta_path, write_ltnt, write_mask, write_meta
from .pooling import masked_mean_batch

POOLINGS = ("smp", "per-token")


@dataclass(frozen=True)
class TextSpec:
    """What to run and how to pool. backbone is a local checkpoint directory."""

    backbone: str
    pooling: str = "smp"
    batch: int = 16
    max_length: int | None = None
    dataset: str = ""
    split: str = ""

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ArgumentError(
                f"pooling must be one of {POOLINGS}, got {self.pooling!r}"
            )
        if self.batch < 1:
            raise ArgumentError(f"batch must be positive, got {self.batch}")
        if self.max_length is not None and self.max_length < 1:
            raise ArgumentError(f"max_length must be positive, got {self.max_length}")


def load_text_backbone(path: str):
    """Load tokenizer and encoder from a local directory, frozen for eval."""
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(path)
        model = AutoModel.from_pretrained(path)
    except Exception as exc:
        raise BackboneError(f"cannot load text backbone from {path}: {exc}") from exc
    model.eval()
    return tokenizer, model


def read_sentences(path: str) -> list[str]:
    """One input per line. Blank lines are kept: they fail per item, loudly."""
    return Path(path).read_text(encoding="utf-8").splitlines()


def _token_lengths(tokenizer, sentences: list[str], spec: TextSpec) -> list[int]:
    kwargs = {}
    if spec.max_length is not None:
        kwargs = {"truncation": True, "max_length": spec.max_length}
    encoded = tokenizer(list(sentences), **kwargs)
    return [len(ids) for ids in encoded["input_ids"]]


def _hidden_states(tokenizer, model, sentences: list[str], spec: TextSpec):
    """Yield (start, hidden (b, L, H) float64, mask (b, L) int64) per batch."""
    kwargs = {"padding": True, "return_tensors": "pt"}
    if spec.max_length is not None:
        kwargs.update(truncation=True, max_length=spec.max_length)
    for start, stop in batches(len(sentences), spec.batch):
        encoded = tokenizer(sentences[start:stop], **kwargs)
        with torch.no_grad():
            output = model(**encoded)
        hidden = output.last_hidden_state.numpy().astype(np.float64)
        mask = encoded["attention_mask"].numpy().astype(np.int64)
        yield start, hidden, mask


def extract_text(spec: TextSpec, sentences: list[str], out: str) -> ExtractReport:
    """Extract latents for sentences and write them under out.

    smp pooling writes a single LTNT file at out plus a provenance sidecar.
    per-token pooling treats out as a directory (which must not exist yet)
    and fills it with seq_NNNNN.ltnt / seq_NNNNN.mask.txt pairs plus a
    manifest. Either way the output appears only after every input
    succeeded; one bad input fails the whole run with every offender named.
    """
    sentences = list(sentences)
    if not sentences:
        raise ArgumentError("no input sentences")
    tokenizer, model = load_text_backbone(spec.backbone)

    # Screen out empty tokenizations before the forward pass: an all-padding
    # row has no mean and would poison the batch with NaN attention.
    lengths = _token_lengths(tokenizer, sentences, spec)
    bad = [
        (f"item {i}", f"no tokens after tokenization: {sentences[i]!r}")
        for i, length in enumerate(lengths)
        if length == 0
    ]
    if bad:
        raise ExtractionFailure(bad)

    meta = {
        "format": "ltnt/1",
        "modality": "text",
        "backbone": spec.backbone,
        "dataset": spec.dataset,
        "split": spec.split,
        "pooling": spec.pooling,
        "max_length": spec.max_length,
        "count": len(sentences),
    }
    if spec.pooling == "smp":
        return _write_pooled(tokenizer, model, sentences, spec, out, meta)
    return _write_per_token(tokenizer, model, sentences, spec, out, meta)


def _write_pooled(tokenizer, model, sentences, spec, out, meta) -> ExtractReport:
    rows = np.concatenate(
        [
            masked_mean_batch(hidden, mask)
            for _, hidden, mask in _hidden_states(tokenizer, model, sentences, spec)
        ]
    )
    write_ltnt(out, rows)
    meta["dim"] = int(rows.shape[1])
    write_meta(meta_path(out), meta)
    return ExtractReport(
        count=rows.shape[0], dim=rows.shape[1], out=str(out), files=(str(out),)
    )


def _write_per_token(tokenizer, model, sentences, spec, out, meta) -> ExtractReport:
    out_dir = Path(out)
    if out_dir.exists():
        raise ArgumentError(f"per-token output directory already exists: {out_dir}")

    # Compute everything first, then materialize the directory in one rename.
    dumps: list[tuple[np.ndarray, np.ndarray]] = []
    dim = None
    for _, hidden, mask in _hidden_states(tokenizer, model, sentences, spec):
        dim = hidden.shape[2]
        for offset in range(hidden.shape[0]):
            dumps.append((hidden[offset], mask[offset]))

    staging = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=out_dir.name + "."))
    files = []
    try:
        for i, (hidden, mask) in enumerate(dumps):
            name = f"seq_{i:05d}.ltnt"
            write_ltnt(staging / name, hidden)
            write_mask(staging / f"seq_{i:05d}.mask.txt", mask)
            files.append(name)
        meta["dim"] = int(dim)
        meta["files"] = files
        write_meta(staging / "manifest.json", meta)
        os.replace(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return ExtractReport(count=len(dumps), dim=int(dim), out=str(out_dir), files=tuple(files))
