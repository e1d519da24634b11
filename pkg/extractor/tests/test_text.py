"""Text extraction: shapes, determinism, per-token dumps, failure atomicity."""

import json

import numpy as np
import pytest

from latent_extractor import (
    ArgumentError,
    ExtractionFailure,
    TextSpec,
    extract_text,
    read_ltnt,
)

from conftest import TEXT_HIDDEN, make_sentences

THREE = ["the cat sat", "a dog ran on the mat", "tree"]


def test_three_sentences_give_three_rows(text_backbone, tmp_path):
    out = tmp_path / "t.ltnt"
    report = extract_text(TextSpec(backbone=text_backbone), THREE, out)
    assert report.count == 3
    assert report.dim == TEXT_HIDDEN
    assert read_ltnt(out).shape == (3, TEXT_HIDDEN)


def test_repeat_run_writes_identical_bytes(text_backbone, tmp_path):
    spec = TextSpec(backbone=text_backbone, batch=2)
    extract_text(spec, THREE, tmp_path / "a.ltnt")
    extract_text(spec, THREE, tmp_path / "b.ltnt")
    assert (tmp_path / "a.ltnt").read_bytes() == (tmp_path / "b.ltnt").read_bytes()


def test_meta_sidecar_records_the_run(text_backbone, tmp_path):
    out = tmp_path / "t.ltnt"
    spec = TextSpec(backbone=text_backbone, dataset="toy", split="train")
    extract_text(spec, THREE, out)
    meta = json.loads((tmp_path / "t.ltnt.meta.json").read_text())
    assert meta["modality"] == "text"
    assert meta["pooling"] == "smp"
    assert meta["dataset"] == "toy"
    assert meta["split"] == "train"
    assert meta["count"] == 3
    assert meta["dim"] == TEXT_HIDDEN


def test_per_token_dump_has_one_file_and_mask_per_sequence(text_backbone, tmp_path):
    out = tmp_path / "dump"
    spec = TextSpec(backbone=text_backbone, pooling="per-token", batch=2)
    report = extract_text(spec, THREE, out)
    assert report.count == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["files"] == [f"seq_{i:05d}.ltnt" for i in range(3)]
    for i in range(3):
        rows = read_ltnt(out / f"seq_{i:05d}.ltnt")
        mask = [int(tok) for tok in (out / f"seq_{i:05d}.mask.txt").read_text().split()]
        assert len(mask) == rows.shape[0]
        assert set(mask) <= {0, 1}
        assert sum(mask) >= 1


def test_per_token_refuses_existing_directory(text_backbone, tmp_path):
    out = tmp_path / "dump"
    out.mkdir()
    spec = TextSpec(backbone=text_backbone, pooling="per-token")
    with pytest.raises(ArgumentError, match="already exists"):
        extract_text(spec, THREE, out)


def test_smp_equals_offline_pooling_of_per_token_dump(text_backbone, tmp_path):
    # The pooled file and the per-token dump must describe the same latents:
    # re-pooling the dump with the detector toolkit has to land within
    # float32 storage error of the pooled rows.
    latentood = pytest.importorskip("latentood")
    rng = np.random.default_rng(42)
    sentences = make_sentences(rng, 100)
    spec = dict(backbone=text_backbone, batch=16)
    extract_text(TextSpec(**spec), sentences, tmp_path / "smp.ltnt")
    extract_text(
        TextSpec(pooling="per-token", **spec), sentences, tmp_path / "dump"
    )
    smp = latentood.read_latents(str(tmp_path / "smp.ltnt")).rows64()
    worst = 0.0
    for i in range(100):
        seq_rows = latentood.read_latents(str(tmp_path / "dump" / f"seq_{i:05d}.ltnt"))
        mask = np.array(
            [int(tok) for tok in (tmp_path / "dump" / f"seq_{i:05d}.mask.txt").read_text().split()]
        )
        pooled = latentood.smp_pool(
            latentood.TokenSequence(hidden=seq_rows.rows64(), mask=mask)
        )
        rel = np.abs(pooled - smp[i]).max() / max(np.abs(smp[i]).max(), 1e-12)
        worst = max(worst, rel)
    assert worst <= 1e-5


def test_outputs_pass_detector_validation(text_backbone, tmp_path):
    latentood = pytest.importorskip("latentood")
    out = tmp_path / "t.ltnt"
    extract_text(TextSpec(backbone=text_backbone), THREE, out)
    ds = latentood.read_latents(str(out))
    assert ds.count == 3 and ds.dim == TEXT_HIDDEN
    assert np.isfinite(ds.rows).all()


def test_empty_input_fails_per_item_and_writes_nothing(text_backbone, tmp_path):
    out = tmp_path / "t.ltnt"
    with pytest.raises(ExtractionFailure) as err:
        extract_text(TextSpec(backbone=text_backbone), ["the cat", "", "dog"], out)
    assert [label for label, _ in err.value.items] == ["item 1"]
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []

    dump = tmp_path / "dump"
    spec = TextSpec(backbone=text_backbone, pooling="per-token")
    with pytest.raises(ExtractionFailure):
        extract_text(spec, ["the cat", "", "dog"], dump)
    assert not dump.exists()


def test_no_sentences_is_a_usage_error(text_backbone, tmp_path):
    with pytest.raises(ArgumentError, match="no input"):
        extract_text(TextSpec(backbone=text_backbone), [], tmp_path / "t.ltnt")


def test_max_length_caps_the_dump_rows(text_backbone, tmp_path):
    long = " ".join(["cat"] * 30)
    spec = TextSpec(backbone=text_backbone, pooling="per-token", max_length=4)
    extract_text(spec, [long], tmp_path / "dump")
    assert read_ltnt(tmp_path / "dump" / "seq_00000.ltnt").shape[0] == 4


def test_unknown_pooling_rejected():
    with pytest.raises(ArgumentError, match="pooling"):
        TextSpec(backbone="x", pooling="max")
