"""End-to-end batch commands, exercised in process through main(argv)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ecgpaper import (PaperImage, load_png, read_manifest, rect_quad,
                      write_predictions)
from ecgpaper.cli import main


def run(*argv: str) -> int:
    return main([str(a) for a in argv])


def dataset_bytes(out: Path) -> dict[str, bytes]:
    """Manifest and image payloads, keyed by relative path (run.json holds
    absolute source paths, so it is excluded from byte comparisons)."""
    files = {"manifest.json": (out / "manifest.json").read_bytes()}
    for p in sorted((out / "images").glob("*.png")):
        files[f"images/{p.name}"] = p.read_bytes()
    return files


@pytest.fixture(scope="module")
def waveforms(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("waveforms")
    assert run("synth-waveforms", "--out", out, "--count", 4,
               "--fs", 100, "--duration", 4.0, "--seed", 7) == 0
    return out


@pytest.fixture(scope="module")
def generated(tmp_path_factory, waveforms) -> Path:
    out = tmp_path_factory.mktemp("generated")
    assert run("generate", "--waveforms", waveforms, "--out", out,
               "--px-per-mm", 4, "--seed", 7, "--force") == 0
    return out


@pytest.fixture(scope="module")
def template(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("tpl") / "template.json"
    path.write_text(json.dumps({"steps": [
        {"kind": "shadow", "n_control": 5, "intensity": 0.3, "feather": 4.0},
        {"kind": "perspective", "jitter": 0.05},
        {"kind": "photometric", "max_delta": 0.05, "min_gain": 0.9, "max_gain": 1.1},
    ]}))
    return path


@pytest.fixture(scope="module")
def distorted(tmp_path_factory, generated, template) -> Path:
    out = tmp_path_factory.mktemp("distorted")
    assert run("distort", "--manifest", generated / "manifest.json",
               "--template", template, "--out", out, "--seed", 11, "--force") == 0
    return out


# ---------------------------------------------------------- synth-waveforms

def test_synth_waveforms_outputs_and_overwrite_guard(waveforms, tmp_path):
    assert len(list(waveforms.glob("*.csv"))) == 4
    assert (waveforms / "rec0000.json").exists()  # label sidecars
    assert run("synth-waveforms", "--out", waveforms, "--count", 4,
               "--seed", 7) == 2  # refuses the non-empty directory
    again = tmp_path / "again"
    assert run("synth-waveforms", "--out", again, "--count", 4,
               "--fs", 100, "--duration", 4.0, "--seed", 7) == 0
    assert (again / "rec0002.csv").read_bytes() == \
        (waveforms / "rec0002.csv").read_bytes()


# ----------------------------------------------------------------- generate

def test_generate_writes_manifest_images_and_provenance(generated):
    manifest = read_manifest(generated / "manifest.json")
    assert len(manifest) == 4
    for entry in manifest:
        img = load_png(generated / entry.image_path)
        assert (img.width, img.height) == (522, 432)  # 4 s page at 4 px/mm
        assert entry.corners == rect_quad(522, 432)
        assert entry.recipe is None and entry.fold is None
    rundoc = json.loads((generated / "run.json").read_text())
    assert rundoc["command"] == "generate" and rundoc["seed"] == 7


def test_generate_rerun_is_byte_identical(tmp_path, waveforms, generated):
    out = tmp_path / "again"
    assert run("generate", "--waveforms", waveforms, "--out", out,
               "--px-per-mm", 4, "--seed", 7) == 0
    assert dataset_bytes(out) == dataset_bytes(generated)


def test_generate_empty_input_fails_without_manifest(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "out"
    assert run("generate", "--waveforms", empty, "--out", out, "--seed", 1) == 2
    assert not (out / "manifest.json").exists()


def test_generate_skips_corrupt_records_with_exit_one(tmp_path, waveforms):
    src = tmp_path / "mixed"
    src.mkdir()
    for p in waveforms.glob("rec000[01]*"):
        (src / p.name).write_bytes(p.read_bytes())
    (src / "zzz_bad.csv").write_text("not,a,record\n1,2,3\n")
    out = tmp_path / "out"
    assert run("generate", "--waveforms", src, "--out", out, "--seed", 1) == 1
    manifest = read_manifest(out / "manifest.json")
    assert sorted(e.id for e in manifest) == ["rec0000", "rec0001"]


def test_generate_panel_meta_flag(tmp_path, waveforms):
    out = tmp_path / "meta"
    assert run("generate", "--waveforms", waveforms, "--out", out,
               "--px-per-mm", 4, "--seed", 7, "--count", 1, "--panel-meta") == 0
    meta = json.loads((out / "images" / "rec0000.panels.json").read_text())
    assert len(meta["panels"]) == 12


# ------------------------------------------------------------------ distort

def test_distort_records_realised_recipes_and_corners(distorted, generated):
    manifest = read_manifest(distorted / "manifest.json")
    source = read_manifest(generated / "manifest.json")
    assert len(manifest) == 4
    for entry in manifest:
        assert entry.recipe is not None
        assert [s.kind for s in entry.recipe.steps] == \
            ["shadow", "perspective", "photometric"]
        assert all(s.realised is not None for s in entry.recipe.steps)
        assert entry.corners != source.by_id(entry.id).corners  # perspective moved them
        assert entry.labels == source.by_id(entry.id).labels
        assert (distorted / entry.image_path).exists()


def test_distort_rerun_and_worker_pool_are_byte_identical(
        tmp_path, generated, template, distorted):
    serial = tmp_path / "serial"
    assert run("distort", "--manifest", generated / "manifest.json",
               "--template", template, "--out", serial, "--seed", 11) == 0
    assert dataset_bytes(serial) == dataset_bytes(distorted)

    pooled = tmp_path / "pooled"
    assert run("distort", "--manifest", generated / "manifest.json",
               "--template", template, "--out", pooled, "--seed", 11,
               "--workers", 8) == 0
    assert dataset_bytes(pooled) == dataset_bytes(distorted)


def test_distort_missing_image_drops_entry_with_exit_one(
        tmp_path, generated, template):
    src = tmp_path / "src"
    src.mkdir()
    (src / "images").mkdir()
    (src / "manifest.json").write_bytes((generated / "manifest.json").read_bytes())
    for p in (generated / "images").glob("*.png"):
        if p.stem != "rec0001":
            (src / "images" / p.name).write_bytes(p.read_bytes())
    out = tmp_path / "out"
    assert run("distort", "--manifest", src / "manifest.json",
               "--template", template, "--out", out, "--seed", 11) == 1
    manifest = read_manifest(out / "manifest.json")
    assert sorted(e.id for e in manifest) == ["rec0000", "rec0002", "rec0003"]


def test_distort_zero_magnitude_template_copies_pixels(tmp_path, generated):
    tpl = tmp_path / "identity.json"
    tpl.write_text(json.dumps({"steps": [
        {"kind": "perspective", "jitter": 0.0},
        {"kind": "crease", "max_darken": 0.0},
        {"kind": "photometric", "max_delta": 0.0},
    ]}))
    out = tmp_path / "out"
    assert run("distort", "--manifest", generated / "manifest.json",
               "--template", tpl, "--out", out, "--seed", 3) == 0
    for entry in read_manifest(out / "manifest.json"):
        before = load_png(generated / "images" / f"{entry.id}.png").pixels
        after = load_png(out / entry.image_path).pixels
        assert np.array_equal(before, after)
        assert entry.corners == rect_quad(522, 432)


# ------------------------------------------------------------------ rectify

@pytest.fixture(scope="module")
def rectified(tmp_path_factory, distorted) -> Path:
    out = tmp_path_factory.mktemp("rectified")
    assert run("rectify", "--manifest", distorted / "manifest.json",
               "--out", out, "--canonical-width", 1000,
               "--canonical-height", 400) == 0
    return out


def test_rectify_outputs_reports_summary_and_figures(rectified, distorted):
    manifest = read_manifest(rectified / "manifest.json")
    assert len(manifest) == 4
    for entry in manifest:
        img = load_png(rectified / entry.image_path)
        assert (img.width, img.height) == (1000, 400)
        assert entry.corners == rect_quad(1000, 400)
        report = json.loads(
            (rectified / "reports" / f"{entry.id}.json").read_text())
        assert report["mode"] == "full" and report["id"] == entry.id
        assert set(report) >= {"corners", "homography", "timings_ms",
                               "warnings", "rmse_px"}
        assert np.isfinite(report["rmse_px"])

    rows = (rectified / "summary.csv").read_text().strip().splitlines()
    assert rows[0] == "id,status,rmse_px,error"
    assert len(rows) == 5 and all(",ok," in r for r in rows[1:])
    assert (rectified / "figures" / "corner_error.png").exists()
    assert (rectified / "figures" / "stage_times.png").exists()
    rundoc = json.loads((rectified / "run.json").read_text())
    assert rundoc["config"]["canonical_width"] == 1000


def test_rectify_junk_image_reports_error_and_continues(tmp_path, distorted):
    src = tmp_path / "src"
    (src / "images").mkdir(parents=True)
    (src / "manifest.json").write_bytes((distorted / "manifest.json").read_bytes())
    for p in (distorted / "images").glob("*.png"):
        (src / "images" / p.name).write_bytes(p.read_bytes())
    noise = np.random.default_rng(0).integers(0, 40, (432, 522, 3), dtype=np.uint8)
    PaperImage(noise, 0.0, rect_quad(522, 432)).save_png(
        src / "images" / "rec0001.png")

    out = tmp_path / "out"
    assert run("rectify", "--manifest", src / "manifest.json", "--out", out,
               "--canonical-width", 1000, "--canonical-height", 400) == 1
    manifest = read_manifest(out / "manifest.json")
    assert sorted(e.id for e in manifest) == ["rec0000", "rec0002", "rec0003"]
    rows = (out / "summary.csv").read_text().strip().splitlines()[1:]
    bad = [r for r in rows if r.startswith("rec0001,")]
    assert len(bad) == 1 and bad[0].split(",")[1] == "error"


def test_rectify_crop_only_mode(tmp_path, distorted):
    out = tmp_path / "out"
    assert run("rectify", "--manifest", distorted / "manifest.json",
               "--out", out, "--mode", "crop-only") == 0
    manifest = read_manifest(out / "manifest.json")
    for entry in manifest:
        report = json.loads((out / "reports" / f"{entry.id}.json").read_text())
        assert report["mode"] == "crop-only"
        assert report["corners"] is None and report["rmse_px"] is None
        img = load_png(out / entry.image_path)
        assert entry.corners == rect_quad(img.width, img.height)


# -------------------------------------------------------------------- split

def write_flat_manifest(path: Path, n: int) -> None:
    entries = [{"id": f"e{i:03d}", "image_path": f"images/e{i:03d}.png",
                "labels": "STTC" if i % 2 else "MI"} for i in range(n)]
    path.write_text(json.dumps(entries))


def test_split_assigns_balanced_folds(tmp_path):
    src = tmp_path / "manifest.json"
    write_flat_manifest(src, 23)
    out = tmp_path / "folded.json"
    assert run("split", "--manifest", src, "--out", out, "--k", 5,
               "--seed", 9) == 0
    manifest = read_manifest(out)
    sizes = sorted(
        sum(1 for e in manifest if e.fold == f) for f in range(5))
    assert sizes == [4, 4, 5, 5, 5]
    summary = (tmp_path / "split_summary.csv").read_text().strip().splitlines()
    assert summary[0].startswith("fold,count,") and len(summary) == 6

    again = tmp_path / "again.json"
    assert run("split", "--manifest", src, "--out", again, "--k", 5,
               "--seed", 9) == 0
    assert again.read_bytes() == out.read_bytes()

    other = tmp_path / "other.json"
    assert run("split", "--manifest", src, "--out", other, "--k", 5,
               "--seed", 10) == 0
    assert other.read_bytes() != out.read_bytes()


def test_split_rejects_bad_k_and_tiny_manifests(tmp_path):
    src = tmp_path / "manifest.json"
    write_flat_manifest(src, 4)
    assert run("split", "--manifest", src, "--out", tmp_path / "a.json",
               "--k", 5, "--seed", 0) == 2  # fewer entries than folds
    assert run("split", "--manifest", src, "--out", tmp_path / "b.json",
               "--k", 1, "--seed", 0) == 2


# ----------------------------------------------------------------- evaluate

LABELS = ("MI", "AF", "HYP", "CD", "STTC")


@pytest.fixture()
def truth_manifest(tmp_path) -> Path:
    entries = [
        {"id": "a", "image_path": "a.png", "labels": "MI;HYP"},
        {"id": "b", "image_path": "b.png", "labels": "AF;CD"},
        {"id": "c", "image_path": "c.png", "labels": "STTC"},
        {"id": "d", "image_path": "d.png", "labels": ""},
    ]
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(entries))
    return path


def truth_scores(labels: str) -> list[float]:
    present = set(labels.split(";")) if labels else set()
    return [1.0 if name in present else 0.0 for name in LABELS]


def write_rows(path: Path, rows: dict[str, list[float]]) -> None:
    ids = sorted(rows)
    write_predictions(path, ids, np.array([rows[i] for i in ids]))


def test_evaluate_perfect_predictions(tmp_path, truth_manifest):
    preds = tmp_path / "preds.csv"
    rows = {e["id"]: truth_scores(e["labels"])
            for e in json.loads(truth_manifest.read_text())}
    write_rows(preds, rows)
    out = tmp_path / "out"
    assert run("evaluate", "--predictions", preds,
               "--manifest", truth_manifest, "--out", out) == 0

    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["macro_auroc"] == 1.0
    assert set(metrics["per_label_auroc"]) == set(LABELS)
    assert all(v == 1.0 for v in metrics["per_label_auroc"].values())
    assert metrics["n_samples"] == 4

    rows = (out / "metrics.csv").read_text().strip().splitlines()
    assert rows[0] == "label,auroc,n_pos,n_neg" and len(rows) == 7
    assert rows[-1].startswith("macro,")
    assert (out / "figures" / "roc.png").exists()
    assert (out / "figures" / "auroc_bar.png").exists()


def test_evaluate_rejects_missing_prediction_row(tmp_path, truth_manifest):
    preds = tmp_path / "preds.csv"
    rows = {e["id"]: truth_scores(e["labels"])
            for e in json.loads(truth_manifest.read_text())}
    del rows["c"]
    write_rows(preds, rows)
    assert run("evaluate", "--predictions", preds,
               "--manifest", truth_manifest, "--out", tmp_path / "out") == 2


def test_evaluate_rejects_single_class_label(tmp_path):
    entries = [{"id": "a", "image_path": "a.png", "labels": "MI"},
               {"id": "b", "image_path": "b.png", "labels": "MI"}]
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(entries))
    preds = tmp_path / "preds.csv"
    write_rows(preds, {"a": [0.9, 0.1, 0.1, 0.1, 0.1],
                       "b": [0.8, 0.2, 0.2, 0.2, 0.2]})
    assert run("evaluate", "--predictions", preds,
               "--manifest", manifest, "--out", tmp_path / "out") == 2


# ------------------------------------------------------------------ general

def test_seed_is_required_where_randomness_matters(tmp_path):
    with pytest.raises(SystemExit):
        run("generate", "--waveforms", tmp_path, "--out", tmp_path / "o")


def test_output_directory_guard_and_force(tmp_path, waveforms):
    out = tmp_path / "out"
    assert run("generate", "--waveforms", waveforms, "--out", out,
               "--px-per-mm", 4, "--seed", 7, "--count", 1) == 0
    assert run("generate", "--waveforms", waveforms, "--out", out,
               "--px-per-mm", 4, "--seed", 7, "--count", 1) == 2
    assert run("generate", "--waveforms", waveforms, "--out", out,
               "--px-per-mm", 4, "--seed", 7, "--count", 1, "--force") == 0
