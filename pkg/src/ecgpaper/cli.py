"""Batch command-line front-end.

Subcommands: synth-waveforms, generate, distort, rectify, split, evaluate.
Artefact-producing commands write a manifest plus a run.json provenance file
so any run can be reproduced from its outputs alone. Exit codes: 0 success,
1 some entries failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .distort import DistortionRecipe, apply_recipe, derive_seed
from .errors import (EcgPaperError, MissingImage, MissingPrediction,
                     NonEmptyOutDir, TooFewEntries)
from .geometry import Quad, rect_quad
from .manifest import (DatasetManifest, ManifestEntry, read_manifest,
                       resolve_image, write_manifest)
from .metrics import (ScoredPredictions, macro_auroc, per_label_auroc,
                      read_predictions, roc_curve)
from .rectify import RectifyConfig, crop_only, rectify_pipeline
from .render import GridConfig, load_png, panel_metadata, plan_layout, render_record
from .synth import random_labels, synth_record
from .waveform import LABEL_NAMES, DiagnosisVector, load_record, save_record


def _prepare_out(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise NonEmptyOutDir(f"{out} is not empty; pass --force to write anyway")
    (out / "images").mkdir(parents=True, exist_ok=True)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", "utf-8")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    import csv
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _run_jobs(worker, payloads: list[dict], workers: int) -> list[dict]:
    """Run per-entry jobs, optionally in a process pool.

    Results come back in submission order, and each job writes only its own
    files, so parallel output is byte-identical to serial output.
    """
    if workers <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, payloads))


# ---------------------------------------------------------------- generate

def _job_generate(payload: dict) -> dict:
    try:
        rec = load_record(payload["csv"])
        cfg = GridConfig(px_per_mm=payload["px_per_mm"])
        img = render_record(rec, cfg)
        img.save_png(payload["png"])
        if payload["panel_meta"]:
            meta = panel_metadata(plan_layout(rec, cfg))
            _write_json(Path(payload["png"]).with_suffix(".panels.json"), meta)
        return {"index": payload["index"], "id": rec.id,
                "labels": rec.labels.to_string(),
                "width": img.width, "height": img.height}
    except EcgPaperError as e:
        return {"index": payload["index"], "id": Path(payload["csv"]).stem,
                "error": f"{type(e).__name__}: {e}"}


def cmd_generate(args) -> int:
    waveforms = Path(args.waveforms)
    out = Path(args.out)
    records = sorted(waveforms.glob("*.csv"))
    if args.count is not None:
        records = records[: args.count]
    if not records:
        raise EcgPaperError(f"no waveform CSVs found in {waveforms}")
    _prepare_out(out, args.force)

    payloads = [
        {"index": i, "csv": str(p), "png": str(out / "images" / f"{p.stem}.png"),
         "px_per_mm": args.px_per_mm, "panel_meta": args.panel_meta}
        for i, p in enumerate(records)
    ]
    results = _run_jobs(_job_generate, payloads, args.workers)

    entries, failures = [], []
    for r in sorted(results, key=lambda r: r["index"]):
        if "error" in r:
            failures.append((r["id"], r["error"]))
            continue
        entries.append(ManifestEntry(
            id=r["id"],
            image_path=f"images/{r['id']}.png",
            labels=DiagnosisVector.from_string(r["labels"]),
            corners=rect_quad(r["width"], r["height"]),
        ))
    for rid, err in failures:
        print(f"failed {rid}: {err}", file=sys.stderr)
    if not entries:
        raise EcgPaperError("no record could be rendered; manifest not written")

    write_manifest(DatasetManifest(tuple(entries)), out / "manifest.json")
    _write_json(out / "run.json", {
        "command": "generate", "seed": args.seed, "px_per_mm": args.px_per_mm,
        "waveforms": str(waveforms), "count": len(entries),
    })
    print(f"generated {len(entries)} images -> {out / 'manifest.json'}")
    return 1 if failures else 0


# ----------------------------------------------------------------- distort

def _job_distort(payload: dict) -> dict:
    try:
        img = load_png(payload["src"])
        if payload["corners"] is not None:
            img.corners = Quad(np.asarray(payload["corners"], dtype=np.float64))
        recipe = DistortionRecipe.from_dict(
            {"seed": payload["entry_seed"], "steps": payload["steps"]}
        )
        distorted, quad, realised = apply_recipe(img, recipe)
        distorted.save_png(payload["png"])
        return {"index": payload["index"], "id": payload["id"],
                "corners": quad.as_list(), "recipe": realised.to_dict()}
    except EcgPaperError as e:
        return {"index": payload["index"], "id": payload["id"],
                "error": f"{type(e).__name__}: {e}"}


def _load_template(path: Path) -> DistortionRecipe:
    raw = json.loads(path.read_text("utf-8"))
    if isinstance(raw, dict):
        raw.setdefault("seed", 0)
    return DistortionRecipe.from_dict(raw)


def cmd_distort(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    template = _load_template(Path(args.template))
    out = Path(args.out)
    _prepare_out(out, args.force)

    payloads, failures = [], []
    for i, entry in enumerate(manifest):
        src = resolve_image(manifest_path, entry)
        if not src.exists():
            failures.append((entry.id, f"MissingImage: {src}"))
            continue
        payloads.append({
            "index": i, "id": entry.id, "src": str(src),
            "png": str(out / "images" / f"{entry.id}.png"),
            "corners": entry.corners.as_list() if entry.corners else None,
            "steps": [s.to_dict() for s in template.steps],
            "entry_seed": derive_seed(args.seed, entry.id),
        })
    results = _run_jobs(_job_distort, payloads, args.workers)

    by_id = {}
    for r in sorted(results, key=lambda r: r["index"]):
        if "error" in r:
            failures.append((r["id"], r["error"]))
        else:
            by_id[r["id"]] = r
    entries = []
    for entry in manifest:
        r = by_id.get(entry.id)
        if r is None:
            continue
        entries.append(ManifestEntry(
            id=entry.id,
            image_path=f"images/{entry.id}.png",
            labels=entry.labels,
            corners=Quad(np.asarray(r["corners"], dtype=np.float64)),
            recipe=DistortionRecipe.from_dict(r["recipe"]),
            fold=entry.fold,
        ))
    for rid, err in failures:
        print(f"failed {rid}: {err}", file=sys.stderr)
    if not entries:
        raise EcgPaperError("no entry could be distorted; manifest not written")

    write_manifest(DatasetManifest(tuple(entries)), out / "manifest.json")
    _write_json(out / "run.json", {
        "command": "distort", "seed": args.seed,
        "template": _load_template(Path(args.template)).to_dict(),
        "source_manifest": str(manifest_path),
    })
    print(f"distorted {len(entries)} images -> {out / 'manifest.json'}")
    return 1 if failures else 0


# ----------------------------------------------------------------- rectify

def _job_rectify(payload: dict) -> dict:
    try:
        img = load_png(payload["src"])
        cfg = RectifyConfig(**payload["cfg"])
        if payload["mode"] == "full":
            fixed, report = rectify_pipeline(img, cfg)
        else:
            fixed, report = crop_only(img, cfg)
        fixed.save_png(payload["png"])

        rmse = None
        if payload["truth"] is not None and report.homography is not None \
                and payload["mode"] == "full":
            truth = np.asarray(payload["truth"], dtype=np.float64)
            target = rect_quad(cfg.canonical_width, cfg.canonical_height).points
            moved = report.homography.apply(truth)
            rmse = float(np.sqrt(((moved - target) ** 2).sum(axis=1).mean()))

        doc = report.to_dict()
        doc["id"] = payload["id"]
        doc["rmse_px"] = rmse
        _write_json(Path(payload["report"]), doc)
        return {"index": payload["index"], "id": payload["id"], "rmse": rmse,
                "width": fixed.width, "height": fixed.height,
                "timings": report.timings_ms}
    except EcgPaperError as e:
        return {"index": payload["index"], "id": payload["id"],
                "error": f"{type(e).__name__}: {e}"}


def cmd_rectify(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    out = Path(args.out)
    _prepare_out(out, args.force)
    (out / "reports").mkdir(exist_ok=True)
    cfg = {
        "canonical_width": args.canonical_width,
        "canonical_height": args.canonical_height,
        "clahe_tiles": tuple(args.tiles),
        "clahe_clip": args.clip,
    }

    payloads, failures = [], []
    for i, entry in enumerate(manifest):
        src = resolve_image(manifest_path, entry)
        if not src.exists():
            failures.append((entry.id, f"MissingImage: {src}"))
            continue
        payloads.append({
            "index": i, "id": entry.id, "src": str(src), "mode": args.mode,
            "png": str(out / "images" / f"{entry.id}.png"),
            "report": str(out / "reports" / f"{entry.id}.json"),
            "cfg": cfg,
            "truth": entry.corners.as_list() if entry.corners else None,
        })
    results = _run_jobs(_job_rectify, payloads, args.workers)

    by_id, rows, rmses, timing_sums = {}, [], [], {}
    for r in sorted(results, key=lambda r: r["index"]):
        if "error" in r:
            failures.append((r["id"], r["error"]))
            rows.append([r["id"], "error", "", r["error"]])
            continue
        by_id[r["id"]] = r
        rmse = "" if r["rmse"] is None else f"{r['rmse']:.4f}"
        if r["rmse"] is not None:
            rmses.append(r["rmse"])
        for stage, ms in r["timings"].items():
            timing_sums.setdefault(stage, []).append(ms)
        rows.append([r["id"], "ok", rmse, ""])

    entries = []
    for entry in manifest:
        r = by_id.get(entry.id)
        if r is None:
            continue
        entries.append(ManifestEntry(
            id=entry.id,
            image_path=f"images/{entry.id}.png",
            labels=entry.labels,
            corners=rect_quad(r["width"], r["height"]),
            fold=entry.fold,
        ))
    for rid, err in failures:
        print(f"failed {rid}: {err}", file=sys.stderr)

    _write_csv(out / "summary.csv", ["id", "status", "rmse_px", "error"], rows)
    if entries:
        write_manifest(DatasetManifest(tuple(entries)), out / "manifest.json")
    _write_json(out / "run.json", {
        "command": "rectify", "mode": args.mode, "config": {
            "canonical_width": cfg["canonical_width"],
            "canonical_height": cfg["canonical_height"],
            "clahe_tiles": list(cfg["clahe_tiles"]), "clahe_clip": cfg["clahe_clip"]},
        "source_manifest": str(manifest_path),
    })

    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    plt = _pyplot()
    if rmses:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(rmses, bins=24, color="#3465a4", edgecolor="white")
        ax.set_xlabel("corner reprojection RMSE (px)")
        ax.set_ylabel("images")
        ax.set_title(f"corner error over {len(rmses)} images "
                     f"(median {np.median(rmses):.2f} px)")
        fig.tight_layout()
        fig.savefig(figdir / "corner_error.png", dpi=110)
        plt.close(fig)
    if timing_sums:
        stages = list(timing_sums)
        means = [float(np.mean(timing_sums[s])) for s in stages]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(stages, means, color="#73d216")
        ax.set_ylabel("mean time (ms)")
        ax.set_title("pipeline stage cost")
        fig.tight_layout()
        fig.savefig(figdir / "stage_times.png", dpi=110)
        plt.close(fig)

    if rmses:
        print(f"rectified {len(entries)} images; median corner RMSE "
              f"{np.median(rmses):.2f} px")
    else:
        print(f"rectified {len(entries)} images")
    return 1 if failures else 0


# ------------------------------------------------------------------- split

def cmd_split(args) -> int:
    manifest = read_manifest(Path(args.manifest))
    if args.k < 2:
        raise EcgPaperError("k must be >= 2")
    if len(manifest) < args.k:
        raise TooFewEntries(f"{len(manifest)} entries cannot fill {args.k} folds")

    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(len(manifest))
    folds = {manifest.entries[int(p)].id: i % args.k for i, p in enumerate(perm)}
    assigned = manifest.with_folds(folds)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(assigned, out)

    rows = []
    for f in range(args.k):
        members = [e for e in assigned if e.fold == f]
        counts = [sum(e.labels.as_tuple()[k] for e in members) for k in range(5)]
        rows.append([f, len(members)] + counts)
        pretty = ", ".join(f"{n}={c}" for n, c in zip(LABEL_NAMES, counts))
        print(f"fold {f}: {len(members)} entries ({pretty})")
    _write_csv(out.parent / "split_summary.csv",
               ["fold", "count"] + list(LABEL_NAMES), rows)
    return 0


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args) -> int:
    manifest = read_manifest(Path(args.manifest))
    ids, scores = read_predictions(Path(args.predictions))
    by_id = {i: scores[k] for k, i in enumerate(ids)}

    rows_scores, truths, ordered = [], [], []
    for entry in manifest:
        if entry.id not in by_id:
            raise MissingPrediction(entry.id)
        ordered.append(entry.id)
        rows_scores.append(by_id[entry.id])
        truths.append(entry.labels.as_tuple())
    preds = ScoredPredictions(tuple(ordered), np.asarray(rows_scores),
                              np.asarray(truths))

    per_label = per_label_auroc(preds)
    macro = macro_auroc(preds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n_pos = preds.truths.sum(axis=0)
    for k, name in enumerate(LABEL_NAMES):
        print(f"AUROC {name}: {per_label[name]:.4f} "
              f"({int(n_pos[k])}+ / {len(preds.ids) - int(n_pos[k])}-)")
    print(f"macro AUROC: {macro:.4f}")

    _write_json(out / "metrics.json", {
        "macro_auroc": macro,
        "per_label_auroc": per_label,
        "n_samples": len(preds.ids),
        "positives": {n: int(n_pos[k]) for k, n in enumerate(LABEL_NAMES)},
    })
    rows = [[n, f"{per_label[n]:.6f}", int(n_pos[k]),
             len(preds.ids) - int(n_pos[k])] for k, n in enumerate(LABEL_NAMES)]
    rows.append(["macro", f"{macro:.6f}", "", ""])
    _write_csv(out / "metrics.csv", ["label", "auroc", "n_pos", "n_neg"], rows)

    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 6))
    for k, name in enumerate(LABEL_NAMES):
        fpr, tpr = roc_curve(preds.scores[:, k], preds.truths[:, k])
        ax.plot(fpr, tpr, label=f"{name} ({per_label[name]:.3f})")
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"ROC, macro AUROC {macro:.4f}")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(figdir / "roc.png", dpi=110)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(list(LABEL_NAMES), [per_label[n] for n in LABEL_NAMES], color="#f57900")
    ax.axhline(macro, color="#3465a4", linestyle="--", label=f"macro {macro:.3f}")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("AUROC")
    ax.legend()
    fig.tight_layout()
    fig.savefig(figdir / "auroc_bar.png", dpi=110)
    plt.close(fig)
    return 0


# --------------------------------------------------------- synth-waveforms

def cmd_synth_waveforms(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise NonEmptyOutDir(f"{out} is not empty; pass --force to write anyway")
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        rid = f"rec{i:04d}"
        rng = np.random.default_rng(derive_seed(args.seed, rid))
        labels = random_labels(rng)
        rec = synth_record(rid, int(rng.integers(2**63)), labels,
                           fs=args.fs, duration_s=args.duration)
        save_record(rec, out / f"{rid}.csv")
    print(f"wrote {args.count} synthetic records to {out}")
    return 0


# -------------------------------------------------------------------- main

def _add_common(p: argparse.ArgumentParser, seed_required: bool) -> None:
    p.add_argument("--seed", type=int, required=seed_required, default=0,
                   help="run seed (mandatory for artefact-producing commands)")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel worker processes; output is identical to serial")
    p.add_argument("--force", action="store_true",
                   help="write into a non-empty output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ecgpaper",
        description="Synthesize, distort, rectify, split, and evaluate "
                    "paper-style 12-lead ECG images.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-waveforms", help="write demo waveform records")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--fs", type=int, default=200)
    p.add_argument("--duration", type=float, default=10.0)
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_synth_waveforms)

    p = sub.add_parser("generate", help="render waveform records to paper images")
    p.add_argument("--waveforms", required=True, help="directory of record CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--px-per-mm", type=int, default=8)
    p.add_argument("--panel-meta", action="store_true",
                   help="write per-image panel layout JSON")
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("distort", help="apply a distortion recipe template")
    p.add_argument("--manifest", required=True)
    p.add_argument("--template", required=True, help="recipe template JSON")
    p.add_argument("--out", required=True)
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("rectify", help="rectify images to the canonical view")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("full", "crop-only"), default="full")
    p.add_argument("--canonical-width", type=int, default=2000)
    p.add_argument("--canonical-height", type=int, default=800)
    p.add_argument("--tiles", type=int, nargs=2, default=(8, 8),
                   metavar=("ROWS", "COLS"))
    p.add_argument("--clip", type=float, default=2.0)
    _add_common(p, seed_required=False)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("split", help="assign k cross-validation folds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="path for the fold-annotated manifest")
    p.add_argument("--k", type=int, default=5)
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", help="score a prediction CSV against truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, seed_required=False)
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingImage as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except EcgPaperError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
