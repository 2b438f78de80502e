"""Command-line surface: simulate -> preprocess -> train -> evaluate -> predict.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, preprocess, simulator, training
from .config import derive_seed, load_run_config
from .errors import SwarmDetectError
from .model import ModelConfig, SwarmClassifier, load_model, predict_well
from .records import LABEL_POSITIVE

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _well_dirs_from_manifest(wells_dir: Path) -> list[Path]:
    manifest_path = wells_dir / "wells_manifest.json"
    if not manifest_path.exists():
        raise SwarmDetectError(f"missing wells manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    return [wells_dir / entry["dir"] for entry in manifest["wells"]]


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    sim_cfg = cfg["simulate"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    jobs = [("swarm", sim_cfg["n_positive"], sim_cfg["swarm"])]
    jobs.append(("planktonic", sim_cfg["n_negative"], sim_cfg["planktonic"]))
    index = 0
    for mode, count, overrides in jobs:
        for k in range(count):
            well_seed = derive_seed(seed, f"simulate/{mode}/{k}")
            config = simulator.default_config(
                mode, n_frames=sim_cfg["n_frames"], seed=well_seed, **overrides
            )
            well_id = f"well_{index:03d}"
            seq = simulator.simulate_well(config, well_id=well_id)
            simulator.save_well(seq, config, out_dir / well_id)
            entries.append(
                {"dir": well_id, "well_id": well_id, "label": seq.well.label, "seed": well_seed}
            )
            index += 1

    body = json.dumps({"seed": seed, "wells": entries}, indent=2)
    manifest_path = out_dir / "wells_manifest.json"
    tmp = manifest_path.with_suffix(".tmp")
    tmp.write_text(body)
    tmp.replace(manifest_path)  # atomic: readers never see a partial manifest
    fingerprint = hashlib.sha256(body.encode()).hexdigest()[:16]
    print(f"simulated {len(entries)} wells -> {out_dir} (manifest {fingerprint})")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = load_run_config(args.config)
    wells_dir = Path(args.wells)
    well_dirs = _well_dirs_from_manifest(wells_dir)
    manifest_path = preprocess.build_dataset(
        well_dirs,
        Path(args.out),
        window=cfg["preprocess"]["window"],
        stride=cfg["preprocess"]["stride"],
    )
    n = len(preprocess.load_manifest(manifest_path)["images"])
    print(f"wrote {n} images, manifest {preprocess.manifest_fingerprint(manifest_path)}")
    return EXIT_OK


def _model_config(cfg: dict, no_attention: bool) -> ModelConfig:
    m = dict(cfg["model"])
    if no_attention:
        m["attention_enabled"] = False
    m["block_layers"] = tuple(m["block_layers"])
    return ModelConfig(**m)


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    dataset_dir = Path(args.dataset)
    manifest_file = dataset_dir / "manifest.json"
    if not manifest_file.exists():
        raise SwarmDetectError(f"missing dataset manifest: {manifest_file}")
    manifest = preprocess.load_manifest(manifest_file)

    split = training.split_dataset(
        manifest["wells"],
        train_fraction=cfg["train"]["train_fraction"],
        seed=derive_seed(seed, "split"),
    )
    tc = training.TrainConfig(
        epochs=cfg["train"]["epochs"],
        batch_size=cfg["train"]["batch_size"],
        learning_rate=cfg["train"]["learning_rate"],
        patience=cfg["train"]["patience"],
        class_weighting=cfg["train"]["class_weighting"],
        seed=derive_seed(seed, "train"),
    )
    model_cfg = _model_config(cfg, args.no_attention)
    run_dir = Path(args.out)
    _, history = training.train(model_cfg, dataset_dir, split, tc, run_dir=run_dir)
    best = min(history, key=lambda h: h["val_loss"])
    print(
        f"trained {len(history)} epochs; best val_loss {best['val_loss']:.4f} "
        f"(epoch {best['epoch']}, val_auc {best['val_auc']:.4f}) -> {run_dir}"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config)
    threshold = args.threshold if args.threshold is not None else cfg["evaluate"]["threshold"]
    dataset_dir = Path(args.dataset)
    manifest_file = dataset_dir / "manifest.json"
    if not manifest_file.exists():
        raise SwarmDetectError(f"missing dataset manifest: {manifest_file}")
    weights = Path(args.weights)
    if not weights.exists():
        raise SwarmDetectError(f"missing weights file: {weights}")
    manifest = preprocess.load_manifest(manifest_file)
    model = load_model(weights)

    selected: set[str] | None = None
    if args.split is not None:
        plan = training.SplitPlan.from_dict(json.loads(Path(args.split).read_text()))
        selected = plan.val_wells

    per_well = _score_wells(model, dataset_dir, manifest, selected)
    grid = evaluation.default_grid(cfg["evaluate"]["grid_points"])
    report = evaluation.build_report(
        per_well,
        threshold=threshold,
        grid=grid,
        extra={"dataset_manifest": preprocess.manifest_fingerprint(manifest_file)},
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save(out_dir / "report.json")
    evaluation.plot_report(report, out_dir, run_id="eval")
    print(
        f"wells={len(per_well)} auc={report.auc:.4f} "
        f"sensitivity={report.sensitivity:.4f} specificity={report.specificity:.4f}"
    )
    return EXIT_OK


def _score_wells(model, dataset_dir, manifest, selected=None):
    """Mean per-image probability for each (selected) well in the manifest."""
    import torch

    by_well: dict[str, list[dict]] = {}
    for rec in manifest["images"]:
        if selected is None or rec["well_id"] in selected:
            by_well.setdefault(rec["well_id"], []).append(rec)
    labels = {w["well_id"]: w["label"] for w in manifest["wells"]}
    per_well = []
    model.eval()
    with torch.no_grad():
        for well_id in sorted(by_well):
            recs = by_well[well_id]
            x = torch.from_numpy(
                np.stack([preprocess.load_image(dataset_dir, r) for r in recs])
            ).float()
            probs = model(x)
            per_well.append((well_id, labels[well_id], float(probs.mean())))
    return per_well


def cmd_predict(args) -> int:
    cfg = load_run_config(args.config)
    threshold = args.threshold if args.threshold is not None else cfg["evaluate"]["threshold"]
    frames_dir = Path(args.frames)
    if not (frames_dir / "metadata.json").exists():
        raise SwarmDetectError(f"missing well metadata: {frames_dir / 'metadata.json'}")
    weights = Path(args.weights)
    if not weights.exists():
        raise SwarmDetectError(f"missing weights file: {weights}")
    seq = simulator.load_well(frames_dir)
    images = preprocess.augment_windows(
        seq, window=cfg["preprocess"]["window"], stride=cfg["preprocess"]["stride"]
    )
    model = load_model(weights)
    score, label = predict_well(model, images, threshold=threshold)
    print(f"swarming_probability={score:.4f} label={label} threshold={threshold}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmdetect",
        description="Single-image bacterial swarming detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="global seed override")

    p = sub.add_parser("simulate", help="generate labeled synthetic wells")
    common(p)
    p.add_argument("--out", type=Path, required=True, help="output wells directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preprocess", help="build long-exposure dataset from wells")
    common(p)
    p.add_argument("--wells", type=Path, required=True, help="simulate output directory")
    p.add_argument("--out", type=Path, required=True, help="dataset directory")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="split wells and train the classifier")
    common(p)
    p.add_argument("--dataset", type=Path, required=True, help="preprocess output")
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--no-attention", action="store_true", help="ablate the attention module")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score wells and emit report + plots")
    common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", type=Path, default=None, help="restrict to a split's val wells")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score one well's frame directory")
    common(p)
    p.add_argument("--frames", type=Path, required=True, help="one well directory")
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SwarmDetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
