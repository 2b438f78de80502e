"""Well-level dataset splitting, loss and the optimization loop."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from . import evaluation
from .errors import DivergenceError, InsufficientDataError, SwarmDetectError
from .model import ModelConfig, SwarmClassifier, save_model
from .preprocess import load_manifest, manifest_fingerprint
from .records import LABEL_NEGATIVE, LABEL_POSITIVE

_EPS = 1e-7


@dataclass
class SplitPlan:
    train_wells: set[str]
    val_wells: set[str]
    seed: int

    def to_dict(self) -> dict:
        return {
            "train_wells": sorted(self.train_wells),
            "val_wells": sorted(self.val_wells),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(set(d["train_wells"]), set(d["val_wells"]), d["seed"])


def split_dataset(wells: list[dict], train_fraction: float = 0.9, seed: int = 0) -> SplitPlan:
    """Stratified well-level split; all images of a well stay together.

    Per class the train count is round(fraction * n), adjusted so at
    least one well lands in validation. Deterministic given seed.
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_label: dict[str, list[str]] = {LABEL_POSITIVE: [], LABEL_NEGATIVE: []}
    for w in wells:
        label = w["label"] if isinstance(w, dict) else w.label
        well_id = w["well_id"] if isinstance(w, dict) else w.well_id
        if label not in by_label:
            raise SwarmDetectError(f"well {well_id} has unusable label {label!r}")
        by_label[label].append(well_id)
    rng = np.random.default_rng(seed)
    train: set[str] = set()
    val: set[str] = set()
    for label in (LABEL_POSITIVE, LABEL_NEGATIVE):
        ids = sorted(by_label[label])
        if len(ids) < 2:
            raise InsufficientDataError(
                f"need >= 2 wells of class {label!r}, got {len(ids)}"
            )
        order = rng.permutation(len(ids))
        n_train = int(round(train_fraction * len(ids)))
        n_train = min(max(n_train, 1), len(ids) - 1)  # >= 1 val well per class
        train.update(ids[i] for i in order[:n_train])
        val.update(ids[i] for i in order[n_train:])
    return SplitPlan(train_wells=train, val_wells=val, seed=seed)


def bce_loss(p, y):
    """Binary cross-entropy -[y ln p + (1-y) ln(1-p)] with clamped p."""
    if isinstance(p, torch.Tensor):
        p = p.clamp(_EPS, 1.0 - _EPS)
        return -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))
    p = np.clip(np.asarray(p, dtype=np.float64), _EPS, 1.0 - _EPS)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 10  # early stop on validation loss
    class_weighting: bool = True  # inverse-frequency sample weights
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")

    def to_dict(self) -> dict:
        return asdict(self)


class _ArrayDataset:
    """Images for a list of manifest records, preloaded as one tensor."""

    def __init__(self, dataset_dir: Path, records: list[dict]):
        self.records = records
        arrays = [np.load(Path(dataset_dir) / r["path"]) for r in records]
        self.x = torch.from_numpy(np.stack(arrays)).float().unsqueeze(1)
        self.y = torch.tensor(
            [1.0 if r["label"] == LABEL_POSITIVE else 0.0 for r in records]
        )

    def __len__(self):
        return len(self.records)


def _sample_weights(y: torch.Tensor) -> torch.Tensor:
    """Inverse-frequency weights normalized to mean 1."""
    n = len(y)
    n_pos = float(y.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return torch.ones(n)
    w = torch.where(y > 0.5, n / (2.0 * n_pos), n / (2.0 * n_neg))
    return w


def train(
    model_config: ModelConfig,
    dataset_dir: Path,
    split: SplitPlan,
    tc: TrainConfig,
    run_dir: Path | None = None,
) -> tuple[SwarmClassifier, list[dict]]:
    """Train on the split's train wells; return best-val-loss weights.

    History has one entry per epoch with train/val loss and val AUC.
    Everything needed to re-run is written into run_dir when given.
    """
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir / "manifest.json")
    train_recs = [r for r in manifest["images"] if r["well_id"] in split.train_wells]
    val_recs = [r for r in manifest["images"] if r["well_id"] in split.val_wells]
    if not train_recs or not val_recs:
        raise InsufficientDataError(
            f"split leaves {len(train_recs)} train / {len(val_recs)} val images"
        )

    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)
    model = SwarmClassifier(model_config)
    optimizer = torch.optim.Adam(model.parameters(), lr=tc.learning_rate)

    train_set = _ArrayDataset(dataset_dir, train_recs)
    val_set = _ArrayDataset(dataset_dir, val_recs)
    weights = _sample_weights(train_set.y) if tc.class_weighting else torch.ones(len(train_set))

    history: list[dict] = []
    best_state = None
    best_val_loss = float("inf")
    epochs_since_best = 0

    for epoch in range(tc.epochs):
        model.train()
        order = rng.permutation(len(train_set))
        train_losses = []
        for i in range(0, len(order), tc.batch_size):
            idx = torch.from_numpy(order[i : i + tc.batch_size].copy())
            probs = model(train_set.x[idx])
            losses = bce_loss(probs, train_set.y[idx]) * weights[idx]
            loss = losses.mean()
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            train_losses.append(float(loss.detach()))

        model.eval()
        with torch.no_grad():
            val_probs = []
            for i in range(0, len(val_set), tc.batch_size):
                val_probs.append(model(val_set.x[i : i + tc.batch_size]))
            val_probs = torch.cat(val_probs)
            val_loss = float(bce_loss(val_probs, val_set.y).mean())
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        scored = [
            (LABEL_POSITIVE if y > 0.5 else LABEL_NEGATIVE, float(p))
            for y, p in zip(val_set.y, val_probs)
        ]
        try:
            _, val_auc = evaluation.roc_auc(scored)
        except SwarmDetectError:
            val_auc = float("nan")

        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(train_losses)),
                "val_loss": val_loss,
                "val_auc": val_auc,
            }
        )
        if val_loss < best_val_loss:
            best_val_loss = val_loss
            best_state = copy.deepcopy(model.state_dict())
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= tc.patience:
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "train_config.json").write_text(json.dumps(tc.to_dict(), indent=2))
        (run_dir / "model_config.json").write_text(
            json.dumps(model_config.to_dict(), indent=2)
        )
        (run_dir / "split_plan.json").write_text(json.dumps(split.to_dict(), indent=2))
        with open(run_dir / "metrics.jsonl", "w") as fh:
            for entry in history:
                fh.write(json.dumps(entry) + "\n")
        save_model(
            model,
            run_dir / "weights.pt",
            manifest_fingerprint=manifest_fingerprint(dataset_dir / "manifest.json"),
            seed=tc.seed,
        )
    return model, history
