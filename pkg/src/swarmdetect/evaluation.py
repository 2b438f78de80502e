"""Confusion statistics, threshold sweeps, ROC/AUC and report output.

Decision rule throughout: score >= threshold predicts positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, UndefinedMetricError
from .records import LABEL_NEGATIVE, LABEL_POSITIVE


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")


def _check_scored(scored: list[tuple[str, float]]) -> None:
    if not scored:
        raise EmptyInputError("scored list is empty")
    for label, score in scored:
        if label not in (LABEL_POSITIVE, LABEL_NEGATIVE):
            raise ValueError(f"label must be positive/negative, got {label!r}")
        if not np.isfinite(score):
            raise ValueError(f"score must be finite, got {score}")


def confusion(scored: list[tuple[str, float]], threshold: float) -> ConfusionCounts:
    """Count the 2x2 table under the >= decision rule."""
    _check_scored(scored)
    tp = fp = tn = fn = 0
    for label, score in scored:
        predicted_positive = score >= threshold
        if label == LABEL_POSITIVE:
            tp += predicted_positive
            fn += not predicted_positive
        else:
            fp += predicted_positive
            tn += not predicted_positive
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def sensitivity(c: ConfusionCounts) -> float:
    """TP / (TP + FN)."""
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("sensitivity undefined: no positives tested")
    return c.tp / (c.tp + c.fn)


def specificity(c: ConfusionCounts) -> float:
    """TN / (TN + FP)."""
    if c.tn + c.fp == 0:
        raise UndefinedMetricError("specificity undefined: no negatives tested")
    return c.tn / (c.tn + c.fp)


def threshold_sweep(
    scored: list[tuple[str, float]], grid: list[float]
) -> list[tuple[float, float, float]]:
    """(threshold, sensitivity, specificity) per grid point."""
    if not grid:
        raise EmptyInputError("threshold grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("threshold grid must be strictly increasing")
    out = []
    for t in grid:
        c = confusion(scored, t)
        out.append((t, sensitivity(c), specificity(c)))
    return out


def default_grid(n: int = 101) -> list[float]:
    """Evenly spaced thresholds covering the probability range."""
    return np.linspace(0.0, 1.0, n).tolist()


def roc_auc(scored: list[tuple[str, float]]) -> tuple[list[tuple[float, float]], float]:
    """Empirical ROC (anchored at (0,0) and (1,1)) and trapezoidal AUC.

    With thresholds at the unique scores and the >= rule, the trapezoid
    equals the Mann-Whitney statistic P(s+ > s-) + 0.5 P(s+ = s-).
    """
    _check_scored(scored)
    pos = np.array([s for l, s in scored if l == LABEL_POSITIVE])
    neg = np.array([s for l, s in scored if l == LABEL_NEGATIVE])
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError("ROC requires at least one positive and one negative")
    points = [(0.0, 0.0)]
    # descending thresholds sweep the ROC from (0,0) to (1,1)
    for t in sorted(set(pos.tolist()) | set(neg.tolist()), reverse=True):
        tpr = float((pos >= t).mean())
        fpr = float((neg >= t).mean())
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    # dedupe while preserving order
    roc = [points[0]]
    for p in points[1:]:
        if p != roc[-1]:
            roc.append(p)
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(roc, roc[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return roc, float(auc)


@dataclass
class EvalReport:
    per_well_scores: list[tuple[str, str, float]]  # (well_id, label, score)
    threshold: float
    confusion: ConfusionCounts
    sensitivity: float
    specificity: float
    sweep: list[tuple[float, float, float]]
    roc: list[tuple[float, float]]
    auc: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            per_well_scores=[tuple(x) for x in d["per_well_scores"]],
            threshold=d["threshold"],
            confusion=ConfusionCounts(**d["confusion"]),
            sensitivity=d["sensitivity"],
            specificity=d["specificity"],
            sweep=[tuple(x) for x in d["sweep"]],
            roc=[tuple(x) for x in d["roc"]],
            auc=d["auc"],
            extra=d.get("extra", {}),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_report(
    per_well_scores: list[tuple[str, str, float]],
    threshold: float = 0.5,
    grid: list[float] | None = None,
    extra: dict | None = None,
) -> EvalReport:
    """Aggregate confusion/sweep/ROC for one scored set of wells."""
    if not per_well_scores:
        raise EmptyInputError("no per-well scores")
    scored = [(label, score) for _, label, score in per_well_scores]
    if grid is None:
        grid = default_grid()
    c = confusion(scored, threshold)
    roc, auc = roc_auc(scored)
    return EvalReport(
        per_well_scores=list(per_well_scores),
        threshold=threshold,
        confusion=c,
        sensitivity=sensitivity(c),
        specificity=specificity(c),
        sweep=threshold_sweep(scored, grid),
        roc=roc,
        auc=auc,
        extra=extra or {},
    )


def plot_report(report: EvalReport, out_dir: Path, run_id: str = "run") -> list[Path]:
    """Emit sensitivity, specificity and ROC curves as static images."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    thresholds = [t for t, _, _ in report.sweep]
    paths = []

    for key, values, ylabel in [
        ("sensitivity", [s for _, s, _ in report.sweep], "Sensitivity"),
        ("specificity", [s for _, _, s in report.sweep], "Specificity"),
    ]:
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(thresholds, values)
        ax.set_xlabel("Decision threshold")
        ax.set_ylabel(ylabel)
        ax.set_ylim(-0.02, 1.02)
        fig.tight_layout()
        p = out_dir / f"{run_id}_{key}.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)

    fig, ax = plt.subplots(figsize=(4, 3.6))
    ax.plot([x for x, _ in report.roc], [y for _, y in report.roc], marker=".")
    ax.plot([0, 1], [0, 1], ls=":", c="gray")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(f"AUC = {report.auc:.4f}")
    fig.tight_layout()
    p = out_dir / f"{run_id}_roc.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths
