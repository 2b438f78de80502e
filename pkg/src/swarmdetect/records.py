"""Shared record types passed between pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidWellError

LABEL_POSITIVE = "swarming"
LABEL_NEGATIVE = "planktonic"
LABEL_UNKNOWN = "unknown"
VALID_LABELS = (LABEL_POSITIVE, LABEL_NEGATIVE, LABEL_UNKNOWN)


@dataclass(frozen=True)
class WellRecord:
    """One circular confinement: geometry in frame pixels plus ground truth."""

    well_id: str
    source_id: str
    centroid_px: tuple[float, float]  # (x, y) in frame coordinates
    radius_px: float
    label: str = LABEL_UNKNOWN

    def __post_init__(self):
        if self.radius_px <= 0:
            raise InvalidWellError(f"radius_px must be > 0, got {self.radius_px}")
        if not all(np.isfinite(self.centroid_px)):
            raise InvalidWellError(f"centroid_px must be finite, got {self.centroid_px}")
        if self.label not in VALID_LABELS:
            raise InvalidWellError(f"unknown label {self.label!r}")

    def to_dict(self) -> dict:
        return {
            "well_id": self.well_id,
            "source_id": self.source_id,
            "centroid_px": list(self.centroid_px),
            "radius_px": self.radius_px,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WellRecord":
        return cls(
            well_id=d["well_id"],
            source_id=d["source_id"],
            centroid_px=tuple(d["centroid_px"]),
            radius_px=float(d["radius_px"]),
            label=d["label"],
        )


@dataclass
class FrameSequence:
    """Time-ordered grayscale frames for one well, the raw 'video' unit."""

    frames: list[np.ndarray] = field(default_factory=list)
    fps: float = 29.0
    pixel_pitch_um: float = 0.1724
    well: WellRecord | None = None

    def __post_init__(self):
        shapes = {f.shape for f in self.frames}
        if len(shapes) > 1:
            raise ValueError(f"frames have inconsistent shapes: {shapes}")

    def __len__(self) -> int:
        return len(self.frames)
