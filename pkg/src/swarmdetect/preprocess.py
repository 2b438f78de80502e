"""Raw frame sequences -> normalized long-exposure classifier inputs.

Pipeline per well: crop a 500x500 window around the well centroid,
average 10 consecutive frames (temporal long exposure), normalize to
zero mean / unit variance over in-well pixels, zero everything outside
the well disk. Temporal augmentation slides the averaging window.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateImageError,
    InsufficientFramesError,
    InvalidWellError,
)
from .records import FrameSequence, WellRecord

CROP_SIZE = 500
DEFAULT_WINDOW = 10
VARIANCE_FLOOR = 1e-12


@dataclass
class LongExposureImage:
    """Normalized, well-masked average of consecutive frames."""

    pixels: np.ndarray  # (size, size) float
    well_id: str
    window_start: int
    mask: np.ndarray  # (size, size) bool
    label: str = "unknown"


def crop_well(frame: np.ndarray, centroid_px: tuple[float, float], size: int = CROP_SIZE) -> np.ndarray:
    """Extract a size x size window centred on the well centroid.

    The centroid lands on output pixel (size//2, size//2); regions outside
    the source frame are zero-padded.
    """
    h, w = frame.shape
    cx, cy = centroid_px
    if not (0 <= cx < w and 0 <= cy < h):
        raise InvalidWellError(
            f"centroid ({cx}, {cy}) outside frame bounds {w}x{h}"
        )
    cx_i, cy_i = int(round(cx)), int(round(cy))
    half = size // 2
    out = np.zeros((size, size), dtype=frame.dtype)
    src_y0 = max(cy_i - half, 0)
    src_y1 = min(cy_i - half + size, h)
    src_x0 = max(cx_i - half, 0)
    src_x1 = min(cx_i - half + size, w)
    dst_y0 = src_y0 - (cy_i - half)
    dst_x0 = src_x0 - (cx_i - half)
    out[dst_y0 : dst_y0 + (src_y1 - src_y0), dst_x0 : dst_x0 + (src_x1 - src_x0)] = frame[
        src_y0:src_y1, src_x0:src_x1
    ]
    return out


def average_frames(frames: list[np.ndarray], start: int, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Pixelwise mean of frames[start : start + window]."""
    if window < 1:
        raise InsufficientFramesError(f"window must be >= 1, got {window}")
    if start < 0 or start + window > len(frames):
        raise InsufficientFramesError(
            f"window [{start}, {start + window}) exceeds {len(frames)} frames"
        )
    return np.mean(frames[start : start + window], axis=0)


def disk_mask(size: int, centre: tuple[float, float], radius: float) -> np.ndarray:
    """Boolean disk of the given radius; pixel centres inside count."""
    yy, xx = np.mgrid[0:size, 0:size]
    return (xx - centre[0]) ** 2 + (yy - centre[1]) ** 2 <= radius**2


def normalize_and_mask(
    image: np.ndarray,
    well: WellRecord,
    window_start: int = 0,
    crop_centre: tuple[float, float] | None = None,
) -> LongExposureImage:
    """Standardize in-well pixels to mean 0 / variance 1, zero the rest.

    Statistics are computed over in-mask pixels only, so masking and
    normalizing commute and the mask's zeros never dilute the variance.
    """
    size = image.shape[0]
    if image.shape != (size, size):
        raise InvalidWellError(f"expected square crop, got {image.shape}")
    if crop_centre is None:
        crop_centre = (size // 2, size // 2)
    mask = disk_mask(size, crop_centre, well.radius_px)
    if not mask.any():
        raise InvalidWellError("well disk does not intersect the crop")
    inside = image[mask]
    var = float(inside.var())
    if var < VARIANCE_FLOOR:
        raise DegenerateImageError(
            f"in-mask variance {var:.3e} below {VARIANCE_FLOOR}; image carries no signal"
        )
    out = np.zeros_like(image, dtype=np.float64)
    out[mask] = (inside - inside.mean()) / np.sqrt(var)
    return LongExposureImage(
        pixels=out,
        well_id=well.well_id,
        window_start=window_start,
        mask=mask,
        label=well.label,
    )


def augment_windows(
    seq: FrameSequence, window: int = DEFAULT_WINDOW, stride: int = DEFAULT_WINDOW
) -> list[LongExposureImage]:
    """One long-exposure image per start index 0, stride, 2*stride, ...

    Cropping uses the sequence's well record; for synthetic wells centred
    in their frames the crop is a no-op apart from sizing.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if len(seq.frames) < window:
        raise InsufficientFramesError(
            f"{len(seq.frames)} frames < window {window}"
        )
    if seq.well is None:
        raise InvalidWellError("sequence has no well record")
    images = []
    for start in range(0, len(seq.frames) - window + 1, stride):
        avg = average_frames(seq.frames, start, window)
        crop = crop_well(avg, seq.well.centroid_px, CROP_SIZE)
        images.append(normalize_and_mask(crop, seq.well, window_start=start))
    return images


def window_count(n_frames: int, window: int, stride: int) -> int:
    """Number of images augment_windows will produce."""
    if n_frames < window:
        return 0
    return (n_frames - window) // stride + 1


def integration_time_s(window: int, fps: float) -> float:
    """Effective exposure of one averaged image."""
    return window / fps


# ---------------------------------------------------------------------------
# Dataset construction: manifest + per-image float rasters


def build_dataset(
    well_dirs: list[Path],
    out_dir: Path,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_WINDOW,
) -> Path:
    """Preprocess every well directory and write images plus a manifest.

    The manifest is the single source of truth for downstream splits:
    one record per image with well_id, label, window_start and path.
    """
    from .simulator import load_well  # deferred to keep import graph acyclic

    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    records = []
    wells = []
    for well_dir in sorted(Path(p) for p in well_dirs):
        seq = load_well(well_dir)
        wells.append(seq.well.to_dict())
        for img in augment_windows(seq, window=window, stride=stride):
            name = f"{img.well_id}_w{img.window_start:04d}.npy"
            np.save(images_dir / name, img.pixels.astype(np.float32))
            records.append(
                {
                    "well_id": img.well_id,
                    "label": img.label,
                    "window_start": img.window_start,
                    "path": str(Path("images") / name),
                }
            )
    manifest = {
        "window": window,
        "stride": stride,
        "wells": wells,
        "images": records,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def load_manifest(manifest_path: Path) -> dict:
    return json.loads(Path(manifest_path).read_text())


def manifest_fingerprint(manifest_path: Path) -> str:
    """Content hash used for provenance in downstream reports."""
    return hashlib.sha256(Path(manifest_path).read_bytes()).hexdigest()[:16]


def load_image(dataset_dir: Path, record: dict) -> np.ndarray:
    return np.load(Path(dataset_dir) / record["path"])
