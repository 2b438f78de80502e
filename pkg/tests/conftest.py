import json
from pathlib import Path

import numpy as np
import pytest


def make_fake_dataset(
    out_dir: Path,
    n_pos_wells: int = 4,
    n_neg_wells: int = 4,
    images_per_well: int = 2,
    image_size: int = 100,
    seed: int = 0,
) -> Path:
    """Write a dataset directory without running the simulator.

    Positive images carry a mid-radius ring, negatives are noise; both
    are masked and standardized like real preprocessing output.
    """
    rng = np.random.default_rng(seed)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    centre = image_size // 2
    radius = 0.43 * image_size
    yy, xx = np.mgrid[0:image_size, 0:image_size]
    rr = np.hypot(xx - centre, yy - centre)
    mask = rr <= radius

    wells, records = [], []
    labels = ["swarming"] * n_pos_wells + ["planktonic"] * n_neg_wells
    for i, label in enumerate(labels):
        well_id = f"well_{i:03d}"
        wells.append(
            {
                "well_id": well_id,
                "source_id": "fake",
                "centroid_px": [centre, centre],
                "radius_px": radius,
                "label": label,
            }
        )
        for w in range(images_per_well):
            img = rng.normal(0.0, 1.0, (image_size, image_size))
            if label == "swarming":
                ring = np.exp(-((rr - 0.55 * radius) ** 2) / (2 * (0.06 * image_size) ** 2))
                img += 4.0 * ring
            inside = img[mask]
            out = np.zeros_like(img)
            out[mask] = (inside - inside.mean()) / inside.std()
            name = f"{well_id}_w{w:04d}.npy"
            np.save(images_dir / name, out.astype(np.float32))
            records.append(
                {
                    "well_id": well_id,
                    "label": label,
                    "window_start": w * 10,
                    "path": f"images/{name}",
                }
            )
    manifest = {"window": 10, "stride": 10, "wells": wells, "images": records}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out_dir


@pytest.fixture
def fake_dataset(tmp_path):
    return make_fake_dataset(tmp_path / "ds")
