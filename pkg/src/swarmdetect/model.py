"""Attention-gated convolutional swarming classifier.

A small module predicts a soft circular active region (centroid shift
and radius) from a downsampled view of the input; the resulting mask
multiplies the 500x500 long-exposure image to suppress the bright wall
ring before a compact densely-connected backbone scores the well. The
mask is a logistic of the signed distance to the predicted circle, so
it is differentiable in all three parameters.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import EmptyInputError, InputShapeError, SwarmDetectError
from .preprocess import CROP_SIZE, LongExposureImage
from .records import LABEL_NEGATIVE, LABEL_POSITIVE

MAX_SHIFT_PX = 50.0
MAX_RADIUS_PX = 250.0
DEFAULT_KAPPA = 0.1  # 1/px; transition band ~ +-20 px


@dataclass(frozen=True)
class AttentionParams:
    dx: float
    dy: float
    rho: float
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        if not (0 < self.rho <= MAX_RADIUS_PX):
            raise ValueError(f"rho must be in (0, {MAX_RADIUS_PX}], got {self.rho}")
        if abs(self.dx) > MAX_SHIFT_PX or abs(self.dy) > MAX_SHIFT_PX:
            raise ValueError(f"|dx|, |dy| must be <= {MAX_SHIFT_PX}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")


def soft_disk_mask(p: AttentionParams, size: int = CROP_SIZE) -> np.ndarray:
    """mask(q) = logistic(kappa * (rho - ||q - c||)), c = centre + (dx, dy)."""
    centre = size // 2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    d = np.hypot(xx - (centre + p.dx), yy - (centre + p.dy))
    z = p.kappa * (p.rho - d)
    return 1.0 / (1.0 + np.exp(-z))


def soft_disk_mask_grad(
    p: AttentionParams, size: int = CROP_SIZE
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic d(mask)/d(dx, dy, rho) at every pixel."""
    centre = size // 2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    ex = xx - (centre + p.dx)
    ey = yy - (centre + p.dy)
    d = np.hypot(ex, ey)
    m = 1.0 / (1.0 + np.exp(-p.kappa * (p.rho - d)))
    s = p.kappa * m * (1.0 - m)
    d_safe = np.where(d > 0, d, 1.0)
    # d(-kappa*d)/d(dx) = kappa * ex / d (and 0 at the singular point d=0)
    g_dx = np.where(d > 0, s * ex / d_safe, 0.0)
    g_dy = np.where(d > 0, s * ey / d_safe, 0.0)
    g_rho = s
    return g_dx, g_dy, g_rho


@dataclass
class ModelConfig:
    image_size: int = CROP_SIZE  # mask geometry stays in crop coordinates
    input_size: int = 96  # backbone resolution after downscaling
    growth_rate: int = 12
    block_layers: tuple[int, ...] = (2, 2, 2)
    init_channels: int = 16
    attention_enabled: bool = True
    kappa: float = DEFAULT_KAPPA

    def to_dict(self) -> dict:
        d = asdict(self)
        d["block_layers"] = list(self.block_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["block_layers"] = tuple(d["block_layers"])
        return cls(**d)


class _DenseLayer(nn.Module):
    def __init__(self, in_channels: int, growth: int):
        super().__init__()
        self.bn = nn.BatchNorm2d(in_channels)
        self.conv = nn.Conv2d(in_channels, growth, 3, padding=1, bias=False)

    def forward(self, x):
        out = self.conv(F.relu(self.bn(x)))
        return torch.cat([x, out], dim=1)


class _Transition(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.bn = nn.BatchNorm2d(in_channels)
        self.conv = nn.Conv2d(in_channels, out_channels, 1, bias=False)

    def forward(self, x):
        return F.avg_pool2d(self.conv(F.relu(self.bn(x))), 2)


class _Backbone(nn.Module):
    """Compact densely-connected feature extractor ending in one logit."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c = cfg.init_channels
        self.stem = nn.Conv2d(1, c, 7, stride=2, padding=3, bias=False)
        blocks = []
        for i, n_layers in enumerate(cfg.block_layers):
            for _ in range(n_layers):
                blocks.append(_DenseLayer(c, cfg.growth_rate))
                c += cfg.growth_rate
            if i < len(cfg.block_layers) - 1:
                out_c = c // 2
                blocks.append(_Transition(c, out_c))
                c = out_c
        self.blocks = nn.Sequential(*blocks)
        self.bn_final = nn.BatchNorm2d(c)
        self.fc = nn.Linear(c, 1)

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.stem(x)), 2)
        x = self.blocks(x)
        x = F.relu(self.bn_final(x))
        x = F.adaptive_avg_pool2d(x, 1).flatten(1)
        return self.fc(x).squeeze(1)


class _AttentionHead(nn.Module):
    """Shallow extractor -> 3 raw values for (dx, dy, rho).

    The final affine map is zero-initialized, so an untrained head emits
    (0, 0, half maximum radius).
    """

    def __init__(self, view_size: int = 50):
        super().__init__()
        self.view_size = view_size
        self.conv1 = nn.Conv2d(1, 8, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, stride=2, padding=1)
        self.fc = nn.Linear(16, 3)
        nn.init.zeros_(self.fc.weight)
        nn.init.zeros_(self.fc.bias)

    def forward(self, x):
        x = F.adaptive_avg_pool2d(x, self.view_size)
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        x = F.adaptive_avg_pool2d(x, 1).flatten(1)
        return self.fc(x)  # raw (B, 3)


def params_from_raw(raw: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Squash raw head outputs into the bounded parameter ranges."""
    dx = MAX_SHIFT_PX * torch.tanh(raw[:, 0])
    dy = MAX_SHIFT_PX * torch.tanh(raw[:, 1])
    rho = MAX_RADIUS_PX * torch.sigmoid(raw[:, 2])
    return dx, dy, rho


class SwarmClassifier(nn.Module):
    """Full model: optional input-level circular attention + backbone."""

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        self.backbone = _Backbone(self.config)
        if self.config.attention_enabled:
            self.attention = _AttentionHead()
        else:
            self.attention = None
        size = self.config.image_size
        centre = size // 2
        coords = torch.arange(size, dtype=torch.float32) - centre
        self.register_buffer("_grid_x", coords.view(1, 1, 1, size))
        self.register_buffer("_grid_y", coords.view(1, 1, size, 1))

    def mask_from_raw(self, raw: torch.Tensor) -> torch.Tensor:
        """(B, 3) raw head outputs -> (B, 1, S, S) soft disk masks."""
        dx, dy, rho = params_from_raw(raw)
        ex = self._grid_x - dx.view(-1, 1, 1, 1)
        ey = self._grid_y - dy.view(-1, 1, 1, 1)
        d = torch.sqrt(ex**2 + ey**2 + 1e-12)
        return torch.sigmoid(self.config.kappa * (rho.view(-1, 1, 1, 1) - d))

    def _check_input(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x.unsqueeze(1)
        size = self.config.image_size
        if x.dim() != 4 or x.shape[1] != 1 or x.shape[2] != size or x.shape[3] != size:
            raise InputShapeError(
                f"expected (B, 1, {size}, {size}) input, got {tuple(x.shape)}"
            )
        return x

    def forward_with_raw(self, x: torch.Tensor, raw: torch.Tensor) -> torch.Tensor:
        """Run the masked forward pass with externally supplied raw params."""
        x = self._check_input(x)
        x = x * self.mask_from_raw(raw)
        x = F.adaptive_avg_pool2d(x, self.config.input_size)
        return torch.sigmoid(self.backbone(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Swarming probability in (0, 1), one per sample."""
        x = self._check_input(x)
        if self.attention is not None:
            return self.forward_with_raw(x, self.attention(x))
        x = F.adaptive_avg_pool2d(x, self.config.input_size)
        return torch.sigmoid(self.backbone(x))

    def attention_params(self, x: torch.Tensor) -> list[AttentionParams]:
        """Predicted active-region parameters for each sample."""
        if self.attention is None:
            raise SwarmDetectError("attention is disabled in this model")
        x = self._check_input(x)
        with torch.no_grad():
            dx, dy, rho = params_from_raw(self.attention(x))
        return [
            AttentionParams(float(a), float(b), float(r), self.config.kappa)
            for a, b, r in zip(dx, dy, rho)
        ]


def predict_images(
    model: SwarmClassifier, images: list[LongExposureImage], batch_size: int = 16
) -> list[float]:
    """Per-image swarming probabilities in inference mode."""
    if not images:
        raise EmptyInputError("no images to score")
    model.eval()
    probs: list[float] = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            batch = torch.from_numpy(
                np.stack([img.pixels for img in images[i : i + batch_size]])
            ).float()
            probs.extend(model(batch).tolist())
    return probs


def predict_well(
    model: SwarmClassifier,
    images: list[LongExposureImage],
    threshold: float = 0.5,
) -> tuple[float, str]:
    """Mean per-image probability for one well; >= threshold is positive."""
    if not images:
        raise EmptyInputError("well has no images")
    well_ids = {img.well_id for img in images}
    if len(well_ids) != 1:
        raise SwarmDetectError(f"images from multiple wells: {sorted(well_ids)}")
    score = float(np.mean(predict_images(model, images)))
    label = LABEL_POSITIVE if score >= threshold else LABEL_NEGATIVE
    return score, label


def aggregate_well_score(probs: list[float]) -> float:
    """Per-well score = arithmetic mean of per-image probabilities."""
    if not probs:
        raise EmptyInputError("no probabilities to aggregate")
    return float(np.mean(probs))


# ---------------------------------------------------------------------------
# Weight container with embedded config + model card


def save_model(
    model: SwarmClassifier,
    path: Path,
    manifest_fingerprint: str = "",
    seed: int | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": model.config.to_dict(), "state_dict": model.state_dict()}
    torch.save(payload, path)
    config_hash = hashlib.sha256(
        json.dumps(model.config.to_dict(), sort_keys=True).encode()
    ).hexdigest()[:16]
    card = [
        f"config_hash: {config_hash}",
        f"dataset_manifest: {manifest_fingerprint or 'unknown'}",
        f"seed: {seed if seed is not None else 'unknown'}",
        f"attention_enabled: {model.config.attention_enabled}",
    ]
    path.with_suffix(".card.txt").write_text("\n".join(card) + "\n")


def load_model(path: Path) -> SwarmClassifier:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    model = SwarmClassifier(ModelConfig.from_dict(payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
