"""Agent-based generator of confined bacterial motion videos.

Two modes: "swarm" produces a coherent global swirl inside the circular
well, "planktonic" produces uncoordinated local motion. Both share the
wall-following behaviour that creates the bright peripheral ring in
long-exposure averages, so a classifier cannot cheat on the ring alone.

Update rule per agent and time step:
  heading += alignment_strength * (mean neighbour heading - heading)
           + edge_follow_strength * ramp * (wall tangent - heading)
           + N(0, noise_sigma)
  position += speed * dt * unit(heading)
Positions that would cross the wall are projected back onto it and the
heading is redirected along the wall tangent (slide, not bounce).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, UndefinedMetricError
from .records import (
    FrameSequence,
    WellRecord,
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
)

# FOV of 2448x2048 px spans ~422x353 um^2 -> ~0.1724 um per pixel
PIXEL_PITCH_UM = 0.1724

MODES = ("swarm", "planktonic")

# Fraction of |cos(angle)| expected for isotropic headings
_ISO_BASELINE = 2.0 / math.pi


@dataclass
class SimConfig:
    mode: str
    n_agents: int = 60
    well_radius_um: float = 37.0
    fps: float = 29.0
    pixel_pitch_um: float = PIXEL_PITCH_UM
    n_frames: int = 50
    speed_um_s: float = 20.0
    alignment_strength: float = 0.0
    noise_sigma: float = 0.0
    edge_follow_strength: float = 0.0
    swirl_strength: float = 0.0  # azimuthal steering away from the wall
    wall_noise_damp: float = 0.0  # heading-noise suppression inside the layer
    seed: int = 0
    # interaction / boundary geometry
    interaction_radius_um: float = 12.0
    boundary_layer_um: float = 6.0
    warmup_steps: int = 60
    # rendering
    frame_px: int = 500
    background_level: float = 200.0
    pixel_noise_sigma: float = 4.0
    blob_sigma_um: float = 2.0  # typical bacterial body scale
    blob_amplitude: float = 400.0
    edge_ring_boost: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(**d)


def swarm_config(**overrides) -> SimConfig:
    """Defaults calibrated once against the mode-separation check."""
    cfg = SimConfig(
        mode="swarm",
        alignment_strength=0.6,
        noise_sigma=0.08,
        edge_follow_strength=0.5,
        swirl_strength=0.3,
        wall_noise_damp=0.7,
        edge_ring_boost=1.5,
    )
    return _with_overrides(cfg, overrides)


def planktonic_config(**overrides) -> SimConfig:
    cfg = SimConfig(
        mode="planktonic",
        alignment_strength=0.0,
        noise_sigma=1.1,
        edge_follow_strength=0.8,
        wall_noise_damp=0.7,
        edge_ring_boost=2.5,
    )
    return _with_overrides(cfg, overrides)


def default_config(mode: str, **overrides) -> SimConfig:
    if mode == "swarm":
        return swarm_config(**overrides)
    if mode == "planktonic":
        return planktonic_config(**overrides)
    raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")


def _with_overrides(cfg: SimConfig, overrides: dict) -> SimConfig:
    for k, v in overrides.items():
        if not hasattr(cfg, k):
            raise ConfigurationError(f"unknown SimConfig field {k!r}")
        setattr(cfg, k, v)
    validate_config(cfg)
    return cfg


def validate_config(config: SimConfig) -> None:
    """Raise ConfigurationError naming the first offending field."""
    if config.mode not in MODES:
        raise ConfigurationError(f"mode: must be one of {MODES}, got {config.mode!r}")
    checks = [
        ("well_radius_um", config.well_radius_um > 0),
        ("fps", config.fps > 0),
        ("n_agents", config.n_agents >= 1),
        ("n_frames", config.n_frames >= 10),
        ("noise_sigma", config.noise_sigma >= 0),
        ("alignment_strength", config.alignment_strength >= 0),
        ("edge_follow_strength", config.edge_follow_strength >= 0),
        ("swirl_strength", config.swirl_strength >= 0),
        ("wall_noise_damp", 0 <= config.wall_noise_damp <= 1),
        ("pixel_pitch_um", config.pixel_pitch_um > 0),
        ("speed_um_s", config.speed_um_s >= 0),
        ("frame_px", config.frame_px >= 16),
        ("blob_sigma_um", config.blob_sigma_um > 0),
        ("pixel_noise_sigma", config.pixel_noise_sigma >= 0),
        ("edge_ring_boost", config.edge_ring_boost >= 0),
        ("warmup_steps", config.warmup_steps >= 0),
    ]
    for name, ok in checks:
        if not ok:
            raise ConfigurationError(f"{name}: invalid value {getattr(config, name)!r}")


@dataclass
class AgentState:
    """Positions in um relative to the well centre, headings in [-pi, pi)."""

    positions: np.ndarray  # (N, 2)
    headings: np.ndarray  # (N,)
    speeds: np.ndarray  # (N,)

    def copy(self) -> "AgentState":
        return AgentState(
            self.positions.copy(), self.headings.copy(), self.speeds.copy()
        )


def wrap_angle(theta: np.ndarray) -> np.ndarray:
    """Wrap angles to [-pi, pi)."""
    return np.mod(theta + np.pi, 2.0 * np.pi) - np.pi


def init_agents(config: SimConfig, rng: np.random.Generator) -> AgentState:
    """Uniform positions in the disk (1 um wall margin), uniform headings."""
    r_max = max(config.well_radius_um - 1.0, 0.1)
    r = r_max * np.sqrt(rng.uniform(size=config.n_agents))
    phi = rng.uniform(-np.pi, np.pi, size=config.n_agents)
    positions = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    headings = rng.uniform(-np.pi, np.pi, size=config.n_agents)
    speeds = np.full(config.n_agents, config.speed_um_s)
    return AgentState(positions, headings, speeds)


def step_agents(
    state: AgentState,
    config: SimConfig,
    dt: float,
    rng: np.random.Generator | None = None,
) -> AgentState:
    """Advance all agents by one time step; confinement is preserved."""
    pos = state.positions
    theta = state.headings
    n = len(theta)
    radius = config.well_radius_um

    d_theta = np.zeros(n)

    if config.alignment_strength > 0:
        diff = pos[:, None, :] - pos[None, :, :]
        within = (diff**2).sum(axis=2) <= config.interaction_radius_um**2
        # mean neighbour direction via vector average (includes self)
        sin_mean = within @ np.sin(theta)
        cos_mean = within @ np.cos(theta)
        target = np.arctan2(sin_mean, cos_mean)
        d_theta += config.alignment_strength * wrap_angle(target - theta)

    r = np.linalg.norm(pos, axis=1)
    if config.swirl_strength > 0:
        # interior circulation: steer toward the nearest tangent sense,
        # stronger at larger radii so centre agents stay free
        off = r > 0
        if off.any():
            phi = np.arctan2(pos[off, 1], pos[off, 0])
            ccw = wrap_angle(phi + np.pi / 2 - theta[off])
            cw = wrap_angle(phi - np.pi / 2 - theta[off])
            steer = np.where(np.abs(ccw) <= np.abs(cw), ccw, cw)
            weight = config.swirl_strength * np.clip(r[off] / radius, 0.0, 1.0)
            d_theta[off] += weight * steer

    if config.edge_follow_strength > 0:
        layer = config.boundary_layer_um
        ramp = np.clip((r - (radius - layer)) / layer, 0.0, 1.0)
        in_layer = ramp > 0
        if in_layer.any():
            phi = np.arctan2(pos[in_layer, 1], pos[in_layer, 0])
            # pick the tangent sense closest to the current heading
            ccw = wrap_angle(phi + np.pi / 2 - theta[in_layer])
            cw = wrap_angle(phi - np.pi / 2 - theta[in_layer])
            steer = np.where(np.abs(ccw) <= np.abs(cw), ccw, cw)
            d_theta[in_layer] += config.edge_follow_strength * ramp[in_layer] * steer

    if config.noise_sigma > 0:
        if rng is None:
            raise ValueError("rng required when noise_sigma > 0")
        noise = rng.normal(0.0, config.noise_sigma, size=n)
        if config.wall_noise_damp > 0:
            layer = config.boundary_layer_um
            ramp = np.clip((r - (radius - layer)) / layer, 0.0, 1.0)
            noise *= 1.0 - config.wall_noise_damp * ramp
        d_theta += noise

    new_theta = wrap_angle(theta + d_theta)
    step_vec = (state.speeds * dt)[:, None] * np.column_stack(
        [np.cos(new_theta), np.sin(new_theta)]
    )
    new_pos = pos + step_vec

    # resolve wall crossings: project onto the wall, redirect tangentially
    new_r = np.linalg.norm(new_pos, axis=1)
    crossed = new_r >= radius
    if crossed.any():
        scale = radius * (1.0 - 1e-9) / new_r[crossed]
        new_pos[crossed] *= scale[:, None]
        phi = np.arctan2(new_pos[crossed, 1], new_pos[crossed, 0])
        ccw = wrap_angle(phi + np.pi / 2 - new_theta[crossed])
        cw = wrap_angle(phi - np.pi / 2 - new_theta[crossed])
        new_theta[crossed] = wrap_angle(
            np.where(np.abs(ccw) <= np.abs(cw), phi + np.pi / 2, phi - np.pi / 2)
        )

    return AgentState(new_pos, new_theta, state.speeds.copy())


def vortex_order(state: AgentState) -> float:
    """Normalized azimuthal circulation: 1 for a perfect vortex, ~0 isotropic.

    Phi = (mean_i |u_i . t_i| - 2/pi) / (1 - 2/pi) with u_i the unit
    velocity and t_i the unit azimuthal direction at agent i. Agents at
    the exact centre have no azimuthal direction and are excluded.
    """
    if not np.any(state.speeds > 0):
        raise UndefinedMetricError("vortex_order undefined: all agent speeds are zero")
    moving = state.speeds > 0
    pos = state.positions[moving]
    theta = state.headings[moving]
    r = np.linalg.norm(pos, axis=1)
    off_centre = r > 0
    if not off_centre.any():
        raise UndefinedMetricError(
            "vortex_order undefined: every moving agent sits at the well centre"
        )
    pos, theta, r = pos[off_centre], theta[off_centre], r[off_centre]
    u = np.column_stack([np.cos(theta), np.sin(theta)])
    tangent = np.column_stack([-pos[:, 1], pos[:, 0]]) / r[:, None]
    proj = np.abs((u * tangent).sum(axis=1))
    return float((proj.mean() - _ISO_BASELINE) / (1.0 - _ISO_BASELINE))


def render_frame(
    state: AgentState,
    config: SimConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Splat one Gaussian blob per agent onto a noisy constant background."""
    size = config.frame_px
    frame = np.full((size, size), config.background_level, dtype=np.float64)

    sigma_px = config.blob_sigma_um / config.pixel_pitch_um
    half = int(math.ceil(4.0 * sigma_px))
    centre = size // 2
    radius = config.well_radius_um
    layer = config.boundary_layer_um

    for i in range(len(state.headings)):
        x_um, y_um = state.positions[i]
        amp = config.blob_amplitude
        if config.edge_ring_boost != 1.0:
            ramp = np.clip((math.hypot(x_um, y_um) - (radius - layer)) / layer, 0.0, 1.0)
            amp *= 1.0 + (config.edge_ring_boost - 1.0) * ramp
        px = centre + x_um / config.pixel_pitch_um
        py = centre + y_um / config.pixel_pitch_um
        j0 = max(int(px) - half, 0)
        j1 = min(int(px) + half + 1, size)
        i0 = max(int(py) - half, 0)
        i1 = min(int(py) + half + 1, size)
        if i0 >= i1 or j0 >= j1:
            continue
        jj = np.arange(j0, j1, dtype=np.float64)
        ii = np.arange(i0, i1, dtype=np.float64)
        gx = np.exp(-((jj - px) ** 2) / (2.0 * sigma_px**2))
        gy = np.exp(-((ii - py) ** 2) / (2.0 * sigma_px**2))
        frame[i0:i1, j0:j1] += amp * np.outer(gy, gx)

    if config.pixel_noise_sigma > 0:
        if rng is None:
            raise ValueError("rng required when pixel_noise_sigma > 0")
        frame += rng.normal(0.0, config.pixel_noise_sigma, size=frame.shape)

    return np.clip(frame, 0.0, None)


def simulate_states(config: SimConfig) -> list[AgentState]:
    """Run the agent dynamics and return one state per rendered frame.

    Deterministic given config.seed. Warmup steps run before the first
    recorded state so swirl order has time to develop.
    """
    validate_config(config)
    rng = np.random.default_rng(config.seed)
    state = init_agents(config, rng)
    dt = 1.0 / config.fps
    for _ in range(config.warmup_steps):
        state = step_agents(state, config, dt, rng)
    states = [state]
    for _ in range(config.n_frames - 1):
        state = step_agents(state, config, dt, rng)
        states.append(state)
    return states


def simulate_well(config: SimConfig, well_id: str = "well_0") -> FrameSequence:
    """Simulate and render one well; deterministic given config.seed."""
    validate_config(config)
    states = simulate_states(config)
    # rendering noise draws from a stream independent of the dynamics
    render_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    frames = [render_frame(s, config, render_rng) for s in states]
    centre = config.frame_px // 2
    well = WellRecord(
        well_id=well_id,
        source_id=f"sim_seed_{config.seed}",
        centroid_px=(float(centre), float(centre)),
        radius_px=config.well_radius_um / config.pixel_pitch_um,
        label=LABEL_POSITIVE if config.mode == "swarm" else LABEL_NEGATIVE,
    )
    return FrameSequence(
        frames=frames,
        fps=config.fps,
        pixel_pitch_um=config.pixel_pitch_um,
        well=well,
    )


# ---------------------------------------------------------------------------
# On-disk well directory format: frame_0000.tiff ... + metadata.json sidecar


def save_well(seq: FrameSequence, config: SimConfig, out_dir: Path) -> Path:
    """Write numbered 16-bit rasters plus a metadata sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        raster = np.clip(np.rint(frame), 0, 65535).astype(np.uint16)
        Image.fromarray(raster).save(out_dir / f"frame_{i:04d}.tiff")
    meta = {
        "config": config.to_dict(),
        "seed": config.seed,
        "fps": seq.fps,
        "pixel_pitch_um": seq.pixel_pitch_um,
        "well": seq.well.to_dict(),
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2))
    return out_dir


def load_well(well_dir: Path) -> FrameSequence:
    """Read a well directory written by save_well."""
    well_dir = Path(well_dir)
    meta = json.loads((well_dir / "metadata.json").read_text())
    frame_paths = sorted(well_dir.glob("frame_*.tiff"))
    frames = [np.asarray(Image.open(p), dtype=np.float64) for p in frame_paths]
    return FrameSequence(
        frames=frames,
        fps=meta["fps"],
        pixel_pitch_um=meta["pixel_pitch_um"],
        well=WellRecord.from_dict(meta["well"]),
    )
