import numpy as np
import pytest

from swarmdetect import preprocess as pp
from swarmdetect import simulator as sim
from swarmdetect.errors import (
    DegenerateImageError,
    InsufficientFramesError,
    InvalidWellError,
)
from swarmdetect.records import WellRecord


def make_well(radius_px=200.0, label="swarming"):
    return WellRecord(
        well_id="w0",
        source_id="t",
        centroid_px=(250.0, 250.0),
        radius_px=radius_px,
        label=label,
    )


class TestCropWell:
    def test_central_block_unchanged(self):
        rng = np.random.default_rng(0)
        frame = rng.normal(size=(2048, 2448)).astype(np.float32)
        out = pp.crop_well(frame, (1224, 1024), 500)
        assert (out == frame[1024 - 250 : 1024 + 250, 1224 - 250 : 1224 + 250]).all()

    def test_corner_centroid_zero_padded(self):
        frame = np.ones((300, 300))
        out = pp.crop_well(frame, (10, 10), 100)
        assert (out[:40, :] == 0).all() and (out[:, :40] == 0).all()
        assert (out[40:, 40:] == 1).all()

    def test_constant_frame(self):
        frame = np.full((600, 600), 3.5)
        out = pp.crop_well(frame, (300, 300), 500)
        assert (out == 3.5).all()

    def test_centroid_outside_bounds(self):
        frame = np.zeros((100, 100))
        with pytest.raises(InvalidWellError):
            pp.crop_well(frame, (150, 50), 50)


class TestAverageFrames:
    def test_identical_frames(self):
        frames = [np.full((8, 8), 2.0)] * 10
        assert (pp.average_frames(frames, 0, 10) == 2.0).all()

    def test_alternating_frames(self):
        frames = [np.zeros((4, 4)), np.ones((4, 4))] * 5
        assert (pp.average_frames(frames, 0, 10) == 0.5).all()

    def test_too_few_frames(self):
        with pytest.raises(InsufficientFramesError):
            pp.average_frames([np.zeros((4, 4))] * 5, 0, 10)

    def test_permutation_invariant_and_linear(self):
        rng = np.random.default_rng(1)
        frames = [rng.normal(size=(6, 6)) for _ in range(10)]
        avg = pp.average_frames(frames, 0, 10)
        shuffled = [frames[i] for i in rng.permutation(10)]
        np.testing.assert_allclose(pp.average_frames(shuffled, 0, 10), avg, atol=1e-12)
        scaled = [3.0 * f for f in frames]
        np.testing.assert_allclose(pp.average_frames(scaled, 0, 10), 3.0 * avg, atol=1e-12)

    def test_crop_average_commute(self):
        rng = np.random.default_rng(2)
        frames = [rng.normal(size=(60, 80)) for _ in range(10)]
        centroid = (37.0, 29.0)
        a = pp.crop_well(pp.average_frames(frames, 0, 10), centroid, 20)
        b = np.mean([pp.crop_well(f, centroid, 20) for f in frames], axis=0)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_integration_time_bookkeeping(self):
        t = pp.integration_time_s(10, 29.0)
        assert t == pytest.approx(0.3448, abs=1e-4)
        assert round(t, 2) == 0.34  # the advertised ~0.34 s exposure


class TestNormalizeAndMask:
    def test_in_mask_statistics(self):
        rng = np.random.default_rng(3)
        image = rng.normal(5.0, 2.0, (500, 500))
        well = make_well()
        out = pp.normalize_and_mask(image, well)
        inside = out.pixels[out.mask]
        assert abs(inside.mean()) < 1e-6
        assert abs(inside.var() - 1.0) < 1e-6

    def test_out_of_mask_exactly_zero(self):
        rng = np.random.default_rng(4)
        out = pp.normalize_and_mask(rng.normal(size=(500, 500)), make_well())
        assert (out.pixels[~out.mask] == 0.0).all()

    def test_constant_image_degenerate(self):
        with pytest.raises(DegenerateImageError):
            pp.normalize_and_mask(np.full((500, 500), 7.0), make_well())

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        well = make_well()
        once = pp.normalize_and_mask(rng.normal(size=(500, 500)), well)
        twice = pp.normalize_and_mask(once.pixels, well)
        np.testing.assert_allclose(twice.pixels, once.pixels, atol=1e-6)

    def test_affine_invariance(self):
        rng = np.random.default_rng(6)
        image = rng.normal(size=(500, 500))
        well = make_well()
        base = pp.normalize_and_mask(image, well)
        shifted = pp.normalize_and_mask(4.2 * image + 17.0, well)
        np.testing.assert_allclose(shifted.pixels, base.pixels, atol=1e-6)

    def test_label_carried_from_well(self):
        rng = np.random.default_rng(7)
        out = pp.normalize_and_mask(rng.normal(size=(500, 500)), make_well(label="planktonic"))
        assert out.label == "planktonic"


@pytest.fixture(scope="module")
def seq():
    cfg = sim.planktonic_config(seed=0, n_frames=30, n_agents=10)
    return sim.simulate_well(cfg)


class TestAugmentWindows:
    def test_counts(self, seq):
        assert len(pp.augment_windows(seq, 10, 10)) == 3
        assert len(pp.augment_windows(seq, 10, 1)) == 21

    def test_window_count_formula(self):
        assert pp.window_count(100, 10, 10) == 10
        assert pp.window_count(100, 10, 1) == 91
        assert pp.window_count(9, 10, 1) == 0
        for n, w, s in [(30, 10, 7), (57, 10, 3), (10, 10, 10)]:
            assert pp.window_count(n, w, s) == (n - w) // s + 1

    def test_window_start_tags(self, seq):
        images = pp.augment_windows(seq, 10, 10)
        assert [img.window_start for img in images] == [0, 10, 20]
        assert all(img.well_id == seq.well.well_id for img in images)

    def test_insufficient_frames_propagates(self, seq):
        short = sim.FrameSequence(frames=seq.frames[:5], fps=seq.fps, well=seq.well)
        with pytest.raises(InsufficientFramesError):
            pp.augment_windows(short, 10, 10)

    def test_images_satisfy_invariants(self, seq):
        for img in pp.augment_windows(seq, 10, 10):
            assert img.pixels.shape == (500, 500)
            assert (img.pixels[~img.mask] == 0.0).all()
            inside = img.pixels[img.mask]
            assert abs(inside.mean()) < 1e-6
            assert abs(inside.var() - 1.0) < 1e-6


class TestBuildDataset:
    def test_manifest_and_images(self, tmp_path):
        dirs = []
        for i, mode in enumerate(["swarm", "planktonic"]):
            cfg = sim.default_config(mode, seed=i, n_frames=20, n_agents=10)
            seq = sim.simulate_well(cfg, well_id=f"well_{i}")
            dirs.append(sim.save_well(seq, cfg, tmp_path / f"well_{i}"))
        manifest_path = pp.build_dataset(dirs, tmp_path / "ds", window=10, stride=10)
        manifest = pp.load_manifest(manifest_path)
        assert len(manifest["wells"]) == 2
        assert len(manifest["images"]) == 4  # 2 windows per 20-frame well
        labels = {w["well_id"]: w["label"] for w in manifest["wells"]}
        assert labels["well_0"] == "swarming" and labels["well_1"] == "planktonic"
        for rec in manifest["images"]:
            img = pp.load_image(tmp_path / "ds", rec)
            assert img.shape == (500, 500)
            assert img.dtype == np.float32

    def test_fingerprint_stable(self, tmp_path):
        cfg = sim.swarm_config(seed=0, n_frames=10, n_agents=5)
        seq = sim.simulate_well(cfg, well_id="w")
        d = sim.save_well(seq, cfg, tmp_path / "w")
        m1 = pp.build_dataset([d], tmp_path / "ds1")
        m2 = pp.build_dataset([d], tmp_path / "ds2")
        assert pp.manifest_fingerprint(m1) == pp.manifest_fingerprint(m2)
