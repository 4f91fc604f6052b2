import numpy as np
import pytest

nomae = pytest.importorskip("nomae")


def test_voxelize_single_point():
    coords, counts, point_voxel = nomae.voxelize(np.zeros((1, 3), np.float32), 0.05)
    assert coords.tolist() == [[0, 0, 0]]
    assert counts.tolist() == [1]
    assert point_voxel.tolist() == [0]


def test_dilate_counts():
    one = np.zeros((1, 3), np.int32)
    assert nomae.dilate(one, 1).shape == (26, 3)
    assert nomae.dilate(one, 4).shape == (728, 3)


def test_hmg_ratio_and_mask_consistency():
    r = nomae.hmg_ratio_for_total(0.7, 4)
    assert nomae.expected_total_ratio(r, 4, 0) == pytest.approx(0.7, abs=1e-12)
    pts = nomae.synth_scene(seed=3, azimuth_rays=360, elevation_rays=16)
    scales = nomae.generate_mask(pts, total_ratio=0.7, strategy="hmg", seed=1)
    assert len(scales) == 4
    for s in range(3):
        visible = scales[s][0]
        coarse_masked = {tuple(c) for c in scales[s + 1][1].tolist()}
        parents = {tuple(c) for c in np.floor_divide(visible, 2).tolist()}
        assert not parents & coarse_masked


def test_targets_exclude_visible():
    pts = nomae.synth_scene(seed=4, azimuth_rays=360, elevation_rays=16)
    masks = nomae.generate_mask(pts, total_ratio=0.7, seed=2)
    targets = nomae.build_targets(pts, total_ratio=0.7, side=9, seed=2)
    for (visible, _), t in zip(masks, targets):
        vis = {tuple(c) for c in visible.tolist()}
        assert not vis & {tuple(c) for c in t["coords"].tolist()}
        assert 0.0 <= t["recovered_fraction"] <= 1.0


def test_points_round_trip(tmp_path):
    pts = nomae.synth_scene(seed=5, azimuth_rays=120, elevation_rays=8)
    path = tmp_path / "frame.bin"
    nomae.save_points(path, pts)
    assert path.stat().st_size == 16 * len(pts)
    np.testing.assert_array_equal(nomae.load_points(path), pts)


def test_errors_map_to_exceptions():
    with pytest.raises(nomae.NomaeError):
        nomae.voxelize(np.zeros((0, 3), np.float32), 0.05)
    with pytest.raises(ValueError):
        nomae.voxelize(np.zeros((4, 2), np.float32), 0.05)


def test_run_command_synth(tmp_path):
    code, log, err = nomae.run_command("synth", out=tmp_path, seed=1)
    assert code == 0, err
    assert (tmp_path / "scene_000.bin").exists()
    code, _, err = nomae.run_command("no-such-command", out=tmp_path)
    assert code == 2
