import math

import numpy as np
import pytest

from pose_boost.errors import SynthError
from pose_boost.models import PoseSample
from pose_boost.skeleton import Edge, SkeletonGraph, shipped_graph
from pose_boost.synth import (
    AugmentParams,
    augment,
    dataset_meta,
    draw_pose,
    ensure_dataset,
    generate_dataset,
    generate_sample,
    generate_samples,
    make_heatmap_gt,
    normalize_pose,
    quantize,
    read_dataset,
    render,
    rig_for,
    sample_pose,
    write_dataset,
)

# --- helpers ---------------------------------------------------------------


def _sample(size: int = 32) -> PoseSample:
    image = np.zeros((size, size, 3))
    image[10, 10] = 1.0
    joints = np.array([[10.0, 10.0], [20.0, 10.0], [10.0, 25.0]])
    return PoseSample(
        id="000000",
        image=image,
        joints2d=joints,
        joints_hm=joints.copy(),
        depth=np.array([0.0, 0.25, -0.5]),
        visibility=np.ones(3, dtype=bool),
        tags=["facing_front"],
    )


def _pairwise(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)


# --- poses -----------------------------------------------------------------


def test_pose_sampling_is_deterministic():
    body = shipped_graph("body16")
    a, yaw_a = draw_pose(7, body)
    b, yaw_b = draw_pose(7, body)
    np.testing.assert_array_equal(a, b)
    assert yaw_a == yaw_b
    np.testing.assert_array_equal(sample_pose(7, body), a)
    assert not np.array_equal(sample_pose(8, body), a)


def test_frozen_rig_gives_rest_pose():
    body = shipped_graph("body16")
    pose, yaw = draw_pose(0, body, rig_for(body).frozen())
    assert yaw == 0.0
    np.testing.assert_allclose(pose[0], [0.0, 0.0, 0.0])
    np.testing.assert_allclose(pose[1], [0.0, -10.0, 0.0])
    np.testing.assert_allclose(pose[3], [0.0, -26.0, 0.0])
    # left shoulder, elbow and wrist hang from the neck
    np.testing.assert_allclose(pose[6], [7.0, -1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("name", ["body16", "hand21"])
def test_bone_lengths_are_preserved(name):
    graph = shipped_graph(name)
    rig = rig_for(graph)
    for seed in range(5):
        pose = sample_pose(seed, graph, rig)
        np.testing.assert_array_equal(pose[graph.root], 0.0)
        for j, parent in enumerate(rig.parents):
            if parent >= 0:
                assert abs(np.linalg.norm(pose[j] - pose[parent]) - rig.lengths[j]) <= 1e-9


def test_unknown_graph_gets_fanned_rig():
    graph = SkeletonGraph(("a", "b", "c"), (Edge(0, 1), Edge(0, 2)), 0, "custom")
    rig = rig_for(graph)
    assert rig.parents == (-1, 0, 0)
    assert rig.lengths == (0.0, 10.0, 10.0)


def test_rig_needs_physical_tree():
    graph = SkeletonGraph(("a", "b", "c"), (Edge(0, 1), Edge(1, 2, "symmetrical")), 0, "loose")
    with pytest.raises(SynthError):
        rig_for(graph)


def test_normalized_pose_fits_frame():
    pose, _ = draw_pose(3, shipped_graph("body16"))
    joints2d, depth = normalize_pose(pose, 64, 32.0, margin=0.1)
    assert depth[0] == 0.0
    assert joints2d.min() >= 0.1 * 63 - 1e-9
    assert joints2d.max() <= 0.9 * 63 + 1e-9
    with pytest.raises(SynthError):
        normalize_pose(pose, 64, 0.0)


# --- rendering -------------------------------------------------------------


def test_empty_pose_renders_background():
    img = render(np.zeros((0, 2)), [], 8)
    np.testing.assert_array_equal(img, np.full((8, 8, 3), 0.1))


def test_horizontal_bone_fills_its_row():
    img = render(np.array([[2.0, 5.0], [12.0, 5.0]]), [(0, 1)], 16)
    np.testing.assert_allclose(img[5, 4:11], np.tile([0.95, 0.35, 0.30], (7, 1)))
    np.testing.assert_allclose(img[9, 4:11], 0.1)


def test_rendering_is_byte_identical():
    pts = np.array([[3.0, 4.0], [20.5, 17.25], [9.0, 28.0]])
    a = quantize(render(pts, [(0, 1), (1, 2)], 32, depth=np.array([0.0, 1.0, -1.0])))
    b = quantize(render(pts, [(0, 1), (1, 2)], 32, depth=np.array([0.0, 1.0, -1.0])))
    assert a.dtype == np.uint8
    assert a.tobytes() == b.tobytes()


def test_unknown_background():
    with pytest.raises(SynthError):
        render(np.zeros((1, 2)), [], 8, background="plaid")


# --- heatmap targets -------------------------------------------------------


def test_heatmap_peak_and_neighbours():
    hm = make_heatmap_gt(np.array([[3.0, 3.0]]), 1.0, 8, 8)
    assert hm.shape == (8, 8, 1)
    assert hm[3, 3, 0] == 1.0
    for r, c in ((2, 3), (4, 3), (3, 2), (3, 4)):
        assert hm[r, c, 0] == pytest.approx(0.6065, abs=1e-4)


def test_heatmap_rounds_to_nearest_cell():
    hm = make_heatmap_gt(np.array([[3.4, 5.5]]), 1.0, 8, 8)
    assert np.unravel_index(np.argmax(hm[..., 0]), (8, 8)) == (6, 3)


def test_invisible_and_outside_joints_have_empty_maps():
    hm = make_heatmap_gt(np.array([[3.0, 3.0], [20.0, 2.0], [1.0, 1.0]]), 1.0, 8, 8, np.array([False, True, True]))
    assert not hm[..., 0].any()
    assert not hm[..., 1].any()
    assert hm[1, 1, 2] == 1.0


def test_heatmap_mass_matches_continuous_gaussian():
    hm = make_heatmap_gt(np.array([[16.0, 16.0]]), 1.0, 33, 33)
    assert hm.sum() == pytest.approx(2 * math.pi, rel=1e-6)
    with pytest.raises(ValueError):
        make_heatmap_gt(np.array([[1.0, 1.0]]), 0.0, 4, 4)


# --- augmentation ----------------------------------------------------------


def test_identity_augment_copies():
    sample = _sample()
    out = augment(sample, AugmentParams())
    np.testing.assert_array_equal(out.image, sample.image)
    np.testing.assert_array_equal(out.joints2d, sample.joints2d)
    assert out.image is not sample.image


def test_shift_moves_image_and_joints():
    sample = _sample()
    out = augment(sample, AugmentParams(shift=(5.0, 0.0)))
    np.testing.assert_allclose(out.joints2d, sample.joints2d + [5.0, 0.0])
    assert out.image[10, 15, 0] == pytest.approx(1.0)
    assert out.image[10, 10, 0] == pytest.approx(0.0)


def test_rotation_preserves_distances_and_scale_scales_depth():
    sample = _sample()
    rotated = augment(sample, AugmentParams(rotation=90.0))
    np.testing.assert_allclose(_pairwise(rotated.joints2d), _pairwise(sample.joints2d), atol=1e-9)
    scaled = augment(sample, AugmentParams(scale=0.5))
    np.testing.assert_allclose(scaled.depth, sample.depth * 0.5)
    np.testing.assert_allclose(_pairwise(scaled.joints2d), 0.5 * _pairwise(sample.joints2d), atol=1e-9)


def test_joints_leaving_frame_become_invisible():
    out = augment(_sample(), AugmentParams(shift=(15.0, 0.0)))
    assert out.visibility.tolist() == [True, False, True]


def test_augment_maps_heatmap_coordinates_with_stride():
    out = augment(_sample(), AugmentParams(shift=(4.0, 0.0)), stride=4)
    np.testing.assert_allclose(out.joints_hm[0], [(14.0 - 1.5) / 4, (10.0 - 1.5) / 4])


# --- datasets --------------------------------------------------------------


def test_samples_are_pure_functions_of_seed_split_index(tiny_config):
    config = tiny_config()
    skeleton = config.skeleton()
    rig = rig_for(skeleton)
    a = generate_sample(2, config, skeleton, rig, "train")
    b = generate_sample(2, config, skeleton, rig, "train")
    c = generate_sample(2, config, skeleton, rig, "test")
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.joints2d, b.joints2d)
    assert not np.array_equal(a.joints2d, c.joints2d)
    assert a.depth[skeleton.root] == 0.0
    assert a.tags[0] in ("facing_left", "facing_front", "facing_right")


def test_threaded_generation_matches_serial(tiny_config):
    serial = generate_samples(tiny_config(), "train")
    threaded = generate_samples(tiny_config(data={"workers": 3}), "train")
    assert [s.image.tobytes() for s in serial] == [s.image.tobytes() for s in threaded]


def test_unknown_split(tiny_config):
    with pytest.raises(SynthError):
        generate_samples(tiny_config(), "validation")


def test_dataset_round_trip(tmp_path, tiny_config):
    config = tiny_config()
    samples = generate_samples(config, "test")
    root = write_dataset(tmp_path / "ds", samples, dataset_meta(config, "test", len(samples)))
    assert (root / "samples" / "000000.ppm").exists()
    ds = read_dataset(root)
    assert len(ds) == 3
    assert ds.joints == 5
    for original, loaded in zip(samples, ds.samples):
        np.testing.assert_array_equal(loaded.image, original.image)
        np.testing.assert_array_equal(loaded.joints2d, original.joints2d)
        np.testing.assert_array_equal(loaded.depth, original.depth)
        assert loaded.tags == original.tags


def test_read_dataset_rejects_missing_meta_and_bad_count(tmp_path, tiny_config):
    with pytest.raises(SynthError):
        read_dataset(tmp_path)
    root = generate_dataset(tiny_config(), tmp_path / "ds", "train", count=2)
    (root / "annotations.jsonl").write_text(
        (root / "annotations.jsonl").read_text(encoding="utf-8").splitlines()[0] + "\n", encoding="utf-8"
    )
    with pytest.raises(SynthError):
        read_dataset(root)


def test_ensure_dataset_generates_once(tiny_config):
    config = tiny_config()
    first = ensure_dataset(config, "train")
    assert len(first) == 4
    stamp = (first.root / "meta.json").stat().st_mtime_ns
    again = ensure_dataset(config, "train")
    assert (again.root / "meta.json").stat().st_mtime_ns == stamp


def test_ensure_dataset_without_generation(tiny_config):
    with pytest.raises(SynthError):
        ensure_dataset(tiny_config(data={"generate_missing": False}), "test")


def test_ensure_dataset_regenerates_for_new_seed(tiny_config):
    first = ensure_dataset(tiny_config(), "train")
    reseeded = ensure_dataset(tiny_config(data={"seed": 5}), "train")
    assert first.meta["seed"] == 0
    assert reseeded.meta["seed"] == 5
    assert not np.array_equal(reseeded.samples[0].joints2d, first.samples[0].joints2d)
    with pytest.raises(SynthError):
        ensure_dataset(tiny_config(data={"generate_missing": False}), "train")
