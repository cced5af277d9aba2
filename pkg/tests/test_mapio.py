# tests/test_mapio.py
import json
import math

import numpy as np
import pytest

from src.geometry.camera import intrinsics_from_fov
from src.geometry.sim3 import Sim3
from src.gaussians.primitives import GaussianSet
from src.mapio.bundle import (
    DenseMaps,
    read_bundle,
    read_ground_truth,
    read_nocs_binned,
    write_bundle,
    write_ground_truth,
)
from src.mapio.ply import SH_C0, color_to_dc, dc_to_color, export_gaussians_ply, import_gaussians_ply
from src.mapio.scene import SceneDescriptor, SceneInstance, read_scene, write_scene
from src.nocs.codec import decode_logits, encode_field
from src.utils.errors import BundleError, DomainError, ExportError, MissingFileError, ShapeMismatchError

from tests.helpers import random_gaussians


def _maps(rng, height=6, width=5, k=2, dim=4, classes=3) -> DenseMaps:
    return DenseMaps(
        depth=rng.uniform(1.0, 3.0, size=(height, width)).astype(np.float32),
        embeddings=rng.standard_normal((height, width, dim)).astype(np.float32),
        nocs=rng.uniform(0.0, 1.0, size=(height, width, 3)).astype(np.float32),
        gauss_params=rng.standard_normal((height, width, k, 14)).astype(np.float32),
        fov=(1.0, 0.8),
        vocab=rng.standard_normal((classes, dim)).astype(np.float32),
        vocab_names=["background", "box-01", "sphere-02"][:classes],
        provenance={"seed": 1},
    )


def test_bundle_round_trip_is_bit_exact(tmp_path, rng):
    maps = _maps(rng)
    write_bundle(maps, tmp_path)
    back = read_bundle(tmp_path)

    for name in ("depth", "embeddings", "nocs", "gauss_params", "vocab"):
        np.testing.assert_array_equal(getattr(back, name), getattr(maps, name))
    assert back.fov == maps.fov
    assert back.vocab_names == maps.vocab_names
    assert back.k == 2
    assert back.provenance == {"seed": 1}


def test_bundle_write_is_deterministic(tmp_path, rng):
    maps = _maps(rng)
    write_bundle(maps, tmp_path / "a")
    write_bundle(maps, tmp_path / "b")

    for name in ("meta.json", "depth.npy", "gaussians.npy"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_bundle_file_names_the_file(tmp_path, rng):
    write_bundle(_maps(rng), tmp_path)
    (tmp_path / "embeddings.npy").unlink()

    with pytest.raises(MissingFileError) as excinfo:
        read_bundle(tmp_path)
    assert "embeddings.npy" in str(excinfo.value)


def test_non_finite_depth_names_the_pixel(tmp_path, rng):
    write_bundle(_maps(rng), tmp_path)
    depth = np.load(tmp_path / "depth.npy")
    depth[2, 3] = np.nan
    np.save(tmp_path / "depth.npy", depth)

    with pytest.raises(BundleError, match=r"row=2, col=3"):
        read_bundle(tmp_path)


def test_vocab_dimension_mismatch_is_rejected(tmp_path, rng):
    write_bundle(_maps(rng), tmp_path)
    np.save(tmp_path / "vocab.npy", np.zeros((3, 7), dtype=np.float32))

    with pytest.raises(ShapeMismatchError):
        read_bundle(tmp_path)


def test_bundle_reads_binned_nocs(tmp_path, rng):
    maps = _maps(rng)
    write_bundle(maps, tmp_path)
    (tmp_path / "nocs.npy").unlink()
    bins, delta = encode_field(np.asarray(maps.nocs, dtype=np.float64), 16)
    logits = np.full(bins.shape + (16,), -5.0, dtype=np.float32)
    np.put_along_axis(logits, bins[..., None], 5.0, axis=-1)
    np.save(tmp_path / "nocs_bins.npy", logits)
    np.save(tmp_path / "nocs_delta.npy", delta.astype(np.float32))

    back = read_bundle(tmp_path)
    np.testing.assert_allclose(back.nocs, maps.nocs, atol=1e-6)

    binned = read_nocs_binned(tmp_path, back, bins=16)
    np.testing.assert_array_equal(binned.logits, logits)
    with pytest.raises(ShapeMismatchError, match="nocs.bins=8"):
        read_nocs_binned(tmp_path, back, bins=8)


def test_nocs_binned_without_bin_file_encodes_the_coordinates(tmp_path, rng):
    maps = _maps(rng)
    write_bundle(maps, tmp_path)
    binned = read_nocs_binned(tmp_path, maps, bins=32)

    assert binned.bins == 32
    np.testing.assert_allclose(decode_logits(binned.logits, binned.delta), maps.nocs, atol=1e-12)


def test_dense_maps_leave_caller_arrays_writable(rng):
    depth = rng.uniform(1.0, 3.0, size=(6, 5)).astype(np.float32)
    maps = _maps(rng)
    frozen = DenseMaps(
        depth=depth,
        embeddings=maps.embeddings,
        nocs=maps.nocs,
        gauss_params=maps.gauss_params,
        fov=maps.fov,
        vocab=maps.vocab,
        vocab_names=maps.vocab_names,
    )

    assert depth.flags.writeable
    assert not frozen.depth.flags.writeable
    with pytest.raises(ValueError):
        frozen.depth[0, 0] = 5.0
    depth[0, 0] = 2.5
    assert frozen.depth[0, 0] == 2.5


def test_canonical_inverse_bundle_converts_to_metric(rng):
    maps = _maps(rng)
    K = maps.intrinsics
    canonical = (K.f_w / (K.width * np.asarray(maps.depth, dtype=np.float64))).astype(np.float32)
    inverse = DenseMaps(
        depth=canonical,
        embeddings=maps.embeddings,
        nocs=maps.nocs,
        gauss_params=maps.gauss_params,
        fov=maps.fov,
        vocab=maps.vocab,
        vocab_names=maps.vocab_names,
        depth_kind="canonical_inverse",
    )
    np.testing.assert_allclose(inverse.metric_depth(), maps.depth, rtol=1e-6)


def test_background_index_missing_is_a_bundle_error(rng):
    maps = _maps(rng)
    assert maps.background_index() == 0
    with pytest.raises(BundleError):
        maps.background_index("sky")


def test_ground_truth_round_trip(tmp_path, oracle_output):
    write_ground_truth(oracle_output.ground_truth, tmp_path)
    back = read_ground_truth(tmp_path)

    np.testing.assert_array_equal(back.mask, oracle_output.ground_truth.mask)
    assert [i.instance_id for i in back.instances] == [i.instance_id for i in oracle_output.ground_truth.instances]
    for a, b in zip(back.instances, oracle_output.ground_truth.instances):
        assert a.sim3.allclose(b.sim3, atol=1e-12)
        assert a.shape == b.shape
    assert back.fov == pytest.approx(oracle_output.ground_truth.fov)


def test_ground_truth_without_fov_reads_back_none(tmp_path, oracle_output):
    gt = oracle_output.ground_truth
    write_ground_truth(type(gt)(mask=gt.mask, depth=gt.depth, instances=gt.instances), tmp_path)
    assert "fov" not in json.loads((tmp_path / "gt_poses.json").read_text())
    assert read_ground_truth(tmp_path).fov is None


def test_ground_truth_nocs_map_matches_oracle_surface(oracle_output):
    maps, gt = oracle_output.maps, oracle_output.ground_truth
    nocs = gt.nocs_map(maps.intrinsics)
    fg = gt.mask > 0

    np.testing.assert_allclose(nocs[fg], maps.nocs[fg], atol=1e-9)
    assert np.all(nocs[~fg] == 0.0)


def test_ply_round_trip_is_f32_exact(tmp_path, rng):
    g = random_gaussians(rng, 40, frame="canonical")
    path = tmp_path / "obj.ply"
    export_gaussians_ply(g, path)
    back = import_gaussians_ply(path)

    assert back.frame == "canonical"
    assert len(back) == 40
    np.testing.assert_array_equal(back.means, g.means.astype(np.float32).astype(np.float64))
    np.testing.assert_allclose(back.opacities, g.opacities, rtol=1e-6)
    np.testing.assert_allclose(back.colors, g.colors, atol=1e-6)


def test_ply_dc_convention():
    np.testing.assert_allclose(color_to_dc([0.5, 0.5, 0.5]), 0.0)
    assert dc_to_color(np.array([1.0]))[0] == pytest.approx(0.5 + SH_C0)


def test_ply_export_refuses_values_beyond_float32(tmp_path, rng):
    g = random_gaussians(rng, 3)
    means = np.array(g.means)
    means[1, 0] = 1e39
    with pytest.raises(ExportError, match="gaussian 1"):
        export_gaussians_ply(g.replace(means=means), tmp_path / "bad.ply")


def test_ply_import_of_garbage_is_a_bundle_error(tmp_path):
    path = tmp_path / "junk.ply"
    path.write_bytes(b"not a ply file at all")
    with pytest.raises(BundleError):
        import_gaussians_ply(path)


def test_scene_round_trip(tmp_path):
    K = intrinsics_from_fov(1.0, 1.0, 32, 32)
    inst = SceneInstance(
        instance_id=1,
        label_id=2,
        label_name="sphere-02",
        sim3=Sim3(scale=0.4, translation=np.array([0.1, 0.2, 2.0])),
        pixel_count=120,
        inlier_count=118,
        ply="objects/obj_001.ply",
    )
    write_scene(SceneDescriptor([inst], K, {"seed": 0}), tmp_path / "scene.json")
    back = read_scene(tmp_path)

    assert back.camera == K
    assert back.instances[0].sim3.allclose(inst.sim3)
    assert back.instances[0].inlier_count == 118
    assert json.loads((tmp_path / "scene.json").read_text())["format_version"] == 1


def test_scene_instance_rejects_more_inliers_than_pixels():
    with pytest.raises(DomainError):
        SceneInstance(1, 1, "x", Sim3(), pixel_count=3, inlier_count=4)


def test_read_scene_missing_file(tmp_path):
    with pytest.raises(MissingFileError, match="scene.json"):
        read_scene(tmp_path)
