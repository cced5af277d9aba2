# tests/test_depth.py
import numpy as np
import pytest

from src.depth.canonical import depth_loss, from_canonical_inverse, to_canonical_inverse
from src.depth.metrics import DepthEvalReport, depth_eval_mask, eval_depth
from src.utils.errors import DomainError, EmptyInputError, ShapeMismatchError


def _reference(pred, gt):
    ratios, logs, abs_rel, log10, sq = [], [], [], [], []
    for p, g in zip(pred.ravel(), gt.ravel()):
        ratios.append(max(p / g, g / p))
        logs.append(np.log(p) - np.log(g))
        abs_rel.append(abs(p - g) / g)
        log10.append(abs(np.log10(p) - np.log10(g)))
        sq.append((p - g) ** 2)
    n = len(ratios)
    mean_log = sum(logs) / n
    return {
        "delta1": 100.0 * sum(r < 1.25 for r in ratios) / n,
        "delta2": 100.0 * sum(r < 1.25**2 for r in ratios) / n,
        "delta3": 100.0 * sum(r < 1.25**3 for r in ratios) / n,
        "abs_rel": sum(abs_rel) / n,
        "log10": sum(log10) / n,
        "rmse": (sum(sq) / n) ** 0.5,
        "rmse_log": (sum(x * x for x in logs) / n) ** 0.5,
        "silog": (sum((x - mean_log) ** 2 for x in logs) / n) ** 0.5,
    }


def test_canonical_inverse_round_trip(camera, rng):
    depth = rng.uniform(0.5, 10.0, size=(camera.height, camera.width))
    back = from_canonical_inverse(to_canonical_inverse(depth, camera), camera)
    np.testing.assert_allclose(back, depth, rtol=1e-12)


def test_canonical_inverse_rejects_nonpositive_depth(camera):
    depth = np.ones((camera.height, camera.width))
    depth[3, 4] = 0.0
    with pytest.raises(DomainError, match=r"\(3, 4\)"):
        to_canonical_inverse(depth, camera)


def test_depth_loss_is_zero_on_identical_maps(rng):
    c = rng.uniform(0.1, 1.0, size=(8, 9))
    assert depth_loss(c, c) == 0.0


def test_depth_loss_constant_offset_has_no_gradient_term():
    c = np.full((4, 4), 0.5)
    assert depth_loss(c + 0.1, c, lambda_grad=10.0) == pytest.approx(0.1)


def test_depth_loss_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        depth_loss(np.ones((2, 2)), np.ones((2, 3)))


def test_eval_depth_perfect_prediction():
    gt = np.linspace(1.0, 5.0, 20).reshape(4, 5)
    report = eval_depth(gt, gt)

    assert report.delta1 == 100.0
    assert report.abs_rel == 0.0
    assert report.rmse == 0.0
    assert report.silog == 0.0


def test_eval_depth_matches_scalar_reference(rng):
    for _ in range(50):
        gt = rng.uniform(0.5, 5.0, size=(3, 4))
        pred = gt * rng.uniform(0.6, 1.6, size=gt.shape)
        report = eval_depth(pred, gt).to_dict()
        expected = _reference(pred, gt)
        for key, value in expected.items():
            assert report[key] == pytest.approx(value, abs=1e-12), key


def test_eval_depth_scale_error_shows_only_in_scale_dependent_metrics():
    gt = np.linspace(1.0, 3.0, 12).reshape(3, 4)
    report = eval_depth(2.0 * gt, gt)

    assert report.silog == pytest.approx(0.0, abs=1e-12)
    assert report.abs_rel == pytest.approx(1.0)
    assert report.delta1 == 0.0


def test_eval_depth_respects_mask():
    gt = np.ones((2, 2))
    pred = np.array([[1.0, 9.0], [1.0, 1.0]])
    mask = np.array([[True, False], [True, True]])

    assert eval_depth(pred, gt, mask).rmse == 0.0


def test_eval_depth_empty_mask():
    with pytest.raises(EmptyInputError):
        eval_depth(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), dtype=bool))


def test_depth_eval_mask_limits_scoring_to_foreground():
    gt = np.array([[1.0, 2.0], [0.0, np.inf]])
    foreground = np.array([[True, False], [True, True]])

    assert depth_eval_mask(gt).tolist() == [[True, True], [False, False]]
    assert depth_eval_mask(gt, foreground).tolist() == [[True, False], [False, False]]
    assert depth_eval_mask(gt, foreground, use_mask=False).tolist() == [[True, True], [False, False]]
    with pytest.raises(ShapeMismatchError):
        depth_eval_mask(gt, np.ones((3, 2), dtype=bool))


def test_depth_report_fields():
    assert set(DepthEvalReport.__dataclass_fields__) == {
        "delta1", "delta2", "delta3", "abs_rel", "log10", "rmse", "rmse_log", "silog",
    }
