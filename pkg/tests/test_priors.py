import math

import numpy as np
import pytest

from tinyssd.errors import ConfigError, ShapeError
from tinyssd.network import HeadOutput
from tinyssd.priors import (
    DEFAULT_VARIANCES,
    Detection,
    PriorConfig,
    PriorSet,
    ScalePriors,
    decode_boxes,
    detect,
    format_detection_line,
    generate_priors,
    iou,
    iou_matrix,
    nms_per_class,
    tiny_ssd_prior_config,
)
from tinyssd.voceval import parse_detection_lines

from reference import encode_boxes, nms_reference, prior_count, random_corner_boxes


def test_prior_count_is_8030(prior_set):
    assert len(prior_set) == 8030
    assert prior_count((37, 18, 9, 4, 2, 1), (4, 6, 6, 6, 6, 4)) == 8030


def test_prior_layout_from_spec(spec):
    cfg = tiny_ssd_prior_config(spec)
    assert [s.feature_size for s in cfg.scales] == [37, 18, 9, 4, 2, 1]
    assert [s.priors_per_cell for s in cfg.scales] == [4, 6, 6, 6, 6, 4]
    assert cfg.total_priors == 8030


def test_prior_count_independent_of_box_sizes(spec):
    cfg = tiny_ssd_prior_config(spec)
    resized = PriorConfig(
        scales=tuple(
            ScalePriors(s.feature_size, s.priors_per_cell, s.min_size / 2, s.max_size / 2,
                        s.aspect_ratios)
            for s in cfg.scales
        ),
        input_size=cfg.input_size,
    )
    assert len(generate_priors(resized)) == 8030


def test_last_scale_first_prior_is_center_square(prior_set):
    # 1x1 scale, min 264: square of side 264/300 centered at (0.5, 0.5)
    box = prior_set.boxes[8026]
    np.testing.assert_allclose(box, [0.06, 0.06, 0.94, 0.94], atol=1e-12)
    # its geometric-mean companion
    side = math.sqrt(264 * 315) / 300
    np.testing.assert_allclose(
        prior_set.boxes[8027], [0.5 - side / 2, 0.5 - side / 2, 0.5 + side / 2, 0.5 + side / 2],
        atol=1e-12,
    )


def test_priors_clipped_and_well_formed(prior_set):
    b = prior_set.boxes
    assert b.min() >= 0.0 and b.max() <= 1.0
    assert (b[:, 0] <= b[:, 2]).all()
    assert (b[:, 1] <= b[:, 3]).all()


def test_prior_cell_centers():
    cfg = PriorConfig(
        scales=(ScalePriors(2, 4, 30, 60, (2.0,)),), input_size=300
    )
    boxes = generate_priors(cfg).boxes
    first = boxes[0]
    cx = (first[0] + first[2]) / 2
    cy = (first[1] + first[3]) / 2
    np.testing.assert_allclose([cx, cy], [0.25, 0.25], atol=1e-12)
    # row-major cells: second cell is (row 0, col 1)
    second = boxes[4]
    np.testing.assert_allclose(
        [(second[0] + second[2]) / 2, (second[1] + second[3]) / 2], [0.75, 0.25], atol=1e-12
    )


def test_scale_priors_ratio_consistency():
    with pytest.raises(ConfigError):
        ScalePriors(4, 5, 30, 60, (2.0,))
    with pytest.raises(ConfigError):
        ScalePriors(4, 4, 60, 30, (2.0,))


def test_decode_zero_offsets_returns_priors(prior_set):
    loc = np.zeros((len(prior_set), 4), dtype=np.float32)
    decoded = decode_boxes(loc, prior_set)
    np.testing.assert_allclose(decoded, prior_set.boxes, atol=1e-12)


def test_decode_doubles_extent():
    priors = PriorSet(boxes=np.array([[0.4, 0.4, 0.6, 0.6]]))
    v0, v1 = DEFAULT_VARIANCES
    loc = np.array([[0.0, 0.0, math.log(2) / v1, math.log(2) / v1]])
    out = decode_boxes(loc, priors, clip=False)
    np.testing.assert_allclose(out, [[0.3, 0.3, 0.7, 0.7]], atol=1e-12)


def test_decode_encode_round_trip(prior_set):
    rng = np.random.default_rng(0)
    idx = rng.integers(0, len(prior_set), 200)
    priors = PriorSet(boxes=prior_set.boxes[idx])
    loc = rng.normal(0, 1, (200, 4)).astype(np.float32)
    decoded = decode_boxes(loc, priors, clip=False)
    back = encode_boxes(decoded, priors.boxes)
    np.testing.assert_allclose(back, loc, atol=1e-5)


def test_decode_rejects_bad_rows(prior_set):
    loc = np.zeros((len(prior_set), 4))
    loc[17, 2] = np.inf
    with pytest.raises(ShapeError, match="row 17"):
        decode_boxes(loc, prior_set)
    with pytest.raises(ShapeError):
        decode_boxes(np.zeros((3, 4)), prior_set)


def test_iou_properties():
    rng = np.random.default_rng(1)
    boxes = random_corner_boxes(rng, 20)
    for b in boxes:
        assert iou(b, b) == pytest.approx(1.0)
    for a, b in zip(boxes[:10], boxes[10:]):
        assert iou(a, b) == pytest.approx(iou(b, a))
    assert iou((0, 0, 0.2, 0.2), (0.5, 0.5, 0.9, 0.9)) == 0.0
    mat = iou_matrix(boxes[:5], boxes[5:9])
    for i in range(5):
        for j in range(4):
            assert mat[i, j] == pytest.approx(iou(boxes[i], boxes[5 + j]))


def test_nms_single_box_kept():
    assert nms_per_class(np.array([0.7]), np.array([[0, 0, 1, 1.0]]), 0.45) == [0]


def test_nms_identical_boxes_suppressed():
    boxes = np.array([[0.1, 0.1, 0.5, 0.5], [0.1, 0.1, 0.5, 0.5]])
    kept = nms_per_class(np.array([0.9, 0.8]), boxes, 0.45)
    assert kept == [0]


def test_nms_tie_broken_by_index():
    boxes = np.array([[0.1, 0.1, 0.5, 0.5], [0.1, 0.1, 0.5, 0.5]])
    kept = nms_per_class(np.array([0.7, 0.7]), boxes, 0.45)
    assert kept == [0]


def test_nms_matches_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(1, 51))
        boxes = random_corner_boxes(rng, n)
        scores = rng.uniform(0, 1, n)
        thr = float(rng.uniform(0.2, 0.7))
        assert nms_per_class(scores, boxes, thr) == nms_reference(scores, boxes, thr)


def _single_image_head(loc, conf):
    return HeadOutput(loc=loc[None].astype(np.float32), conf=conf[None].astype(np.float32))


def test_detect_all_background_is_empty(prior_set):
    n = len(prior_set)
    conf = np.zeros((n, 21))
    conf[:, 0] = 20.0
    out = detect(_single_image_head(np.zeros((n, 4)), conf), prior_set, conf_threshold=0.01)
    assert out == []


def test_detect_single_winner(prior_set):
    n = len(prior_set)
    conf = np.zeros((n, 21))
    conf[:, 0] = 20.0
    conf[123, 0] = 0.0
    conf[123, 7] = 25.0
    out = detect(_single_image_head(np.zeros((n, 4)), conf), prior_set, conf_threshold=0.5)
    assert len(out) == 1
    det = out[0]
    assert det.class_id == 7
    assert det.score > 0.99
    np.testing.assert_allclose(det.box, prior_set.boxes[123], atol=1e-6)


def test_detect_caps_at_top_k(prior_set):
    n = len(prior_set)
    rng = np.random.default_rng(3)
    conf = rng.normal(0, 3, (n, 21))
    loc = rng.normal(0, 0.5, (n, 4))
    out = detect(_single_image_head(loc, conf), prior_set, conf_threshold=0.01, top_k=25)
    assert len(out) <= 25
    assert all(d.class_id != 0 for d in out)
    scores = [d.score for d in out]
    assert scores == sorted(scores, reverse=True)


def test_detect_skips_nonfinite_rows(prior_set):
    n = len(prior_set)
    conf = np.zeros((n, 21))
    conf[:, 0] = 20.0
    conf[5, 0] = 0.0
    conf[5, 3] = 25.0
    loc = np.zeros((n, 4))
    loc[5, 0] = np.nan
    out = detect(_single_image_head(loc, conf), prior_set, conf_threshold=0.5)
    assert out == []


def test_detect_requires_single_image(prior_set):
    n = len(prior_set)
    head = HeadOutput(loc=np.zeros((2, n, 4), np.float32), conf=np.zeros((2, n, 21), np.float32))
    with pytest.raises(ShapeError, match="single-image"):
        detect(head, prior_set)


def test_detection_line_round_trips():
    det = Detection(class_id=12, score=0.875, box=(0.1, 0.2, 0.3, 0.4))
    line = format_detection_line("img_007", det)
    rec = parse_detection_lines([line])[0]
    assert rec.image_id == "img_007"
    assert rec.class_name == det.class_name == "dog"
    assert rec.score == pytest.approx(det.score, abs=1e-6)
    np.testing.assert_allclose(rec.box, det.box, atol=1e-6)
