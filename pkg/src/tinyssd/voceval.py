"""PASCAL-VOC-protocol detection evaluation: greedy score-ordered matching
at IoU >= 0.5 and 11-point interpolated average precision.

Per-class evaluation is independent; TINYSSD_THREADS caps the worker pool
(0 or unset = one worker per CPU). Results are merged in fixed class order,
so parallelism never changes the output.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arch import VOC_CLASSES
from .errors import FormatError
from .priors import iou

RECALL_POINTS = tuple(i / 10 for i in range(11))


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    class_name: str
    box: tuple[float, float, float, float]  # normalized corners
    difficult: bool = False


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    class_name: str
    score: float
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class EvalResult:
    """APs for every class with countable (non-difficult) ground truth.

    Classes without any countable ground truth are excluded from both
    class_aps and the mean rather than scored zero.
    """

    class_aps: dict[str, float]
    mean_ap: float
    pr_curves: dict[str, tuple[tuple[float, float], ...]]


def worker_count() -> int:
    raw = os.environ.get("TINYSSD_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def parse_detection_lines(lines) -> list[DetectionRecord]:
    """Parse emission-format lines: image_id class_name score x0 y0 x1 y1."""
    records = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 7:
            raise FormatError(f"detection line {lineno}: expected 7 fields, got {len(parts)}")
        image_id, class_name = parts[0], parts[1]
        if class_name not in VOC_CLASSES:
            raise FormatError(f"detection line {lineno}: unknown class name {class_name!r}")
        try:
            score = float(parts[2])
            box = tuple(float(v) for v in parts[3:7])
        except ValueError:
            raise FormatError(f"detection line {lineno}: non-numeric field") from None
        records.append(DetectionRecord(image_id, class_name, score, box))
    return records


def _required(node, tag, path):
    child = node.find(tag)
    if child is None or child.text is None:
        raise FormatError(f"{path}: missing required tag <{tag}>")
    return child.text.strip()


def parse_ground_truth(path, image_id: str | None = None) -> list[GroundTruthBox]:
    """Read a VOC-style annotation XML; boxes come back normalized by the
    image size under the 1-based inclusive pixel convention."""
    path = Path(path)
    if image_id is None:
        image_id = path.stem
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as e:
        raise FormatError(f"{path}: malformed XML ({e})") from None
    size = root.find("size")
    if size is None:
        raise FormatError(f"{path}: missing required tag <size>")
    width = int(_required(size, "width", path))
    height = int(_required(size, "height", path))
    if width < 1 or height < 1:
        raise FormatError(f"{path}: non-positive image size {width}x{height}")
    boxes = []
    for obj in root.iter("object"):
        name = _required(obj, "name", path)
        if name not in VOC_CLASSES:
            raise FormatError(f"{path}: unknown class name {name!r}")
        difficult_node = obj.find("difficult")
        difficult = difficult_node is not None and difficult_node.text.strip() == "1"
        bndbox = obj.find("bndbox")
        if bndbox is None:
            raise FormatError(f"{path}: missing required tag <bndbox>")
        xmin = float(_required(bndbox, "xmin", path))
        ymin = float(_required(bndbox, "ymin", path))
        xmax = float(_required(bndbox, "xmax", path))
        ymax = float(_required(bndbox, "ymax", path))
        box = (
            min(max((xmin - 1) / width, 0.0), 1.0),
            min(max((ymin - 1) / height, 0.0), 1.0),
            min(max(xmax / width, 0.0), 1.0),
            min(max(ymax / height, 0.0), 1.0),
        )
        if box[0] > box[2] or box[1] > box[3]:
            raise FormatError(f"{path}: inverted box {box} for object {name!r}")
        boxes.append(GroundTruthBox(image_id, name, box, difficult))
    return boxes


def load_annotation_dir(dirpath) -> list[GroundTruthBox]:
    """Parse every .xml file in a directory (sorted by name)."""
    files = sorted(Path(dirpath).glob("*.xml"))
    if not files:
        raise FormatError(f"{dirpath}: no .xml annotation files found")
    boxes = []
    for f in files:
        boxes.extend(parse_ground_truth(f))
    return boxes


def _interpolated_ap(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """11-point interpolation: mean over r of max precision at recall >= r."""
    ap = 0.0
    for r in RECALL_POINTS:
        mask = recalls >= r - 1e-12
        ap += float(precisions[mask].max()) if mask.any() else 0.0
    return ap / len(RECALL_POINTS)


def _eval_class(dets: list[DetectionRecord], gts: list[GroundTruthBox], iou_match: float):
    npos = sum(1 for g in gts if not g.difficult)
    by_image: dict[str, list] = {}
    for g in gts:
        by_image.setdefault(g.image_id, []).append([g.box, g.difficult, False])
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    tp, fp = [], []
    for i in order:
        det = dets[i]
        candidates = by_image.get(det.image_id, ())
        best_iou, best = 0.0, None
        difficult_hit = False
        for entry in candidates:
            overlap = iou(det.box, entry[0])
            if overlap < iou_match:
                continue
            if entry[1]:
                difficult_hit = True
            elif not entry[2] and overlap > best_iou:
                best_iou, best = overlap, entry
        if best is not None:
            best[2] = True
            tp.append(1)
            fp.append(0)
        elif difficult_hit:
            continue  # neither a positive nor a penalty
        else:
            tp.append(0)
            fp.append(1)
    if not tp:
        return 0.0, ()
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recalls = tp_cum / npos
    precisions = tp_cum / (tp_cum + fp_cum)
    ap = _interpolated_ap(recalls, precisions)
    points = tuple(zip(recalls.tolist(), precisions.tolist()))
    return ap, points


def evaluate(detections, truths: list[GroundTruthBox], iou_match: float = 0.5,
             protocol: str = "voc2007") -> EvalResult:
    """Score emission-format detection lines against ground truth.

    ``detections`` may be an iterable of lines or of DetectionRecord.
    """
    if protocol != "voc2007":
        raise FormatError(f"unsupported protocol {protocol!r}; only 'voc2007' is implemented")
    records = list(detections)
    if records and not isinstance(records[0], DetectionRecord):
        records = parse_detection_lines(records)

    dets_by_class: dict[str, list[DetectionRecord]] = {name: [] for name in VOC_CLASSES}
    for rec in records:
        dets_by_class[rec.class_name].append(rec)
    gts_by_class: dict[str, list[GroundTruthBox]] = {name: [] for name in VOC_CLASSES}
    for g in truths:
        if g.class_name not in gts_by_class:
            raise FormatError(f"unknown ground-truth class name {g.class_name!r}")
        gts_by_class[g.class_name].append(g)

    evaluated = [
        name for name in VOC_CLASSES
        if any(not g.difficult for g in gts_by_class[name])
    ]
    with ThreadPoolExecutor(max_workers=max(1, min(worker_count(), len(evaluated) or 1))) as pool:
        futures = {
            name: pool.submit(_eval_class, dets_by_class[name], gts_by_class[name], iou_match)
            for name in evaluated
        }
        results = {name: futures[name].result() for name in evaluated}

    class_aps = {name: results[name][0] for name in evaluated}
    pr_curves = {name: results[name][1] for name in evaluated}
    mean_ap = float(np.mean([class_aps[name] for name in evaluated])) if evaluated else 0.0
    return EvalResult(class_aps=class_aps, mean_ap=mean_ap, pr_curves=pr_curves)


def format_eval_report(result: EvalResult) -> str:
    width = max(len(name) for name in VOC_CLASSES)
    lines = []
    for name in VOC_CLASSES:
        if name in result.class_aps:
            lines.append(f"{name.ljust(width)}  AP {result.class_aps[name]:.4f}")
        else:
            lines.append(f"{name.ljust(width)}  (no ground truth)")
    lines.append("")
    lines.append(f"mAP {result.mean_ap:.4f} over {len(result.class_aps)} class(es)")
    return "\n".join(lines) + "\n"


def pr_curve_csv(result: EvalResult) -> str:
    """PR points for every evaluated class: class,recall,precision rows."""
    lines = ["class,recall,precision"]
    for name in VOC_CLASSES:
        for recall, precision in result.pr_curves.get(name, ()):
            lines.append(f"{name},{recall:.6f},{precision:.6f}")
    return "\n".join(lines) + "\n"
