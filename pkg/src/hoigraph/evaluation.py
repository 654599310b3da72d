"""Role-mAP evaluation with IoU matching and the scene-complexity split."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import detection_scores, forward
from .scene import LabeledScene
from .spatial import BoundingBox

__all__ = [
    "HoiPrediction",
    "HoiGroundTruth",
    "EvalReport",
    "iou",
    "evaluate_map",
    "split_by_complexity",
    "ground_truth_from_scenes",
    "predict_scenes",
]


@dataclass(frozen=True)
class HoiPrediction:
    image_id: str
    human_box: BoundingBox
    object_box: BoundingBox
    action: int
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite prediction score on {self.image_id}")


@dataclass(frozen=True)
class HoiGroundTruth:
    image_id: str
    human_box: BoundingBox
    object_box: BoundingBox
    action: int


@dataclass
class EvalReport:
    per_class_ap: dict[int, float]
    map_: float
    n_predictions: int
    n_ground_truth: int
    iou_thresh: float
    sub_reports: dict[str, "EvalReport"] = field(default_factory=dict)

    def table(self) -> str:
        lines = [f"IoU threshold: {self.iou_thresh}"]
        lines.append(f"{'class':>8}  {'AP':>8}")
        for cls in sorted(self.per_class_ap):
            lines.append(f"{cls:>8}  {self.per_class_ap[cls]:8.4f}")
        lines.append(f"{'mAP':>8}  {self.map_:8.4f}")
        lines.append(f"predictions: {self.n_predictions}  "
                     f"ground truth: {self.n_ground_truth}")
        for name, sub in self.sub_reports.items():
            lines.append(f"--- subset {name} ---")
            lines.append(sub.table())
        return "\n".join(lines)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _class_ap(preds: list[HoiPrediction], gts: list[HoiGroundTruth],
              thresh: float) -> float:
    """AP of one action class: greedy matching in descending score order
    (ties by input order), all-points PR interpolation."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    gt_by_image: dict[str, list[HoiGroundTruth]] = {}
    for g in gts:
        gt_by_image.setdefault(g.image_id, []).append(g)
    used: set[int] = set()
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        p = preds[i]
        for g in gt_by_image.get(p.image_id, ()):
            if id(g) in used:
                continue
            if iou(p.human_box, g.human_box) > thresh and \
               iou(p.object_box, g.object_box) > thresh:
                used.add(id(g))
                tp[rank] = 1.0
                break
    if not gts:
        return 0.0
    cum_tp = np.cumsum(tp)
    recall = cum_tp / len(gts)
    precision = cum_tp / np.arange(1, len(order) + 1)
    # precision envelope, integrated over recall steps
    ap = 0.0
    prev_r = 0.0
    for k in range(len(order)):
        if tp[k]:
            ap += (recall[k] - prev_r) * precision[k:].max()
            prev_r = recall[k]
    return float(ap)


def evaluate_map(preds: list[HoiPrediction], gts: list[HoiGroundTruth],
                 iou_thresh: float = 0.5,
                 known_object: dict[int, set[str]] | None = None) -> EvalReport:
    """mAP over classes with ground truth; a prediction is a true positive
    iff both boxes exceed the IoU threshold against an unmatched same-class
    ground truth in the same image.

    known_object optionally restricts each class's candidate predictions to
    a set of image ids (Known-Object mode: only images known to contain
    the class's object category are scored).
    """
    if not gts:
        raise ValueError("evaluate_map: no ground truth to evaluate against")
    classes = sorted({g.action for g in gts})
    per_class: dict[int, float] = {}
    for cls in classes:
        cls_preds = [p for p in preds if p.action == cls]
        if known_object is not None and cls in known_object:
            cls_preds = [p for p in cls_preds if p.image_id in known_object[cls]]
        cls_gts = [g for g in gts if g.action == cls]
        per_class[cls] = _class_ap(cls_preds, cls_gts, iou_thresh)
    return EvalReport(
        per_class_ap=per_class,
        map_=float(np.mean(list(per_class.values()))),
        n_predictions=len(preds),
        n_ground_truth=len(gts),
        iou_thresh=iou_thresh,
    )


def split_by_complexity(scenes: list[LabeledScene]):
    """(complex, simple): simple scenes have exactly one subject and one
    object; everything else is complex."""
    simple = [s for s in scenes if s.is_simple]
    complex_ = [s for s in scenes if not s.is_simple]
    return complex_, simple


def ground_truth_from_scenes(scenes: list[LabeledScene]) -> list[HoiGroundTruth]:
    gts = []
    for item in scenes:
        sc = item.scene
        idx = np.argwhere(item.interaction_labels > 0)
        for i, j, a in idx:
            gts.append(HoiGroundTruth(
                image_id=sc.image_id,
                human_box=sc.subjects[i].box,
                object_box=sc.objects[j].box,
                action=int(a)))
    return gts


def predict_scenes(scenes, store, cfg, score_floor: float = 0.0) -> list[HoiPrediction]:
    """Run the model and emit one prediction per (pair, class) whose HOI
    detection score clears the floor (default: emit everything)."""
    preds = []
    for item in scenes:
        sc = item.scene if isinstance(item, LabeledScene) else item
        res = forward(sc, store, cfg)
        if res.y.size == 0:
            continue
        scores = detection_scores(
            res.y.data,
            np.array([i.confidence for i in sc.subjects]),
            np.array([i.confidence for i in sc.objects]))
        for i in range(sc.n):
            for j in range(sc.m):
                for a in range(cfg.A):
                    if scores[i, j, a] >= score_floor:
                        preds.append(HoiPrediction(
                            image_id=sc.image_id,
                            human_box=sc.subjects[i].box,
                            object_box=sc.objects[j].box,
                            action=a,
                            score=float(scores[i, j, a])))
    return preds
