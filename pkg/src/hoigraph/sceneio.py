"""File formats: scene JSON, prediction/ground-truth JSON, eval reports,
and the binary checkpoint container.

Checkpoints are a little-endian binary file: magic, version byte, a JSON
header (config echo, epoch, RNG state, tensor name/shape/offset table),
then the raw float64 parameter blobs. Save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .evaluation import EvalReport, HoiGroundTruth, HoiPrediction
from .model import graph_param_shapes, init_params
from .scene import Instance, LabeledScene, SceneInput
from .spatial import BoundingBox

MAGIC = b"HGCK"
VERSION = 1


class SceneFormatError(ValueError):
    """A scene file violates its documented invariants."""


def _parse_box(raw, where: str) -> BoundingBox:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 4):
        raise SceneFormatError(f"{where}: box must be [x1, y1, x2, y2], got {raw!r}")
    try:
        return BoundingBox(*[float(v) for v in raw])
    except ValueError as e:
        raise SceneFormatError(f"{where}: {e}") from e


def scene_from_dict(doc: dict) -> LabeledScene:
    """Parse one scene document, rejecting invariant violations with
    messages naming the field and instance index."""
    if "image_id" not in doc:
        raise SceneFormatError("missing field image_id")
    image_id = str(doc["image_id"])
    instances = doc.get("instances")
    if not isinstance(instances, list):
        raise SceneFormatError(f"scene {image_id}: instances must be a list")
    subjects: list[Instance] = []
    objects: list[Instance] = []
    feat_len = None
    for idx, inst in enumerate(instances):
        where = f"scene {image_id}: instances[{idx}]"
        kind = inst.get("kind")
        if kind not in ("subject", "object"):
            raise SceneFormatError(f"{where}.kind: expected subject/object, got {kind!r}")
        box = _parse_box(inst.get("box"), f"{where}.box")
        feat = inst.get("feature")
        if not isinstance(feat, list) or not feat:
            raise SceneFormatError(f"{where}.feature: expected a non-empty array")
        if feat_len is None:
            feat_len = len(feat)
        elif len(feat) != feat_len:
            raise SceneFormatError(
                f"{where}.feature: length {len(feat)} != {feat_len} of earlier instances")
        conf = float(inst.get("confidence", 1.0))
        if not (0.0 <= conf <= 1.0):
            raise SceneFormatError(f"{where}.confidence: {conf} outside [0, 1]")
        obj = Instance(kind, box, np.asarray(feat, dtype=np.float64), conf)
        (subjects if kind == "subject" else objects).append(obj)
    scene = SceneInput(image_id=image_id, subjects=subjects, objects=objects,
                       width=float(doc.get("width", 0)), height=float(doc.get("height", 0)))
    n, m = scene.n, scene.m
    labels_doc = doc.get("labels")
    n_classes = int(doc.get("n_classes", 0))
    if labels_doc is None:
        labels = np.zeros((n, m, max(n_classes, 1)))
    else:
        if n_classes <= 0:
            raise SceneFormatError(f"scene {image_id}: labels present but n_classes missing")
        labels = np.zeros((n, m, n_classes))
        for k, entry in enumerate(labels_doc):
            where = f"scene {image_id}: labels[{k}]"
            i, j = entry.get("subject"), entry.get("object")
            if not (isinstance(i, int) and 0 <= i < n):
                raise SceneFormatError(f"{where}.subject: index {i!r} out of range 0..{n - 1}")
            if not (isinstance(j, int) and 0 <= j < m):
                raise SceneFormatError(f"{where}.object: index {j!r} out of range 0..{m - 1}")
            for a in entry.get("classes", []):
                if not (isinstance(a, int) and 0 <= a < n_classes):
                    raise SceneFormatError(
                        f"{where}.classes: class {a!r} out of range 0..{n_classes - 1}")
                labels[i, j, a] = 1.0
    return LabeledScene(scene=scene, interaction_labels=labels)


def scene_to_dict(item: LabeledScene) -> dict:
    sc = item.scene
    doc = {
        "image_id": sc.image_id,
        "width": sc.width,
        "height": sc.height,
        "n_classes": int(item.interaction_labels.shape[2]),
        "instances": [
            {"kind": inst.kind, "box": list(inst.box.as_tuple()),
             "confidence": inst.confidence, "feature": inst.feature.tolist()}
            for inst in sc.subjects + sc.objects
        ],
        "labels": [],
    }
    for i in range(sc.n):
        for j in range(sc.m):
            classes = np.flatnonzero(item.interaction_labels[i, j]).tolist()
            if classes:
                doc["labels"].append(
                    {"subject": i, "object": j, "classes": [int(a) for a in classes]})
    return doc


def load_scenes(path) -> list[LabeledScene]:
    with open(path) as fh:
        docs = json.load(fh)
    if isinstance(docs, dict):
        docs = docs.get("scenes", [docs])
    return [scene_from_dict(d) for d in docs]


def save_scenes(scenes: list[LabeledScene], path) -> None:
    with open(path, "w") as fh:
        json.dump({"scenes": [scene_to_dict(s) for s in scenes]}, fh)


# ---------------------------------------------------------------------------
# predictions / ground truth / reports


def save_predictions(preds: list[HoiPrediction], path) -> None:
    with open(path, "w") as fh:
        json.dump([
            {"image_id": p.image_id, "human_box": list(p.human_box.as_tuple()),
             "object_box": list(p.object_box.as_tuple()), "action": p.action,
             "score": p.score}
            for p in preds], fh)


def load_predictions(path) -> list[HoiPrediction]:
    with open(path) as fh:
        docs = json.load(fh)
    return [HoiPrediction(str(d["image_id"]),
                          _parse_box(d["human_box"], "prediction.human_box"),
                          _parse_box(d["object_box"], "prediction.object_box"),
                          int(d["action"]), float(d["score"]))
            for d in docs]


def save_ground_truth(gts: list[HoiGroundTruth], path,
                      scene_sizes: dict[str, tuple[int, int]] | None = None,
                      known_object: dict[int, list[str]] | None = None) -> None:
    doc: dict = {"annotations": [
        {"image_id": g.image_id, "human_box": list(g.human_box.as_tuple()),
         "object_box": list(g.object_box.as_tuple()), "action": g.action}
        for g in gts]}
    if scene_sizes is not None:
        doc["images"] = {k: {"num_subjects": n, "num_objects": m}
                         for k, (n, m) in scene_sizes.items()}
    if known_object is not None:
        doc["known_object"] = {str(k): v for k, v in known_object.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_ground_truth(path):
    """Returns (annotations, scene_sizes or None, known_object or None)."""
    with open(path) as fh:
        doc = json.load(fh)
    anns = [HoiGroundTruth(str(d["image_id"]),
                           _parse_box(d["human_box"], "gt.human_box"),
                           _parse_box(d["object_box"], "gt.object_box"),
                           int(d["action"]))
            for d in doc["annotations"]]
    sizes = None
    if "images" in doc:
        sizes = {k: (int(v["num_subjects"]), int(v["num_objects"]))
                 for k, v in doc["images"].items()}
    known = None
    if "known_object" in doc:
        known = {int(k): set(v) for k, v in doc["known_object"].items()}
    return anns, sizes, known


def report_to_dict(rep: EvalReport) -> dict:
    return {
        "map": rep.map_,
        "iou_thresh": rep.iou_thresh,
        "per_class_ap": {str(k): v for k, v in rep.per_class_ap.items()},
        "n_predictions": rep.n_predictions,
        "n_ground_truth": rep.n_ground_truth,
        "subsets": {k: report_to_dict(v) for k, v in rep.sub_reports.items()},
    }


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, store: ad.ParamStore, cfg: TrainConfig,
                    epoch: int = 0, rng_state: dict | None = None) -> None:
    names = sorted(store.names())
    table = []
    offset = 0
    for name in names:
        shape = list(store[name].data.shape)
        size = int(np.prod(shape)) if shape else 1
        table.append({"name": name, "shape": shape, "offset": offset})
        offset += size * 8
    header = json.dumps({
        "config": cfg.to_dict(),
        "epoch": epoch,
        "rng_state": rng_state,
        "variant": cfg.variant,
        "tensors": table,
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for name in names:
            fh.write(np.ascontiguousarray(store[name].data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (store, cfg, epoch, rng_state); validates the shape table
    against the config."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        cfg = TrainConfig.from_dict(header["config"])
        expected = graph_param_shapes(cfg)
        store = init_params(cfg)
        for entry in header["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in expected:
                raise ValueError(f"{path}: unexpected parameter {name!r}")
            if shape != expected[name]:
                raise ValueError(
                    f"{path}: parameter {name!r} shape {shape} does not match "
                    f"config ({expected[name]})")
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(size * 8), dtype="<f8").reshape(shape)
            store[name].data[...] = data
    return store, cfg, header["epoch"], header.get("rng_state")
