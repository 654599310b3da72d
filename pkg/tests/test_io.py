"""Scene/prediction/ground-truth JSON formats and the binary checkpoint."""

import json

import numpy as np
import pytest

from hoigraph.config import TrainConfig
from hoigraph.evaluation import ground_truth_from_scenes
from hoigraph.model import forward, init_params
from hoigraph.sceneio import (SceneFormatError, load_checkpoint,
                              load_ground_truth, load_predictions,
                              load_scenes, save_checkpoint,
                              save_ground_truth, save_predictions,
                              save_scenes, scene_from_dict, scene_to_dict)
from hoigraph.synth import SynthConfig, generate_synthetic_scenes

SPEC = SynthConfig(n_classes=3, feature_len=8)


def scenes_fixture(count=4, seed=0):
    return generate_synthetic_scenes(count, seed, SPEC)


def valid_doc():
    return {
        "image_id": "img0",
        "width": 256, "height": 256,
        "n_classes": 2,
        "instances": [
            {"kind": "subject", "box": [0, 0, 10, 10], "confidence": 0.9,
             "feature": [1.0, 2.0]},
            {"kind": "object", "box": [5, 5, 20, 20], "confidence": 1.0,
             "feature": [3.0, 4.0]},
        ],
        "labels": [{"subject": 0, "object": 0, "classes": [1]}],
    }


# --- scene parsing ------------------------------------------------------------

def test_scene_round_trip(tmp_path):
    scenes = scenes_fixture()
    path = tmp_path / "scenes.json"
    save_scenes(scenes, path)
    back = load_scenes(path)
    assert len(back) == len(scenes)
    for a, b in zip(scenes, back):
        assert a.scene.image_id == b.scene.image_id
        assert np.array_equal(a.interaction_labels, b.interaction_labels)
        for ia, ib in zip(a.scene.subjects + a.scene.objects,
                          b.scene.subjects + b.scene.objects):
            assert np.array_equal(ia.feature, ib.feature)
            assert ia.box == ib.box
            assert ia.confidence == ib.confidence


def test_scene_from_dict_accepts_valid():
    item = scene_from_dict(valid_doc())
    assert item.scene.n == 1 and item.scene.m == 1
    assert item.interaction_labels[0, 0, 1] == 1.0
    assert item.interactiveness_labels[0, 0] == 1.0


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d.pop("image_id"), "image_id"),
    (lambda d: d.__setitem__("instances", "nope"), "instances must be a list"),
    (lambda d: d["instances"][0].__setitem__("kind", "camel"),
     "instances[0].kind"),
    (lambda d: d["instances"][1].__setitem__("box", [0, 0, 10]),
     "instances[1].box"),
    (lambda d: d["instances"][1].__setitem__("box", [10, 0, 5, 5]),
     "instances[1].box"),
    (lambda d: d["instances"][1].__setitem__("feature", [1.0, 2.0, 3.0]),
     "instances[1].feature"),
    (lambda d: d["instances"][0].__setitem__("feature", []),
     "instances[0].feature"),
    (lambda d: d["instances"][0].__setitem__("confidence", 1.5),
     "instances[0].confidence"),
    (lambda d: d["labels"][0].__setitem__("subject", 3),
     "labels[0].subject"),
    (lambda d: d["labels"][0].__setitem__("object", -1),
     "labels[0].object"),
    (lambda d: d["labels"][0].__setitem__("classes", [5]),
     "labels[0].classes"),
    (lambda d: d.pop("n_classes"), "n_classes"),
])
def test_scene_parser_rejections_name_field_and_index(mutate, needle):
    doc = valid_doc()
    mutate(doc)
    with pytest.raises(SceneFormatError, match=needle.replace("[", r"\[")):
        scene_from_dict(doc)


def test_scene_to_dict_emits_only_positive_labels():
    item = scenes_fixture(count=1)[0]
    doc = scene_to_dict(item)
    assert len(doc["labels"]) == int((item.interaction_labels.any(axis=2)).sum())


# --- predictions / ground truth -------------------------------------------------

def test_prediction_round_trip(tmp_path):
    scenes = scenes_fixture()
    cfg = TrainConfig(A=3, F=8, D=8, seed=1)
    store = init_params(cfg)
    from hoigraph.evaluation import predict_scenes
    preds = predict_scenes(scenes, store, cfg)
    path = tmp_path / "preds.json"
    save_predictions(preds, path)
    assert load_predictions(path) == preds


def test_ground_truth_round_trip_with_sizes_and_filter(tmp_path):
    scenes = scenes_fixture()
    gts = ground_truth_from_scenes(scenes)
    sizes = {s.scene.image_id: (s.scene.n, s.scene.m) for s in scenes}
    known = {0: ["a", "b"], 2: []}
    path = tmp_path / "gt.json"
    save_ground_truth(gts, path, scene_sizes=sizes, known_object=known)
    back, back_sizes, back_known = load_ground_truth(path)
    assert back == gts
    assert back_sizes == sizes
    assert back_known == {0: {"a", "b"}, 2: set()}


def test_ground_truth_optional_sections(tmp_path):
    gts = ground_truth_from_scenes(scenes_fixture())
    path = tmp_path / "gt.json"
    save_ground_truth(gts, path)
    back, sizes, known = load_ground_truth(path)
    assert back == gts and sizes is None and known is None


# --- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip_restores_tensors(tmp_path):
    cfg = TrainConfig(A=3, F=8, D=8, seed=7)
    store = init_params(cfg)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, store, cfg, epoch=13, rng_state={"k": 1})
    back, cfg2, epoch, rng_state = load_checkpoint(path)
    assert epoch == 13
    assert rng_state == {"k": 1}
    assert cfg2.to_dict() == cfg.to_dict()
    for name, p in store.items():
        assert np.array_equal(back[name].data, p.data)


def test_checkpoint_save_load_save_is_byte_identical(tmp_path):
    cfg = TrainConfig(A=3, F=8, D=8, seed=7)
    store = init_params(cfg)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, store, cfg, epoch=5)
    back, cfg2, epoch, _ = load_checkpoint(p1)
    save_checkpoint(p2, back, cfg2, epoch=epoch)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_round_trip_preserves_forward_bitwise(tmp_path):
    cfg = TrainConfig(A=3, F=8, D=8, seed=7)
    store = init_params(cfg)
    scene = scenes_fixture(count=1, seed=5)[0].scene
    before = forward(scene, store, cfg).y.data
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, store, cfg)
    back, cfg2, _, _ = load_checkpoint(path)
    after = forward(scene, back, cfg2).y.data
    assert np.array_equal(before, after)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOPE" + b"\0" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    cfg = TrainConfig(A=3, F=8, D=8, seed=7)
    store = init_params(cfg)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, store, cfg)
    # corrupt the header: lie about the config dimension
    raw = bytearray(path.read_bytes())
    import struct
    hlen = struct.unpack("<I", raw[5:9])[0]
    header = json.loads(raw[9:9 + hlen].decode())
    header["config"]["D"] = 16
    new = json.dumps(header, sort_keys=True).encode()
    patched = raw[:5] + struct.pack("<I", len(new)) + new + raw[9 + hlen:]
    path.write_bytes(patched)
    with pytest.raises(ValueError, match="shape"):
        load_checkpoint(path)


def test_checkpoint_header_echoes_variant(tmp_path):
    cfg = TrainConfig(A=3, F=8, D=8, use_intra=False, use_inter=False)
    store = init_params(cfg)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, store, cfg)
    raw = path.read_bytes()
    import struct
    hlen = struct.unpack("<I", raw[5:9])[0]
    header = json.loads(raw[9:9 + hlen].decode())
    assert header["variant"] == "baseline"
    assert header["config"]["lam"] == 6.0
    assert header["config"]["T"] == 2
    assert header["config"]["lr0"] == 0.001
