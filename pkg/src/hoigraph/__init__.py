"""Contextual heterogeneous graph network for human-object interaction detection.

Given per-instance appearance features and bounding boxes, the model runs
iterative message passing over a two-type (subject/object) graph with
intra-class attention and interactiveness-weighted inter-class messages,
predicts pairwise interaction labels, trains with SGD, and reports role-mAP.
"""

from .autodiff import (DomainError, NonFiniteError, ParamStore, ShapeError,
                       Tensor, finite_difference_check)
from .config import TrainConfig, parse_config_file
from .evaluation import (EvalReport, HoiGroundTruth, HoiPrediction,
                         evaluate_map, ground_truth_from_scenes, iou,
                         predict_scenes, split_by_complexity)
from .model import (ForwardResult, baseline_forward, detection_scores,
                    forward, graph_param_shapes, init_params)
from .scene import Instance, LabeledScene, SceneInput
from .sceneio import (SceneFormatError, load_checkpoint, load_ground_truth,
                      load_predictions, load_scenes, save_checkpoint,
                      save_ground_truth, save_predictions, save_scenes)
from .spatial import BoundingBox, build_spatial_map, encode_spatial
from .synth import SynthConfig, generate_synthetic_scenes
from .training import learning_rate, scene_loss, train

__all__ = [
    "BoundingBox", "DomainError", "EvalReport", "ForwardResult",
    "HoiGroundTruth", "HoiPrediction", "Instance", "LabeledScene",
    "NonFiniteError", "ParamStore", "SceneFormatError", "SceneInput",
    "ShapeError", "SynthConfig", "Tensor", "TrainConfig", "baseline_forward",
    "build_spatial_map", "detection_scores", "encode_spatial", "evaluate_map",
    "finite_difference_check", "forward", "generate_synthetic_scenes",
    "graph_param_shapes", "ground_truth_from_scenes", "init_params", "iou",
    "learning_rate", "load_checkpoint", "load_ground_truth",
    "load_predictions", "load_scenes", "parse_config_file", "predict_scenes",
    "save_checkpoint", "save_ground_truth", "save_predictions", "save_scenes",
    "scene_loss", "split_by_complexity", "train",
]

__version__ = "0.1.0"
