"""Scene inputs: detected instances with features, boxes and labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spatial import BoundingBox, build_spatial_map


@dataclass
class Instance:
    """One detected entity: its box, detector confidence and raw feature."""

    kind: str                 # "subject" | "object"
    box: BoundingBox
    feature: np.ndarray       # length F
    confidence: float = 1.0

    def __post_init__(self):
        if self.kind not in ("subject", "object"):
            raise ValueError(f"instance kind must be subject/object, got {self.kind!r}")
        self.feature = np.asarray(self.feature, dtype=np.float64)
        if self.feature.ndim != 1:
            raise ValueError("instance feature must be a flat vector")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"detection confidence {self.confidence} outside [0, 1]")


@dataclass
class SceneInput:
    """All instances of one image, split by node kind."""

    image_id: str
    subjects: list[Instance]
    objects: list[Instance]
    width: float = 0.0
    height: float = 0.0
    _map_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def m(self) -> int:
        return len(self.objects)

    def feature_len(self) -> int:
        for inst in self.subjects + self.objects:
            return len(inst.feature)
        return 0

    def pair_maps(self) -> np.ndarray:
        """Spatial maps for all N*M pairs, row-major (i * M + j).

        Maps depend only on the boxes, so they are built once and cached
        (as uint8; expanded to float64 on use).
        """
        if self._map_cache is None:
            maps = np.empty((self.n * self.m, 2, 64, 64), dtype=np.uint8)
            for i, s in enumerate(self.subjects):
                for j, o in enumerate(self.objects):
                    maps[i * self.m + j] = build_spatial_map(s.box, o.box)
            self._map_cache = maps
        return self._map_cache.astype(np.float64)

    def all_pair_maps(self) -> np.ndarray:
        """Spatial maps between every ordered node pair (homogeneous-graph
        mode), nodes ordered subjects then objects, row-major (K*K maps)."""
        nodes = self.subjects + self.objects
        k = len(nodes)
        maps = np.empty((k * k, 2, 64, 64), dtype=np.float64)
        for a, na in enumerate(nodes):
            for b, nb in enumerate(nodes):
                maps[a * k + b] = build_spatial_map(na.box, nb.box)
        return maps


@dataclass
class LabeledScene:
    """A scene plus its pairwise multi-hot interaction labels.

    interaction_labels: (N, M, A) in {0,1}. The interactiveness label of a
    pair is 1 iff its interaction row has any active class.
    """

    scene: SceneInput
    interaction_labels: np.ndarray

    def __post_init__(self):
        self.interaction_labels = np.asarray(self.interaction_labels, dtype=np.float64)
        n, m = self.scene.n, self.scene.m
        if self.interaction_labels.shape[:2] != (n, m):
            raise ValueError(
                f"label grid {self.interaction_labels.shape} does not match "
                f"scene with N={n}, M={m}"
            )

    @property
    def interactiveness_labels(self) -> np.ndarray:
        return (self.interaction_labels.sum(axis=2) > 0).astype(np.float64)

    @property
    def is_simple(self) -> bool:
        return self.scene.n == 1 and self.scene.m == 1
