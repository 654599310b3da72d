"""Pairwise spatial configuration maps and their CNN encoder.

For each (human, object) pair we rasterize both boxes into a binary
2-channel 64x64 map inside a shared square reference frame (the union
box of the pair, expanded to a square), then encode it with a small
conv stack into the D-vector that every pairwise formula consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

MAP_SIZE = 64

__all__ = [
    "BoundingBox",
    "build_spatial_map",
    "init_spatial_params",
    "encode_spatial",
    "spatial_param_shapes",
]


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates {vals}")
        if any(v < 0 for v in vals):
            raise ValueError(f"negative box coordinates {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {vals}: require x1<x2 and y1<y2")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)


def _rasterize(box: BoundingBox, fx: float, fy: float, side: float) -> np.ndarray:
    """Binary mask of cells whose centers lie inside the frame-relative box."""
    centers = (np.arange(MAP_SIZE) + 0.5) / MAP_SIZE
    cx = fx + centers * side
    cy = fy + centers * side
    in_x = (cx >= box.x1) & (cx <= box.x2)
    in_y = (cy >= box.y1) & (cy <= box.y2)
    mask = np.outer(in_y, in_x).astype(np.float64)
    if not mask.any():
        # box thinner than a cell: light the cell holding its center so the
        # channel is never empty
        bx = (box.x1 + box.x2) / 2.0
        by = (box.y1 + box.y2) / 2.0
        j = int(np.clip((bx - fx) / side * MAP_SIZE, 0, MAP_SIZE - 1))
        i = int(np.clip((by - fy) / side * MAP_SIZE, 0, MAP_SIZE - 1))
        mask[i, j] = 1.0
    return mask


def build_spatial_map(human: BoundingBox, obj: BoundingBox) -> np.ndarray:
    """2x64x64 binary map of the pair inside its square union frame.

    Channel 0 is the human footprint, channel 1 the object footprint.
    Translation and (up to rasterization) scale invariant by construction.
    """
    ux1 = min(human.x1, obj.x1)
    uy1 = min(human.y1, obj.y1)
    ux2 = max(human.x2, obj.x2)
    uy2 = max(human.y2, obj.y2)
    side = max(ux2 - ux1, uy2 - uy1)
    if side <= 0:
        raise ValueError("degenerate union frame for spatial map")
    fx = (ux1 + ux2) / 2.0 - side / 2.0
    fy = (uy1 + uy2) / 2.0 - side / 2.0
    return np.stack([_rasterize(human, fx, fy, side), _rasterize(obj, fx, fy, side)])


# encoder: conv(2->8,5x5,s4,p2) -> conv(8->16,5x5,s2,p2) ->
# conv(16->16,3x3,s1,p1) -> 2x2 max-pool -> flatten -> linear to D,
# ReLU between layers; widths sized so full training runs fit a single
# CPU core
_CONV_SPECS = [
    ("spatial.conv1", 8, 2, 5, 4, 2),
    ("spatial.conv2", 16, 8, 5, 2, 2),
    ("spatial.conv3", 16, 16, 3, 1, 1),
]
_FLAT = 16 * 4 * 4


def spatial_param_shapes(D: int) -> dict[str, tuple]:
    shapes = {}
    for name, cout, cin, k, _, _ in _CONV_SPECS:
        shapes[f"{name}.K"] = (cout, cin, k, k)
        shapes[f"{name}.b"] = (cout,)
    shapes["spatial.proj.W"] = (D, _FLAT)
    shapes["spatial.proj.b"] = (D,)
    return shapes


def init_spatial_params(store: ad.ParamStore, D: int, rng: np.random.Generator) -> None:
    for name, cout, cin, k, _, _ in _CONV_SPECS:
        store.add(f"{name}.K", ad.uniform_init(rng, (cout, cin, k, k), cin * k * k))
        store.add(f"{name}.b", ad.uniform_init(rng, (cout,), cin * k * k))
    store.add("spatial.proj.W", ad.uniform_init(rng, (D, _FLAT), _FLAT))
    store.add("spatial.proj.b", ad.uniform_init(rng, (D,), _FLAT))


def encode_spatial(maps, store: ad.ParamStore) -> ad.Tensor:
    """Encode a batch of spatial maps (B, 2, 64, 64) into (B, D) features."""
    x = maps if isinstance(maps, ad.Tensor) else ad.tensor(np.asarray(maps, dtype=np.float64))
    if x.ndim == 3:
        x = ad.reshape(x, (1,) + x.shape)
    if x.shape[1:] != (2, MAP_SIZE, MAP_SIZE):
        raise ad.ShapeError(
            f"spatial map batch must be (B, 2, {MAP_SIZE}, {MAP_SIZE}), got {x.shape}"
        )
    for name, _, _, _, stride, pad in _CONV_SPECS:
        x = ad.relu(ad.conv2d(x, store[f"{name}.K"], store[f"{name}.b"],
                              stride=stride, padding=pad))
    x = ad.maxpool2d(x, 2)
    x = ad.reshape(x, (x.shape[0], _FLAT))
    return ad.linear_map(x, store["spatial.proj.W"], store["spatial.proj.b"])
