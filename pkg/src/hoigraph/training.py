"""Losses, the SGD schedule and the epoch loop."""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .model import forward, init_params
from .scene import LabeledScene

log = logging.getLogger(__name__)

CLAMP = 1e-7


def _bce_mean(pred: Tensor, labels: np.ndarray) -> Tensor:
    p = ad.clip(pred, CLAMP, 1.0 - CLAMP)
    pos = ad.mul(ad.log(p), labels)
    neg = ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - labels)
    return ad.mul(ad.reduce_sum(ad.add(pos, neg)), -1.0 / pred.size)


def interactiveness_loss(w: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of the pair interactiveness weights.

    Returns 0 for an empty pair grid.
    """
    if w.size == 0:
        return ad.tensor(0.0)
    if w.shape != labels.shape:
        raise ad.ShapeError(f"w grid {w.shape} vs labels {labels.shape}")
    return _bce_mean(w, labels)


def interaction_loss(y: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over all (pair, class) entries; every pair
    is a sample and pairs without interactions are all-negative rows."""
    if y.size == 0:
        return ad.tensor(0.0)
    if y.shape != labels.shape:
        raise ad.ShapeError(f"prediction grid {y.shape} vs labels {labels.shape}")
    return _bce_mean(y, labels)


def total_loss(l_ho: Tensor, l_w: Tensor, lam: float) -> Tensor:
    """L = lambda * L_ho + L_w."""
    return ad.add(ad.mul(l_ho, lam), l_w)


def scene_loss(scene: LabeledScene, store: ad.ParamStore, cfg: TrainConfig) -> Tensor:
    """Forward one labeled scene and combine both losses."""
    res = forward(scene.scene, store, cfg)
    l_ho = interaction_loss(res.y, scene.interaction_labels)
    if res.w is not None:
        l_w = interactiveness_loss(res.w, scene.interactiveness_labels)
    else:
        l_w = ad.tensor(0.0)
    return total_loss(l_ho, l_w, cfg.lam)


def learning_rate(epoch: int, cfg: TrainConfig) -> float:
    """Step decay: lr0 * decay^floor(epoch / decay_every)."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return cfg.lr0 * cfg.decay ** (epoch // cfg.decay_every)


def train(
    dataset: list[LabeledScene],
    cfg: TrainConfig,
    store: ad.ParamStore | None = None,
    epochs: int | None = None,
    epoch_callback=None,
):
    """Minibatch SGD over the dataset; deterministic given cfg.seed.

    Returns (params, loss_history) with one mean-loss entry per epoch.
    A non-finite loss aborts immediately, naming the scene that produced it.
    """
    if not dataset:
        raise ValueError("train() requires a non-empty dataset")
    if store is None:
        store = init_params(cfg)
    epochs = cfg.epochs if epochs is None else epochs
    rng = np.random.default_rng(cfg.seed)
    velocity = {k: np.zeros_like(p.data) for k, p in store.items()} if cfg.momentum else None
    history: list[float] = []
    for epoch in range(epochs):
        lr = learning_rate(epoch, cfg)
        order = rng.permutation(len(dataset))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [dataset[i] for i in order[start:start + cfg.batch_size]]
            store.zero_grad()
            losses = []
            for item in batch:
                try:
                    losses.append(scene_loss(item, store, cfg))
                except ad.NonFiniteError as e:
                    raise ad.NonFiniteError(
                        f"non-finite loss on scene {item.scene.image_id}: {e}"
                    ) from e
            batch_loss = ad.mul(ad.reduce("sum", [ad.reshape(l, (1,)) for l in losses]),
                                1.0 / len(losses))
            batch_loss = ad.reshape(batch_loss, ())
            batch_loss.backward()
            if velocity is not None:
                for k, p in store.items():
                    velocity[k] = cfg.momentum * velocity[k] + p.grad
                    p.data -= lr * velocity[k]
            else:
                store.sgd_step(lr)
            epoch_loss += float(batch_loss.data)
            n_batches += 1
        history.append(epoch_loss / n_batches)
        log.info("epoch %d lr %.6f loss %.6f", epoch, lr, history[-1])
        if epoch_callback is not None:
            epoch_callback(epoch, store, history[-1])
    return store, history
