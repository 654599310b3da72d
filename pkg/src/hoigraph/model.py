"""The heterogeneous graph network: context vectors, intra/inter-class
attention messages, node updates and pairwise prediction.

All per-scene state is kept as small dense tensors: subject embeddings
(N, D), object embeddings (M, D), pair spatial features (N, M, D). Node
kinds get separate propagation parameters; the update map and joint
classifier are shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .scene import SceneInput
from .spatial import encode_spatial, init_spatial_params, spatial_param_shapes


@dataclass
class SceneGraph:
    """One image's fully connected heterogeneous graph, vectorized."""

    n: int
    m: int
    h0_sub: Tensor        # (N, D) initial subject embeddings
    h0_obj: Tensor        # (M, D)
    h_sub: Tensor         # current embeddings
    h_obj: Tensor
    s: Tensor             # (N, M, D) encoded pair spatial features
    conf_sub: np.ndarray  # (N,) detector confidences
    conf_obj: np.ndarray
    r_sub: Tensor | None = None   # (N, D) context vectors
    r_obj: Tensor | None = None


def graph_param_shapes(cfg: TrainConfig) -> dict[str, tuple]:
    """Name -> shape table for every learnable tensor of this config."""
    D, F, A = cfg.D, cfg.F, cfg.A
    shapes = dict(spatial_param_shapes(D))

    def lin(prefix, out_dim, in_dim):
        shapes[f"{prefix}.W"] = (out_dim, in_dim)
        shapes[f"{prefix}.b"] = (out_dim,)

    if cfg.homogeneous_mode == "off":
        for kind in ("subj", "obj"):
            lin(f"proj.{kind}", D, F)
            lin(f"fr.{kind}", D, D)
            lin(f"fintra.{kind}", D, D)
            lin(f"finter.{kind}", D, 2 * D)
        lin("fw", 1, D)
    else:
        lin("proj.shared", D, F)
        if cfg.homogeneous_mode == "intra":
            lin("fr.shared", D, D)
            lin("fintra.shared", D, D)
        else:
            lin("finter.shared", D, 2 * D)
            lin("fw", 1, D)
    lin("mu", D, D)
    lin("fcls", A, D)
    return shapes


def init_params(cfg: TrainConfig, seed: int | None = None) -> ad.ParamStore:
    """Seeded uniform(+-sqrt(1/fan_in)) initialization of all parameters."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    store = ad.ParamStore()
    init_spatial_params(store, cfg.D, rng)
    for name, shape in graph_param_shapes(cfg).items():
        if name in store:
            continue
        fan_in = shape[-1] if len(shape) == 2 else shape[0]
        store.add(name, ad.uniform_init(rng, shape, fan_in))
    return store


def _broadcast(t: Tensor, shape) -> Tensor:
    out = Tensor(np.broadcast_to(t.data, shape).copy(), (t,))

    def _bw(g):
        t._accumulate(ad._unbroadcast(g, t.data.shape))

    out._backward = _bw
    return out


def _pair_sum(hp: Tensor, ho: Tensor, s: Tensor) -> Tensor:
    """(N, M, D) grid of h_p + h_o + s via broadcasting."""
    n, d = hp.shape
    m = ho.shape[0]
    return ad.add(ad.add(ad.reshape(hp, (n, 1, d)), ad.reshape(ho, (1, m, d))), s)


def init_graph(scene: SceneInput, store: ad.ParamStore, cfg: TrainConfig) -> SceneGraph:
    """Project raw instance features into node embeddings and encode every
    pair's spatial map."""
    n, m, D = scene.n, scene.m, cfg.D
    feats_s = np.stack([i.feature for i in scene.subjects]) if n else np.zeros((0, cfg.F))
    feats_o = np.stack([i.feature for i in scene.objects]) if m else np.zeros((0, cfg.F))
    for arr, kind in ((feats_s, "subject"), (feats_o, "object")):
        if arr.size and arr.shape[1] != cfg.F:
            raise ad.ShapeError(
                f"{kind} feature length {arr.shape[1]} does not match F={cfg.F}"
            )
    if cfg.homogeneous_mode == "off":
        h0_sub = ad.linear_map(ad.tensor(feats_s), store["proj.subj.W"], store["proj.subj.b"])
        h0_obj = ad.linear_map(ad.tensor(feats_o), store["proj.obj.W"], store["proj.obj.b"])
    else:
        h0_sub = ad.linear_map(ad.tensor(feats_s), store["proj.shared.W"], store["proj.shared.b"])
        h0_obj = ad.linear_map(ad.tensor(feats_o), store["proj.shared.W"], store["proj.shared.b"])
    if n and m:
        s = ad.reshape(encode_spatial(scene.pair_maps(), store), (n, m, D))
    else:
        s = ad.tensor(np.zeros((n, m, D)))
    return SceneGraph(
        n=n, m=m,
        h0_sub=h0_sub, h0_obj=h0_obj,
        h_sub=h0_sub, h_obj=h0_obj,
        s=s,
        conf_sub=np.array([i.confidence for i in scene.subjects]),
        conf_obj=np.array([i.confidence for i in scene.objects]),
    )


def compute_context_vectors(g: SceneGraph, store: ad.ParamStore) -> None:
    """r = element-wise max over heterogeneous neighbors of
    f_r(h_p + h_o + s); the zero vector when there are none."""
    D = g.h_sub.shape[1] if g.n else g.h_obj.shape[1]
    ps = _pair_sum(g.h_sub, g.h_obj, g.s) if g.n and g.m else None
    if ps is not None:
        g.r_sub = ad.reduce_max(
            ad.linear_map(ps, store["fr.subj.W"], store["fr.subj.b"], "relu"), axis=1)
        g.r_obj = ad.reduce_max(
            ad.linear_map(ps, store["fr.obj.W"], store["fr.obj.b"], "relu"), axis=0)
    else:
        g.r_sub = ad.tensor(np.zeros((g.n, D)))
        g.r_obj = ad.tensor(np.zeros((g.m, D)))


def intra_attention(r: Tensor, use_attention: bool = True) -> Tensor | np.ndarray:
    """Row-stochastic attention over each node's homogeneous neighbors
    (self excluded). Rows are empty (all zero) for singleton classes.

    With attention disabled the weights are uniform over the neighborhood.
    """
    k = r.shape[0]
    off_diag = ~np.eye(k, dtype=bool)
    if not use_attention:
        alpha = np.zeros((k, k))
        if k > 1:
            alpha[off_diag] = 1.0 / (k - 1)
        return alpha
    if k == 0:
        return ad.tensor(np.zeros((0, 0)))
    eps = ad.cosine_rows(r)
    return ad.softmax(eps, axis=1, mask=off_diag)


def intra_message(h: Tensor, alpha, w_name: str, store: ad.ParamStore,
                  cfg: TrainConfig) -> Tensor:
    """Attention-weighted sum of transformed homogeneous neighbors."""
    msg = ad.matmul(ad._wrap(alpha),
                    ad.linear_map(h, store[f"{w_name}.W"], store[f"{w_name}.b"], "relu"))
    if cfg.intra_mean_divide and h.shape[0] > 1:
        msg = ad.mul(msg, 1.0 / (h.shape[0] - 1))
    return msg


def interactiveness_weights(g: SceneGraph, store: ad.ParamStore) -> Tensor:
    """Per-pair interaction probability w in (0,1): sigmoid FC over
    h_p + h_o + s."""
    ps = _pair_sum(g.h_sub, g.h_obj, g.s)
    w = ad.linear_map(ps, store["fw.W"], store["fw.b"], "sigmoid")
    return ad.reshape(w, (g.n, g.m))


def _inter_candidates(s: Tensor, h_other: Tensor, axis: int, w_name: str,
                      store: ad.ParamStore) -> Tensor:
    """relu(f(s (+) h_u)) for every heterogeneous neighbor u."""
    n, m, D = s.shape
    if axis == 1:   # messages into subjects, neighbors are objects
        hb = _broadcast(ad.reshape(h_other, (1, m, D)), (n, m, D))
    else:           # messages into objects, neighbors are subjects
        hb = _broadcast(ad.reshape(h_other, (n, 1, D)), (n, m, D))
    cat = ad.concat([s, hb], axis=-1)
    return ad.linear_map(cat, store[f"{w_name}.W"], store[f"{w_name}.b"], "relu")


def inter_message(g: SceneGraph, w: Tensor | None, store: ad.ParamStore,
                  cfg: TrainConfig) -> tuple[Tensor, Tensor]:
    """Interactiveness-weighted element-wise max over heterogeneous
    neighbors; softmax of w along the neighbor axis supplies the weights
    (uniform when the interactiveness weight is ablated)."""
    n, m, D = g.s.shape
    if w is not None:
        beta_sub = ad.softmax(w, axis=1)
        beta_obj = ad.softmax(w, axis=0)
    else:
        beta_sub = ad.tensor(np.full((n, m), 1.0 / m))
        beta_obj = ad.tensor(np.full((n, m), 1.0 / n))
    cand_sub = _inter_candidates(g.s, g.h_obj, 1, "finter.subj", store)
    cand_obj = _inter_candidates(g.s, g.h_sub, 0, "finter.obj", store)
    m_sub = ad.reduce_max(ad.mul(ad.reshape(beta_sub, (n, m, 1)), cand_sub), axis=1)
    m_obj = ad.reduce_max(ad.mul(ad.reshape(beta_obj, (n, m, 1)), cand_obj), axis=0)
    return m_sub, m_obj


def update_nodes(g: SceneGraph, m_intra_sub, m_intra_obj, m_inter_sub,
                 m_inter_obj, store: ad.ParamStore) -> None:
    """h' = relu(mu(h + M_intra + M_inter)) + h0 (residual to the initial
    embedding)."""
    def upd(h, mi, mx, h0):
        z = h
        if mi is not None:
            z = ad.add(z, mi)
        if mx is not None:
            z = ad.add(z, mx)
        return ad.add(ad.linear_map(z, store["mu.W"], store["mu.b"], "relu"), h0)

    g.h_sub = upd(g.h_sub, m_intra_sub, m_inter_sub, g.h0_sub)
    g.h_obj = upd(g.h_obj, m_intra_obj, m_inter_obj, g.h0_obj)


def classify_pairs(g: SceneGraph, store: ad.ParamStore) -> Tensor:
    """Joint classifier: y_ij = sigmoid(f_cls(h_p + h_o + s))."""
    return ad.linear_map(_pair_sum(g.h_sub, g.h_obj, g.s),
                         store["fcls.W"], store["fcls.b"], "sigmoid")


@dataclass
class ForwardResult:
    y: Tensor                  # (N, M, A) pairwise predictions
    w: Tensor | None           # (N, M) interactiveness weights (last round)
    graph: SceneGraph | None = None


def forward(scene: SceneInput, store: ad.ParamStore, cfg: TrainConfig) -> ForwardResult:
    """Full reasoning pass: T rounds of message passing then prediction.

    Scenes with no subjects or no objects yield an empty prediction grid.
    """
    if cfg.homogeneous_mode != "off":
        return _forward_homogeneous(scene, store, cfg)
    g = init_graph(scene, store, cfg)
    if g.n == 0 or g.m == 0:
        return ForwardResult(y=ad.tensor(np.zeros((g.n, g.m, cfg.A))), w=None, graph=g)
    w = None
    for _ in range(cfg.T):
        m_intra_sub = m_intra_obj = None
        if cfg.use_intra:
            compute_context_vectors(g, store)
            if cfg.use_intra_attention:
                alpha_sub = intra_attention(g.r_sub, True)
                alpha_obj = intra_attention(g.r_obj, True)
            else:
                alpha_sub = intra_attention(g.r_sub, False)
                alpha_obj = intra_attention(g.r_obj, False)
            m_intra_sub = intra_message(g.h_sub, alpha_sub, "fintra.subj", store, cfg)
            m_intra_obj = intra_message(g.h_obj, alpha_obj, "fintra.obj", store, cfg)
        if cfg.use_interactiveness_weight:
            w = interactiveness_weights(g, store)
        m_inter_sub = m_inter_obj = None
        if cfg.use_inter:
            m_inter_sub, m_inter_obj = inter_message(
                g, w if cfg.use_interactiveness_weight else None, store, cfg)
        update_nodes(g, m_intra_sub, m_intra_obj, m_inter_sub, m_inter_obj, store)
    y = classify_pairs(g, store)
    return ForwardResult(y=y, w=w, graph=g)


def baseline_forward(scene: SceneInput, store: ad.ParamStore, cfg: TrainConfig) -> Tensor:
    """The no-graph classifier: f_cls(h0_p + h0_o + s), no message passing."""
    g = init_graph(scene, store, cfg)
    if g.n == 0 or g.m == 0:
        return ad.tensor(np.zeros((g.n, g.m, cfg.A)))
    return classify_pairs(g, store)


def detection_scores(y: np.ndarray, conf_sub: np.ndarray, conf_obj: np.ndarray) -> np.ndarray:
    """HOI detection score per (pair, class): y * s_h * s_o."""
    return y * conf_sub[:, None, None] * conf_obj[None, :, None]


# ---------------------------------------------------------------------------
# homogeneous-graph comparison mode: one node kind, one shared message
# formula over every other node


def _forward_homogeneous(scene: SceneInput, store: ad.ParamStore,
                         cfg: TrainConfig) -> ForwardResult:
    n, m, D = scene.n, scene.m, cfg.D
    if n == 0 or m == 0:
        return ForwardResult(y=ad.tensor(np.zeros((n, m, cfg.A))), w=None)
    k = n + m
    feats = np.stack([i.feature for i in scene.subjects + scene.objects])
    h0 = ad.linear_map(ad.tensor(feats), store["proj.shared.W"], store["proj.shared.b"])
    s_all = ad.reshape(encode_spatial(scene.all_pair_maps(), store), (k, k, D))
    h = h0
    w_pairs = None
    off_diag = ~np.eye(k, dtype=bool)
    for _ in range(cfg.T):
        ps = ad.add(ad.add(ad.reshape(h, (k, 1, D)), ad.reshape(h, (1, k, D))), s_all)
        if cfg.homogeneous_mode == "intra":
            r = ad.reduce_max(
                ad.linear_map(ps, store["fr.shared.W"], store["fr.shared.b"], "relu"),
                axis=1)
            alpha = ad.softmax(ad.cosine_rows(r), axis=1, mask=off_diag)
            msg = ad.matmul(alpha, ad.linear_map(
                h, store["fintra.shared.W"], store["fintra.shared.b"], "relu"))
        else:
            w_all = ad.reshape(
                ad.linear_map(ps, store["fw.W"], store["fw.b"], "sigmoid"), (k, k))
            w_pairs = w_all[0:n, n:k]
            beta = ad.softmax(w_all, axis=1, mask=off_diag)
            hb = _broadcast(ad.reshape(h, (1, k, D)), (k, k, D))
            cand = ad.linear_map(ad.concat([s_all, hb], axis=-1),
                                 store["finter.shared.W"], store["finter.shared.b"],
                                 "relu")
            msg = ad.reduce_max(ad.mul(ad.reshape(beta, (k, k, 1)), cand), axis=1)
        h = ad.add(ad.linear_map(ad.add(h, msg), store["mu.W"], store["mu.b"], "relu"), h0)
    hp, ho = h[0:n], h[n:k]
    s_pairs = s_all[0:n, n:k]
    y = ad.linear_map(_pair_sum(hp, ho, s_pairs), store["fcls.W"], store["fcls.b"],
                      "sigmoid")
    return ForwardResult(y=y, w=w_pairs)
