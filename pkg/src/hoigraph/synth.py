"""Synthetic scene generator with planted interaction rules.

Each action class `a` owns a subject feature template u_a, an object
feature template v_a (rows of a random orthonormal basis) and a spatial
relation. A pair is labeled with class `a` iff the subject's planted
feature passes the dot-product threshold against u_a, the object's
against v_a, and the boxes satisfy the relation.

Observed features are the planted ones plus Gaussian noise, with a
deliberate ambiguity that only scene-level context can resolve. Every
scene is themed around one dominant class and is either ACTIVE or
INACTIVE:

* in an active scene the members really carry the planted templates;
  each member is independently "corrupted" with probability
  `corrupt_prob`, meaning its observed template is attenuated to
  `ambig_scale` of the planted magnitude (its labels stay positive);
* in an inactive scene the members carry no planted template at all
  (every label is negative) but they SHOW the same attenuated
  template as a corrupted member would — except one FAKE ANCHOR per
  side, which shows the full-amplitude template but sits where no
  opposite-side box satisfies the class relation.

A pair whose two endpoints both look attenuated is therefore
undecidable from the pair alone - the same appearance and spatial
layout occurs with positive labels (corrupted members, active scene)
and negative labels (inactive scene). The disambiguating evidence is
elsewhere in the scene, and it is deliberately not the mere presence
of a full-strength template: both scene kinds contain exactly one per
side. What separates them is whether that full-strength instance is
CORROBORATED - whether its own pairs satisfy the class relation. A
real anchor's do, a fake anchor's never do. An unweighted neighbor
sum transmits "a full-amplitude template is present" but severs each
feature from that instance's pair geometry, so it cannot tell the two
apart; the pair-encoded context vectors behind the intra attention
and the relation-supervised interactiveness weights keep feature and
geometry associated, which is precisely the evidence the ambiguous
pairs need. The headroom automatically concentrates in multi-instance
scenes (a 1-subject/1-object scene is decidable from the pair alone:
full amplitude plus the relation settles it).

With noise = 0 the generator emits planted features verbatim (every
scene active, no corruption), so labels are exactly recoverable by the
threshold rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Instance, LabeledScene, SceneInput
from .spatial import BoundingBox

RELATIONS = ("left", "right", "above", "overlap")
_MARGIN = 5.0


@dataclass
class SynthConfig:
    n_classes: int = 4          # A
    feature_len: int = 16       # F; needs room for 2*A orthonormal templates
    noise: float = 0.1          # sigma of the additive feature noise
    max_subjects: int = 4
    max_objects: int = 4
    canvas: float = 256.0
    amp: float = 6.0            # planted template magnitude
    threshold: float = 0.5      # dot-product label threshold (fraction of amp)
    active_prob: float = 0.6    # scene members really carry their templates
    distractor_prob: float = 0.2
    corrupt_prob: float = 0.75  # active-scene member observed attenuated
    ambig_scale: float = 0.35   # attenuation factor shared by both scene kinds
    distractor_scale: float = 1.0  # distractor feature norm as a multiple of amp
    single_prob: float = 0.35   # chance a side has exactly one instance
    relation_place_prob: float = 0.8
    confidence: float = 1.0     # boxes are exact, so detector confidence is too
    template_seed: int = 1234   # templates shared across train/test splits

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("generator needs at least 2 action classes")
        if self.feature_len < 4:
            raise ValueError("feature_len must be at least 4")
        if self.feature_len < 2 * self.n_classes:
            raise ValueError(
                f"feature_len {self.feature_len} too small for "
                f"{2 * self.n_classes} orthonormal templates"
            )
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


def class_templates(spec: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """(subject templates u, object templates v), each (A, F), orthonormal
    rows drawn from the template seed only.

    The object templates are the subject templates cyclically shifted by one
    class: v[c] = u[(c+1) % A]. A raw feature therefore names a different
    class depending on the node's kind, so class identity is only decodable
    jointly with the role — models that collapse node kinds cannot separate
    the two readings."""
    rng = np.random.default_rng(spec.template_seed)
    q, _ = np.linalg.qr(rng.normal(size=(spec.feature_len, spec.feature_len)))
    u = q[: spec.n_classes].copy()
    v = np.roll(u, -1, axis=0)
    return u, v


def relation_of_class(a: int) -> str:
    return RELATIONS[a % len(RELATIONS)]


def relation_holds(rel: str, sbox: BoundingBox, obox: BoundingBox) -> bool:
    scx = (sbox.x1 + sbox.x2) / 2
    scy = (sbox.y1 + sbox.y2) / 2
    ocx = (obox.x1 + obox.x2) / 2
    ocy = (obox.y1 + obox.y2) / 2
    if rel == "left":
        return ocx < scx - _MARGIN
    if rel == "right":
        return ocx > scx + _MARGIN
    if rel == "above":
        return ocy < scy - _MARGIN
    if rel == "overlap":
        ix = min(sbox.x2, obox.x2) - max(sbox.x1, obox.x1)
        iy = min(sbox.y2, obox.y2) - max(sbox.y1, obox.y1)
        return ix > 0 and iy > 0
    raise ValueError(f"unknown relation {rel!r}")


def _random_box(rng: np.random.Generator, canvas: float,
                lo: float = 30.0, hi: float = 90.0) -> BoundingBox:
    w = rng.uniform(lo, hi)
    h = rng.uniform(lo, hi)
    x1 = rng.uniform(0, canvas - w)
    y1 = rng.uniform(0, canvas - h)
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def _uniform_in(rng, lo: float, hi: float) -> float | None:
    return float(rng.uniform(lo, hi)) if hi > lo else None


def _place_for_relation(rng: np.random.Generator, rel: str, sbox: BoundingBox,
                        canvas: float) -> BoundingBox | None:
    """A box satisfying `rel` w.r.t. sbox, or None if infeasible."""
    w = rng.uniform(30.0, 70.0)
    h = rng.uniform(30.0, 70.0)
    scx = (sbox.x1 + sbox.x2) / 2
    scy = (sbox.y1 + sbox.y2) / 2
    cx = cy = None
    if rel == "left":
        cx = _uniform_in(rng, w / 2, min(scx - _MARGIN - 1, canvas - w / 2))
        cy = _uniform_in(rng, h / 2, canvas - h / 2)
    elif rel == "right":
        cx = _uniform_in(rng, max(scx + _MARGIN + 1, w / 2), canvas - w / 2)
        cy = _uniform_in(rng, h / 2, canvas - h / 2)
    elif rel == "above":
        cy = _uniform_in(rng, h / 2, min(scy - _MARGIN - 1, canvas - h / 2))
        cx = _uniform_in(rng, w / 2, canvas - w / 2)
    else:  # overlap
        cx = float(np.clip(scx + rng.uniform(-10, 10), w / 2, canvas - w / 2))
        cy = float(np.clip(scy + rng.uniform(-10, 10), h / 2, canvas - h / 2))
    if cx is None or cy is None:
        return None
    box = BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
    return box if relation_holds(rel, sbox, box) else None


def _place_violating(rng: np.random.Generator, rel: str,
                     others: list[BoundingBox], canvas: float,
                     lo: float, hi: float, as_subject: bool) -> BoundingBox:
    """A box for which `rel` FAILS against every box in `others`. The box
    plays the subject role of the relation when as_subject, else the object
    role. Directional relations are solved by clamping the constrained
    center coordinate; overlap by rejection (random boxes rarely overlap)."""
    if rel == "overlap":
        box = _random_box(rng, canvas, lo, hi)
        for attempt in range(120):
            ok = not any(relation_holds(rel, box, b) if as_subject
                         else relation_holds(rel, b, box) for b in others)
            if ok:
                break
            # shrink once clear of the shared size range: a 30px box slips
            # between neighbors a full-sized one cannot avoid
            box = (_random_box(rng, canvas, lo, hi) if attempt < 20
                   else _random_box(rng, canvas, 30.0, 30.0))
        return box
    w = rng.uniform(lo, hi)
    h = rng.uniform(lo, hi)
    cxs = [(b.x1 + b.x2) / 2 for b in others]
    cys = [(b.y1 + b.y2) / 2 for b in others]
    for _ in range(2):
        cx_lo, cx_hi = w / 2, canvas - w / 2
        cy_lo, cy_hi = h / 2, canvas - h / 2
        if rel == "left":
            if as_subject:
                cx_hi = min(cx_hi, min(cxs) + _MARGIN)
            else:
                cx_lo = max(cx_lo, max(cxs) - _MARGIN)
        elif rel == "right":
            if as_subject:
                cx_lo = max(cx_lo, max(cxs) - _MARGIN)
            else:
                cx_hi = min(cx_hi, min(cxs) + _MARGIN)
        elif rel == "above":
            if as_subject:
                cy_hi = min(cy_hi, min(cys) + _MARGIN)
            else:
                cy_lo = max(cy_lo, max(cys) - _MARGIN)
        if cx_hi >= cx_lo and cy_hi >= cy_lo:
            break
        w = h = lo  # smallest box always fits against 30px-wide neighbors
    cx = rng.uniform(cx_lo, cx_hi) if cx_hi > cx_lo else cx_lo
    cy = rng.uniform(cy_lo, cy_hi) if cy_hi > cy_lo else cy_lo
    return BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def _draw_types(rng, count, dominant, spec: SynthConfig) -> list[int]:
    """Latent type per instance: -1 = distractor, else the dominant class.

    Singleton sides never draw a distractor: with no same-kind neighbors a
    misleading instance has no aggregation role and would only produce
    degenerate scenes."""
    if count == 1:
        return [dominant]
    return [-1 if rng.uniform() < spec.distractor_prob else dominant
            for _ in range(count)]


def _draw_size(rng, max_count: int, spec: SynthConfig) -> int:
    """Instance count for one side; single instances are over-weighted so
    the single-pair subset of a split is large enough to evaluate."""
    if max_count == 1 or rng.uniform() < spec.single_prob:
        return 1
    return int(rng.integers(2, max_count + 1))


def _observed(rng, planted: np.ndarray, latent: int, active: bool,
              dominant: int, templates: np.ndarray, spec: SynthConfig,
              anchor: bool = False, fake: bool = False) -> np.ndarray:
    """What the detector reports for one instance.

    Members of an active scene show their planted template, attenuated with
    probability corrupt_prob — except the side's anchor, which always stays
    at full amplitude. Members of an inactive scene (planted = 0) show the
    attenuated dominant template, except the side's fake anchor, which shows
    it at full amplitude; a fake anchor is an exact double of a real one and
    only its pair geometry (arranged by the caller to violate the class
    relation) gives it away. Distractors show isotropic noise.
    """
    if spec.noise == 0.0:
        return planted.copy()
    if latent < 0:
        x = rng.normal(scale=spec.distractor_scale * spec.amp
                       / np.sqrt(planted.shape[0]), size=planted.shape)
    elif active:
        x = planted.copy()
        if not anchor and rng.uniform() < spec.corrupt_prob:
            x *= spec.ambig_scale
    else:
        scale = 1.0 if fake else spec.ambig_scale
        x = scale * spec.amp * templates[dominant]
    return x + rng.normal(scale=spec.noise, size=x.shape)


def generate_synthetic_scenes(count: int, rng_seed: int,
                              spec: SynthConfig | None = None) -> list[LabeledScene]:
    """Deterministic list of labeled scenes for the given seed."""
    spec = spec or SynthConfig()
    u, v = class_templates(spec)
    rng = np.random.default_rng(rng_seed)
    scenes: list[LabeledScene] = []
    for idx in range(count):
        n = _draw_size(rng, spec.max_subjects, spec)
        m = _draw_size(rng, spec.max_objects, spec)
        dominant = int(rng.integers(spec.n_classes))
        active = bool(rng.uniform() < spec.active_prob) or spec.noise == 0.0
        sub_types = _draw_types(rng, n, dominant, spec)
        obj_types = _draw_types(rng, m, dominant, spec)
        sub_members = [i for i, t in enumerate(sub_types) if t >= 0]
        obj_members = [j for j, t in enumerate(obj_types) if t >= 0]
        rel = relation_of_class(dominant)

        # Active sides anchor on their first member; it is also the box the
        # objects are placed against, so a real anchor's pairs satisfy the
        # class relation. Inactive sides fake-anchor their last member and
        # below we re-draw its box until none of its pairs do.
        sub_anchor = sub_members[0] if active and sub_members else -1
        obj_anchor = obj_members[0] if active and obj_members else -1
        sub_fake = sub_members[-1] if not active and sub_members else -1
        obj_fake = obj_members[-1] if not active and obj_members else -1

        sub_boxes = [_random_box(rng, spec.canvas, 50.0, 120.0) for _ in range(n)]
        obj_boxes = []
        for t in obj_types:
            box = None
            if t >= 0 and t in sub_types and rng.uniform() < spec.relation_place_prob:
                ref = sub_boxes[sub_types.index(t)]
                box = _place_for_relation(rng, relation_of_class(t), ref, spec.canvas)
            obj_boxes.append(box if box is not None else _random_box(rng, spec.canvas))

        if sub_fake >= 0:
            sub_boxes[sub_fake] = _place_violating(
                rng, rel, obj_boxes, spec.canvas, 50.0, 120.0, as_subject=True)
        if obj_fake >= 0:
            obj_boxes[obj_fake] = _place_violating(
                rng, rel, sub_boxes, spec.canvas, 30.0, 90.0, as_subject=False)

        sub_planted = np.stack([
            spec.amp * u[t] if t >= 0 and active else np.zeros(spec.feature_len)
            for t in sub_types])
        obj_planted = np.stack([
            spec.amp * v[t] if t >= 0 and active else np.zeros(spec.feature_len)
            for t in obj_types])

        # planted-threshold labels: feature alignment on both sides AND the
        # class's spatial relation
        labels = np.zeros((n, m, spec.n_classes))
        tau = spec.threshold * spec.amp
        for a in range(spec.n_classes):
            s_ok = sub_planted @ u[a] > tau
            o_ok = obj_planted @ v[a] > tau
            for i in range(n):
                if not s_ok[i]:
                    continue
                for j in range(m):
                    if o_ok[j] and relation_holds(relation_of_class(a),
                                                  sub_boxes[i], obj_boxes[j]):
                        labels[i, j, a] = 1.0

        subjects = [
            Instance("subject", sub_boxes[i],
                     _observed(rng, sub_planted[i], sub_types[i], active,
                               dominant, u, spec, anchor=(i == sub_anchor),
                               fake=(i == sub_fake)),
                     spec.confidence)
            for i in range(n)]
        objects = [
            Instance("object", obj_boxes[j],
                     _observed(rng, obj_planted[j], obj_types[j], active,
                               dominant, v, spec, anchor=(j == obj_anchor),
                               fake=(j == obj_fake)),
                     spec.confidence)
            for j in range(m)]
        scene = SceneInput(image_id=f"synth-{rng_seed}-{idx}", subjects=subjects,
                           objects=objects, width=spec.canvas, height=spec.canvas)
        scenes.append(LabeledScene(scene=scene, interaction_labels=labels))
    return scenes
