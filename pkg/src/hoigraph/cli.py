"""Command-line surface: train | predict | eval | gradcheck | synth."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import autodiff as ad
from .config import TrainConfig, parse_config_file
from .evaluation import (evaluate_map, ground_truth_from_scenes, predict_scenes,
                         split_by_complexity)
from .model import init_params
from .sceneio import (load_checkpoint, load_ground_truth, load_predictions,
                      load_scenes, report_to_dict, save_checkpoint,
                      save_ground_truth, save_predictions, save_scenes)
from .synth import SynthConfig, generate_synthetic_scenes
from .training import learning_rate, scene_loss, train

log = logging.getLogger("hoigraph")


def _setup_logging():
    level = os.environ.get("HOIGRAPH_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_synth_spec(text: str) -> dict:
    """'n=200,sigma=0.1,a=4' -> generator overrides."""
    out: dict = {}
    key_map = {"n": ("count", int), "sigma": ("noise", float),
               "a": ("n_classes", int), "f": ("feature_len", int)}
    for part in text.split(","):
        if not part:
            continue
        k, _, v = part.partition("=")
        k = k.strip().lower()
        if k in key_map:
            name, cast = key_map[k]
            out[name] = cast(v)
        else:
            out[k] = float(v) if "." in v else int(v)
    return out


def _apply_flags(cfg: TrainConfig, args) -> TrainConfig:
    d = cfg.to_dict()
    if args.no_intra:
        d["use_intra"] = False
    if args.no_inter:
        d["use_inter"] = False
    if args.no_intra_attention:
        d["use_intra_attention"] = False
    if args.no_w:
        d["use_interactiveness_weight"] = False
    if args.homogeneous:
        d["homogeneous_mode"] = args.homogeneous
    if args.epochs is not None:
        d["epochs"] = args.epochs
    if args.seed is not None:
        d["seed"] = args.seed
    return TrainConfig.from_dict(d)


def cmd_train(args) -> int:
    cfg = parse_config_file(args.config) if args.config else TrainConfig()
    cfg = _apply_flags(cfg, args)
    if args.synth:
        spec_kw = _parse_synth_spec(args.synth)
        count = spec_kw.pop("count", 200)
        a = spec_kw.pop("n_classes", cfg.A)
        f = spec_kw.pop("feature_len", cfg.F)
        if (a, f) != (cfg.A, cfg.F):
            cfg = TrainConfig.from_dict({**cfg.to_dict(), "A": a, "F": f})
        spec = SynthConfig(n_classes=a, feature_len=f, **spec_kw)
        dataset = generate_synthetic_scenes(count, cfg.seed, spec)
    else:
        if not args.data:
            print("train: need --data <scenes.json> or --synth <spec>", file=sys.stderr)
            return 2
        dataset = load_scenes(args.data)
        a = dataset[0].interaction_labels.shape[2]
        f = dataset[0].scene.feature_len()
        if (a, f) != (cfg.A, cfg.F):
            cfg = TrainConfig.from_dict({**cfg.to_dict(), "A": a, "F": f})
    print(f"variant={cfg.variant} lambda={cfg.lam} T={cfg.T} lr0={cfg.lr0} "
          f"decay={cfg.decay}/{cfg.decay_every} batch={cfg.batch_size} "
          f"epochs={cfg.epochs} D={cfg.D} F={cfg.F} A={cfg.A} seed={cfg.seed}")
    ckpt_path = args.out
    history_rows = []

    def on_epoch(epoch, store, loss):
        history_rows.append((epoch, learning_rate(epoch, cfg), loss))
        if (epoch + 1) % args.checkpoint_every == 0 or epoch + 1 == cfg.epochs:
            save_checkpoint(ckpt_path, store, cfg, epoch=epoch + 1)

    try:
        store, _ = train(dataset, cfg, epoch_callback=on_epoch)
    except ad.NonFiniteError as e:
        print(f"train: aborted: {e}", file=sys.stderr)
        return 1
    save_checkpoint(ckpt_path, store, cfg, epoch=cfg.epochs)
    if args.loss_csv:
        with open(args.loss_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "lr", "loss"])
            w.writerows(history_rows)
    print(f"checkpoint written to {ckpt_path}")
    return 0


def _dump_pgm(path: str, mask: np.ndarray) -> None:
    """8-bit binary PGM of one map channel."""
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write((mask * 255).astype(np.uint8).tobytes())


def cmd_predict(args) -> int:
    try:
        store, cfg, _, _ = load_checkpoint(args.checkpoint)
    except ValueError as e:
        print(f"predict: {e}", file=sys.stderr)
        return 1
    scenes = load_scenes(args.data)
    preds = predict_scenes(scenes, store, cfg, score_floor=args.score_floor)
    save_predictions(preds, args.out)
    if args.dump_maps:
        os.makedirs(args.dump_maps, exist_ok=True)
        for item in scenes:
            sc = item.scene
            if sc.n and sc.m:
                for p, pair in enumerate(sc.pair_maps()):
                    for c, tag in enumerate(("sub", "obj")):
                        _dump_pgm(os.path.join(
                            args.dump_maps,
                            f"{sc.image_id}-pair{p}-{tag}.pgm"), pair[c])
    if args.debug_dump:
        from .model import forward
        dump = {}
        for item in scenes:
            sc = item.scene
            res = forward(sc, store, cfg)
            dump[sc.image_id] = {
                "y": res.y.data.tolist(),
                "conf_sub": [i.confidence for i in sc.subjects],
                "conf_obj": [i.confidence for i in sc.objects],
            }
        with open(args.debug_dump, "w") as fh:
            json.dump(dump, fh)
    print(f"{len(preds)} predictions written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    try:
        preds = load_predictions(args.predictions)
        gts, sizes, known = load_ground_truth(args.ground_truth)
    except (ValueError, OSError, KeyError) as e:
        print(f"eval: {e}", file=sys.stderr)
        return 1
    if not gts:
        print("eval: ground-truth file contains no annotations", file=sys.stderr)
        return 1
    known_filter = None
    if args.known_object is not None:
        if args.known_object is not True:  # a filter file was given
            with open(args.known_object) as fh:
                doc = json.load(fh)
            table = doc.get("known_object", doc)
            known_filter = {int(k): set(v) for k, v in table.items()}
        elif known is not None:
            known_filter = known
        else:
            print("eval: --known-object requested but no filter file was "
                  "given and the ground-truth file has no known_object table",
                  file=sys.stderr)
            return 1
    report = evaluate_map(preds, gts, iou_thresh=args.iou, known_object=known_filter)
    if args.split_complexity:
        if sizes is None:
            print("eval: --split-complexity needs per-image instance counts in "
                  "the ground-truth file", file=sys.stderr)
            return 1
        simple_ids = {k for k, (n, m) in sizes.items() if n == 1 and m == 1}
        for name, keep in (("C", lambda i: i not in simple_ids),
                           ("S", lambda i: i in simple_ids)):
            sub_gt = [g for g in gts if keep(g.image_id)]
            sub_pred = [p for p in preds if keep(p.image_id)]
            if sub_gt:
                report.sub_reports[name] = evaluate_map(
                    sub_pred, sub_gt, iou_thresh=args.iou, known_object=known_filter)
    print(report.table())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report_to_dict(report), fh, indent=2)
    return 0


def cmd_gradcheck(args) -> int:
    cfg = TrainConfig(D=args.d, A=args.a, F=args.f, seed=args.seed, T=args.t)
    spec = SynthConfig(n_classes=cfg.A, feature_len=cfg.F,
                       max_subjects=args.n, max_objects=args.m)
    rng = np.random.default_rng(args.seed)
    scenes = generate_synthetic_scenes(8, args.seed, spec)
    scene = next((s for s in scenes if s.scene.n == args.n and s.scene.m == args.m),
                 scenes[0])
    store = init_params(cfg)

    def loss_fn(ps):
        return scene_loss(scene, ps, cfg)

    t0 = time.time()
    err, report = ad.finite_difference_check(
        loss_fn, store, eps=args.eps,
        samples_per_param=args.samples, rng=rng)
    dt = time.time() - t0
    print(f"max relative error {err:.3e} over {len(report)} parameter tensors "
          f"(N={scene.scene.n} M={scene.scene.m} D={cfg.D} A={cfg.A}) in {dt:.1f}s")
    skipped = [r for r in report if r["skipped"]]
    for r in skipped:
        print(f"  skipped non-finite coords in {r['param']}: {r['skipped']}")
    if err >= args.tol:
        worst = sorted(report, key=lambda r: -r["max_rel_error"])[:5]
        for r in worst:
            print(f"  {r['param']}: {r['max_rel_error']:.3e} at coord {r['coord']}")
        return 1
    return 0


def cmd_synth(args) -> int:
    spec_kw = _parse_synth_spec(args.spec) if args.spec else {}
    count = spec_kw.pop("count", args.count)
    spec = SynthConfig(**spec_kw)
    scenes = generate_synthetic_scenes(count, args.seed, spec)
    save_scenes(scenes, args.out)
    print(f"{count} scenes written to {args.out}")
    if args.ground_truth:
        gts = ground_truth_from_scenes(scenes)
        sizes = {s.scene.image_id: (s.scene.n, s.scene.m) for s in scenes}
        complex_, simple = split_by_complexity(scenes)
        known = {a: sorted({g.image_id for g in gts if g.action == a})
                 for a in range(spec.n_classes)}
        save_ground_truth(gts, args.ground_truth, scene_sizes=sizes, known_object=known)
        print(f"{len(gts)} ground-truth annotations written to {args.ground_truth} "
              f"({len(complex_)} complex / {len(simple)} simple scenes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hoigraph",
                                description="heterogeneous graph HOI detector")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--data", help="scene JSON file with labels")
    t.add_argument("--synth", metavar="SPEC",
                   help="generate synthetic training data, e.g. n=200,sigma=0.1")
    t.add_argument("--out", default="model.ckpt")
    t.add_argument("--loss-csv", default=None)
    t.add_argument("--checkpoint-every", type=int, default=10)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--no-intra", action="store_true")
    t.add_argument("--no-inter", action="store_true")
    t.add_argument("--no-intra-attention", action="store_true")
    t.add_argument("--no-w", action="store_true")
    t.add_argument("--homogeneous", choices=["intra", "inter"], default=None)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="run inference on scene files")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", default="predictions.json")
    pr.add_argument("--score-floor", type=float, default=0.0)
    pr.add_argument("--dump-maps", metavar="DIR", default=None,
                    help="write each pair's spatial map channels as PGM images")
    pr.add_argument("--debug-dump", metavar="FILE", default=None,
                    help="write raw y and confidences per scene as JSON")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("eval", help="evaluate predictions against ground truth")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--ground-truth", required=True)
    ev.add_argument("--iou", type=float, default=0.5)
    ev.add_argument("--split-complexity", action="store_true")
    ev.add_argument("--known-object", nargs="?", const=True, default=None,
                    metavar="FILTER_FILE",
                    help="Known-Object mode; the per-class image filter comes "
                         "from FILTER_FILE or from the ground-truth file")
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_eval)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient check")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--eps", type=float, default=1e-6)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--d", type=int, default=4)
    gc.add_argument("--n", type=int, default=2)
    gc.add_argument("--m", type=int, default=2)
    gc.add_argument("--a", type=int, default=3)
    gc.add_argument("--f", type=int, default=8)
    gc.add_argument("--t", type=int, default=2)
    gc.add_argument("--samples", type=int, default=30,
                    help="coordinates probed per parameter tensor")
    gc.set_defaults(func=cmd_gradcheck)

    sy = sub.add_parser("synth", help="write synthetic scenes to JSON")
    sy.add_argument("--count", type=int, default=100)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--spec", default=None, help="e.g. n=200,sigma=0.1,a=4")
    sy.add_argument("--out", default="scenes.json")
    sy.add_argument("--ground-truth", default=None)
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
