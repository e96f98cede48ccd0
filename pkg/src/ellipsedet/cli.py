"""Command-line interface wiring every module into scriptable runs.

Each run prints one JSON document — a manifest (subcommand, config
echo, seed, version, timing) plus the result — to stdout or ``--out``,
and a one-line human summary to stderr. Exit codes: 0 success, 1
runtime failure (message on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .augment import AugmentConfig, Sample, cutmix, mosaic, smooth_sample
from .dataset import (
    SynthConfig,
    detections_to_json,
    instances_from_record,
    load_labels,
    parse_detections,
    save_labels,
    write_dataset,
)
from .decode import DecodeConfig, decode
from .evaluate import DetRow, EvalConfig, evaluate, gt_rows
from .fitdemo import FitConfig, demo_scene, fit_f1, fit_predictions_demo
from .geometry import AxisBox
from .gradcases import CASES, run_case
from .heatmap import EncoderConfig, encode_targets
from .losses import LossConfig

__all__ = ["main"]


def _threshold(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (0.0 < v <= 1.0):
        raise argparse.ArgumentTypeError(f"threshold out of range (0, 1]: {v}")
    return v


def _classes(text: str) -> tuple[str, ...]:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    if not names:
        raise argparse.ArgumentTypeError("need at least one class name")
    return names


def _patch(text: str) -> AxisBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("patch must be x,y,w,h")
    try:
        x, y, w, h = (float(p) for p in parts)
        return AxisBox(x, y, w, h)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err))


def _ellipse_dict(e) -> dict:
    return {"cx": e.cx, "cy": e.cy, "l1": e.l1, "l2": e.l2, "theta": e.theta}


def _labels_dir(root: Path) -> Path:
    sub = root / "labels"
    return sub if sub.is_dir() else root


def _load_sample(root: Path, image_id: str) -> Sample:
    record = load_labels(_labels_dir(root) / f"{image_id}.json")
    with Image.open(root / "images" / f"{image_id}.png") as im:
        image = np.asarray(im.convert("RGB"))
    return Sample(image, record)


def _encode_record(record, args):
    instances = instances_from_record(record, args.classes)
    config = EncoderConfig(stride=args.stride, num_classes=len(args.classes), mode=args.mode)
    return encode_targets(instances, (record.width, record.height), config)


# --- subcommand bodies; each returns (result dict, ok flag) ----------------


def cmd_synth(args):
    root = Path(args.root)
    config = SynthConfig(num_objects=args.objects)
    write_dataset(root, args.n, base_seed=args.seed, config=config)
    return {"root": str(root), "scenes": args.n, "objects_per_scene": args.objects}, True


def cmd_render_heatmap(args):
    record = load_labels(args.labels)
    t = _encode_record(record, args)
    result = {
        "image_id": record.image_id,
        "shapes": {k: list(getattr(t, k).shape) for k in ("heatmap", "offset", "size", "mask", "seg")},
        "num_positives": t.num_positives,
        "max_score": float(t.heatmap.max(initial=0.0)),
    }
    if args.npz:
        np.savez(
            args.npz,
            heatmap=t.heatmap,
            offset=t.offset,
            size=t.size,
            mask=t.mask,
            seg=t.seg,
            image_id=np.asarray(record.image_id),
        )
        result["npz"] = args.npz
    return result, True


def cmd_decode(args):
    cfg = DecodeConfig(stride=args.stride, threshold=args.threshold, top_k=args.top_k)
    docs = []
    if args.targets:
        with np.load(args.targets) as z:
            image_id = str(z["image_id"]) if "image_id" in z else "targets"
            dets = decode(z["heatmap"], z["offset"], z["size"], cfg)
        docs.append(json.loads(detections_to_json(image_id, dets, list(args.classes))))
    elif args.labels_root:
        root = Path(args.labels_root)
        paths = sorted(_labels_dir(root).glob("*.json"))
        if not paths:
            raise ValueError(f"no label files under {root}")
        for p in paths:
            record = load_labels(p)
            t = _encode_record(record, args)
            dets = decode(t.heatmap, t.offset, t.size, cfg)
            docs.append(json.loads(detections_to_json(record.image_id, dets, list(args.classes))))
    else:
        raise ValueError("need --targets or --labels-root")
    total = sum(len(d["detections"]) for d in docs)
    return {"images": docs, "num_images": len(docs), "num_detections": total}, True


def cmd_eval(args):
    dets_doc = json.loads(Path(args.dets).read_text(encoding="utf-8"))
    if "result" in dets_doc:  # a full decode output document, manifest included
        dets_doc = dets_doc["result"]
    per_image = dets_doc["images"] if "images" in dets_doc else [dets_doc]
    dets_by_image = {}
    for doc in per_image:
        image_id, rows = parse_detections(json.dumps(doc))
        dets_by_image[image_id] = [DetRow(r["class"], r["score"], r["ellipse"]) for r in rows]

    gts_by_image = {}
    for p in sorted(_labels_dir(Path(args.gts)).glob("*.json")):
        record = load_labels(p)
        gts_by_image[record.image_id] = gt_rows(record)

    cfg = EvalConfig(
        iou_threshold=args.iou_threshold, iou_kind=args.iou_kind, resolution=args.resolution
    )
    r = evaluate(dets_by_image, gts_by_image, list(args.classes), cfg)
    per_class = {
        name: {
            "ap": c.ap,
            "num_gt": c.num_gt,
            "tp": c.tp,
            "fp": c.fp,
            "precision": list(c.precision),
            "recall": list(c.recall),
        }
        for name, c in r.per_class.items()
    }
    result = {
        "map": r.mean_ap,
        "per_class": per_class,
        "skipped_classes": r.skipped_classes,
        "iou_threshold": cfg.iou_threshold,
        "iou_kind": cfg.iou_kind,
    }
    return result, True


def cmd_augment(args):
    root = Path(args.root)
    cfg = AugmentConfig(
        smoothing_eps=args.eps, visibility_tau=args.tau, rng_seed=args.seed
    )
    ids = list(args.ids) if args.ids else sorted(p.stem for p in _labels_dir(root).glob("*.json"))
    need = {"mosaic": 4, "cutmix": 2, "smooth": 1}[args.kind]
    if len(ids) < need:
        raise ValueError(f"{args.kind} needs {need} image ids, have {len(ids)}")
    ids = ids[:need]
    samples = [_load_sample(root, i) for i in ids]

    if args.kind == "mosaic":
        out_sample = mosaic(samples, cfg)
    elif args.kind == "cutmix":
        if args.patch is None:
            raise ValueError("cutmix needs --patch x,y,w,h")
        out_sample = cutmix(samples[0], samples[1], args.patch, cfg)
    else:
        out_sample = smooth_sample(samples[0], args.eps)

    out_dir = Path(args.dest)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = f"{args.kind}_{args.seed}"
    record = replace(out_sample.record, image_id=name)
    Image.fromarray(out_sample.image).save(out_dir / f"{name}.png")
    save_labels(record, out_dir / f"{name}.json")
    return {
        "kind": args.kind,
        "sources": ids,
        "image_id": name,
        "out": str(out_dir),
        "objects": len(record.objects),
        "peaks": [o.peak for o in record.objects],
    }, True


def cmd_gradcheck(args):
    names = sorted(CASES) if args.loss == "all" else [args.loss]
    losses = {}
    ok = True
    for name in names:
        _, _, tol = CASES[name]
        worst = run_case(name, n_instances=args.trials, seed=args.seed)
        passed = worst < tol
        ok = ok and passed
        losses[name] = {"worst_rel_err": worst, "tolerance": tol, "ok": passed}
    return {"trials": args.trials, "losses": losses, "ok": ok}, ok


def cmd_demo_fit(args):
    targets, record = demo_scene(seed=args.seed, num_objects=args.objects, mode=args.mode)
    loss_cfg = LossConfig(smooth_l1=True, size_mode=args.size_mode, spotnet=args.spotnet)
    fit_cfg = FitConfig(
        iters=args.iters,
        seed=args.seed,
        loss=loss_cfg,
        decode=DecodeConfig(stride=4, threshold=args.threshold),
    )
    r = fit_predictions_demo(targets, fit_cfg)
    f1 = fit_f1(r.detections, record, args.classes)
    dets = [
        {"class": args.classes[d.class_id], "score": d.score, "ellipse": _ellipse_dict(d.ellipse)}
        for d in r.detections
    ]
    result = {
        "size_mode": args.size_mode,
        "spotnet": args.spotnet,
        "iters": args.iters,
        "initial_loss": r.initial_loss,
        "final_loss": r.final_loss,
        "loss_ratio": r.final_loss / r.initial_loss,
        "f1": f1,
        "detections": dets,
        "ground_truth": [
            {"class": o.class_name, "ellipse": _ellipse_dict(o.ellipse)} for o in record.objects
        ],
    }
    return result, True


def cmd_serve(args):
    from .service import serve

    manifest = _manifest("serve", args, elapsed=0.0)
    print(json.dumps({"manifest": manifest}, indent=2), flush=True)
    print(f"serving {args.root} on {args.host}:{args.port}", file=sys.stderr)
    serve(args.root, port=args.port, host=args.host, classes=args.classes,
          frontend_dir=args.frontend)
    return None, True


# --- plumbing ----------------------------------------------------------------


def _manifest(subcommand: str, args, elapsed: float) -> dict:
    config = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "out") and not callable(v) and _jsonable(v)
    }
    return {
        "subcommand": subcommand,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config": config,
        "elapsed_s": round(elapsed, 3),
    }


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellipsedet", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, *, classes=True, stride=True, seed=True, out=True, mode=False):
        if classes:
            p.add_argument("--classes", type=_classes, default=("car", "bus", "truck"))
        if stride:
            p.add_argument("--stride", type=int, default=4)
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if out:
            p.add_argument("--out", default=None, help="write the JSON result here")
        if mode:
            p.add_argument("--mode", choices=("ellipse", "circle"), default="ellipse")

    p = sub.add_parser("synth", help="write a synthetic dataset (images/ + labels/)")
    common(p, stride=False, mode=False)
    p.add_argument("--n", type=int, required=True, help="number of scenes")
    p.add_argument("--objects", type=int, default=6)
    p.add_argument("--root", required=True, help="dataset directory to create")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render-heatmap", help="encode one label file into target maps")
    common(p, mode=True)
    p.add_argument("--labels", required=True, help="path to a label JSON file")
    p.add_argument("--npz", default=None, help="also save the target arrays here")
    p.set_defaults(func=cmd_render_heatmap)

    p = sub.add_parser("decode", help="decode targets or a whole labels directory")
    common(p, mode=True)
    p.add_argument("--threshold", type=_threshold, default=0.3)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--targets", default=None, help="npz from render-heatmap")
    p.add_argument("--labels-root", default=None, help="dataset root: encode+decode each label file")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="mAP of a detections document against labels")
    common(p, stride=False, seed=False)
    p.add_argument("--dets", required=True, help="detections JSON from decode")
    p.add_argument("--gts", required=True, help="labels directory (or dataset root)")
    p.add_argument("--iou-threshold", type=_threshold, default=0.5)
    p.add_argument("--iou-kind", choices=("ellipse", "obb", "box"), default="ellipse")
    p.add_argument("--resolution", type=int, default=512)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="compose or smooth labeled samples")
    common(p, stride=False)
    p.add_argument("kind", choices=("mosaic", "cutmix", "smooth"))
    p.add_argument("--root", required=True, help="dataset root with images/ and labels/")
    p.add_argument("--ids", type=_classes, default=None, help="comma-separated image ids")
    p.add_argument("--patch", type=_patch, default=None, help="cutmix patch x,y,w,h")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--dest", required=True, help="directory for the composed image + labels")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    common(p, classes=False, stride=False)
    p.add_argument("--loss", default="all", choices=["all", *sorted(CASES)])
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("demo-fit", help="recover labels by gradient descent on predictions")
    common(p, stride=False, mode=True)
    p.add_argument("--size-mode", choices=("regression", "piou"), default="regression")
    p.add_argument("--spotnet", action="store_true")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--objects", type=int, default=3)
    p.add_argument("--threshold", type=_threshold, default=0.3)
    p.set_defaults(func=cmd_demo_fit)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    common(p, stride=False, seed=False, out=False)
    p.add_argument("--root", required=True)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--frontend", default=None, help="static directory to mount at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        result, ok = args.func(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    if result is None:  # serve emits its manifest up front and blocks
        return 0
    payload = {"manifest": _manifest(args.subcommand, args, time.perf_counter() - t0), "result": result}
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    status = "ok" if ok else "FAILED"
    print(f"{args.subcommand}: {status} in {payload['manifest']['elapsed_s']}s", file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
