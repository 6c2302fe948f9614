"""Command-line front end: dataset generation, splitting, training,
evaluation, statistics and mask rendering.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .action_mask import MaskConfig
from .datamodel import parse_annotation, read_clip
from .fusion import FusionConfig
from .harness import (
    SplitSpec,
    TrainConfig,
    TrainedModel,
    evaluate,
    load_manifest,
    save_manifest,
    save_result,
    split,
    stats,
    train,
)
from .synthgen import SynthConfig, gen_dataset


def _cmd_synth_gen(args):
    cfg_kwargs = {}
    if args.config:
        cfg_kwargs = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        cfg_kwargs["seed"] = args.seed
    cfg = SynthConfig(**cfg_kwargs)
    manifest = gen_dataset(cfg, args.out)
    print(f"wrote {len(manifest['clips'])} clips to {args.out}")


def _cmd_split(args):
    manifest = load_manifest(args.manifest)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    parts = split(manifest, SplitSpec(ratios=ratios, seed=args.seed))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "test", "val"), parts):
        path = out_dir / f"{name}.json"
        save_manifest(part, path)
        print(f"{name}: {len(part['clips'])} clips -> {path}")


def _cmd_train(args):
    cfg = TrainConfig(
        variant=args.variant,
        mask=args.mask == "on",
        batch_size=args.batch_size,
        epochs=args.epochs,
        skel_epochs=args.skel_epochs,
        lr=args.lr,
        skel_lr=args.skel_lr,
        seed=args.seed,
        mask_cfg=MaskConfig(frame_side=args.frame_side, p=args.mask_p),
        fusion_cfg=FusionConfig(
            mode="feature" if args.variant != "fuse-score" else "score",
            w_skel=args.w_skel,
            w_rgb=1.0 - args.w_skel,
        ),
    )
    result = train(cfg, load_manifest(args.train), load_manifest(args.val))
    save_result(result, args.ckpt, args.curves)
    last = result.curves[-1] if result.curves else {}
    print(f"saved checkpoint to {args.ckpt} (final val acc {last.get('val_acc', float('nan')):.3f})")


def _cmd_eval(args):
    model = TrainedModel.load(args.ckpt)
    report = evaluate(model, load_manifest(args.manifest))
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=1), encoding="utf-8")
    print(f"accuracy: {report.accuracy:.4f}")


def _cmd_stats(args):
    manifest = load_manifest(args.manifest)
    report = stats(manifest)
    print(json.dumps(report, indent=1))


def _write_ppm(path, frame):
    """frame is (3, S, S) indexed [c, x, y], values in [0, 1]."""
    img = np.clip(np.round(frame.transpose(2, 1, 0) * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def _cmd_mask_render(args):
    from .action_mask import mask_clip_arrays
    from .harness import AttentionMasker, load_samples

    model = TrainedModel.load(args.ckpt)
    if model.skel_net is None:
        raise SystemExit("checkpoint has no skeleton channel; cannot derive masks")
    clip = read_clip(args.clip)
    ann_path = args.annotation or str(Path(args.clip).with_suffix(".jsonl"))
    ann = parse_annotation(Path(ann_path).read_text(encoding="utf-8"))
    side = clip.dims[2]
    mask_cfg = MaskConfig(frame_side=side, p=model.mask_cfg.p)
    entry = {"path": args.clip, "annotation_path": ann_path, "label": ann.frames[0][0].label}
    try:
        sample = load_samples({"clips": [entry]}, _single_label_space(entry["label"]))[0]
    except Exception as e:
        raise SystemExit(f"cannot load clip/annotation: {e}")
    masker = AttentionMasker(model.skel_net, mask_cfg)
    weights = masker.weights_for(sample)
    masked = mask_clip_arrays(clip.data, weights, sample.crop_joints * side, sample.conf, mask_cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(clip.dims[1]):
        _write_ppm(out_dir / f"frame_{t:04d}.ppm", masked[:, t])
    print(f"wrote {clip.dims[1]} masked frames to {out_dir}")
    print("joint weights:", np.array2string(weights, precision=3))


def _single_label_space(label):
    from .datamodel import LabelSpace

    default = LabelSpace()
    if label in default.categories:
        return default
    return LabelSpace(categories=(label, "none-of-the-above"), emotion_attrs={})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="habitmask")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic benchmark dataset")
    p.add_argument("--config", help="JSON file with SynthConfig fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("split", help="stratified train/test/val split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.7,0.2,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train one ladder variant")
    p.add_argument("--variant", choices=("skel", "rgb", "fuse-feature", "fuse-score"), required=True)
    p.add_argument("--mask", choices=("on", "off"), default="off")
    p.add_argument("--train", required=True, help="train manifest")
    p.add_argument("--val", required=True, help="validation manifest")
    p.add_argument("--ckpt", required=True, help="output checkpoint path")
    p.add_argument("--curves", help="output CSV of per-epoch loss/accuracy")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--skel-epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=18)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--skel-lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frame-side", type=int, default=64)
    p.add_argument("--mask-p", type=float, default=0.3)
    p.add_argument("--w-skel", type=float, default=0.5)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="write the full JSON report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mask-render", help="render masked frames as PPM images")
    p.add_argument("--clip", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--annotation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mask_render)

    p = sub.add_parser("stats", help="dataset statistics and emotion attributes")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
