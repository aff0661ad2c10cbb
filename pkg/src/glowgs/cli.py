"""Pipeline orchestration CLI.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every run prints a reproducibility header (version, seed, config hash).
Set GLOWGS_THREADS to cap worker threads (0 or unset = automatic).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

import glowgs
from glowgs import formats, glowsim
from glowgs.descriptor import describe
from glowgs.errors import DataFormatError, InvalidInputError, NumericalError
from glowgs.featbank import build_bank, verify
from glowgs.metrics import masked_eval
from glowgs.rasterizer import rasterize
from glowgs.scene import random_scene
from glowgs.trainer import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse that signals usage problems via exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _apply_thread_cap():
    cap = os.environ.get("GLOWGS_THREADS", "0")
    try:
        n = int(cap)
    except ValueError:
        n = 0
    if n > 0:
        import torch

        torch.set_num_threads(n)


def _print_header(args: argparse.Namespace):
    blob = json.dumps(
        {k: str(v) for k, v in sorted(vars(args).items()) if k != "func"},
        sort_keys=True,
    ).encode()
    digest = hashlib.sha256(blob).hexdigest()[:16]
    seed = getattr(args, "seed", None)
    print(f"glowgs {glowgs.__version__} | seed={seed} | config={digest}")


def _load_views_dir(path: Path):
    """Read view_*.png + view_*.cam pairs from a directory, sorted by name."""
    images = sorted(path.glob("view_*.png"))
    if not images:
        raise DataFormatError(f"no view_*.png files in {path}")
    pairs = []
    for img_path in images:
        cam_path = img_path.with_suffix(".cam")
        if not cam_path.exists():
            raise DataFormatError(f"missing camera file {cam_path}")
        pairs.append((formats.load_image(img_path), formats.load_camera(cam_path)))
    return pairs


def cmd_gen_scene(args) -> int:
    out = Path(args.out)
    if args.spec:
        spec = glowsim.load_spec(args.spec)
    else:
        spec = glowsim.benchmark_spec(args.seed)
    train_cams, test_cams, cand_cams = glowsim.benchmark_cameras(
        n_train=args.views, n_test=args.test_views, n_candidates=args.candidates, size=args.size
    )
    for sub, cams in (("train", train_cams), ("test", test_cams), ("candidates", cand_cams)):
        d = out / sub
        d.mkdir(parents=True, exist_ok=True)
        for i, cam in enumerate(cams):
            img = glowsim.render_reference(spec, cam)
            formats.save_image(img, d / f"view_{i:03d}.png")
            # Candidate poses are withheld by design: no camera files there.
            if sub != "candidates":
                formats.save_camera(cam, d / f"view_{i:03d}.cam")
            if sub == "test":
                formats.save_mask(glowsim.glow_mask(spec, cam), d / f"view_{i:03d}.mask.png")
    glowsim.save_spec(spec, out / "scene.yaml")
    print(f"wrote scene to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    ref_img = formats.load_image(args.ref)
    from glowgs.featbank import ensure_min_side
    from glowgs.descriptor import CROP

    ref = describe(ensure_min_side(ref_img, CROP))
    cands = [
        describe(ensure_min_side(formats.load_image(p), CROP), source_view=i + 1)
        for i, p in enumerate(args.candidates)
    ]
    report = verify(ref, cands, threshold=args.threshold, max_rounds=args.max_rounds)
    payload = {
        "distance": report.distance,
        "threshold": report.threshold,
        "accepted": report.accepted,
        "frame_distances": report.frame_distances,
        "rounds": report.rounds,
    }
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(json.dumps(payload))
    return EXIT_OK


def cmd_build_bank(args) -> int:
    if args.extractor != "builtin":
        raise InvalidInputError(
            f"unknown extractor {args.extractor!r}; external extractors write "
            "GSFB files directly via the bridge"
        )
    views_dir = Path(args.views)
    images = [formats.load_image(p) for p in sorted(views_dir.glob("*.png"))]
    if not images:
        raise DataFormatError(f"no .png views found in {views_dir}")
    rng = np.random.default_rng(args.seed)
    bank = build_bank(images, crops_per_view=args.crops_per_view, rng=rng)
    formats.save_bank(bank, args.out)
    print(f"bank: {len(bank)} records, dim {bank.dim} -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    views = _load_views_dir(Path(args.views_dir))
    bank = formats.load_bank(args.bank) if args.bank else None
    cfg = TrainConfig(
        lambda_weight=args.lambda_weight,
        iters=args.iters,
        semantic_every=args.semantic_every,
        semantic_enabled=bank is not None,
        seed=args.seed,
        init_count=args.init_count,
        sh_degree=args.sh_degree,
    )
    if args.scene_init:
        scene0 = formats.load_scene(args.scene_init)
    else:
        rng = np.random.default_rng(cfg.seed)
        scene0 = random_scene(
            [c for _, c in views], cfg.init_count, rng, sh_degree=cfg.sh_degree
        )
    scene, log = train(scene0, views, bank, cfg)
    formats.save_scene(scene, args.out)
    if args.log:
        log.write_ndjson(args.log)
    print(f"trained {len(scene)} Gaussians over {cfg.iters} iters -> {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = formats.load_scene(args.model)
    cam = formats.load_camera(args.camera)
    out = rasterize(scene, cam)
    formats.save_image(out.image, args.out)
    print(f"rendered {cam.width}x{cam.height} -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = formats.load_image(args.pred)
    gt = formats.load_image(args.gt)
    mask = formats.load_mask(args.mask) if args.mask else None
    report = masked_eval(pred, gt, mask)
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(json.dumps(payload))
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="glowgs", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="generate a synthetic glow scene")
    g.add_argument("--spec", default=None, help="scene spec YAML (default: built-in benchmark)")
    g.add_argument("--out", required=True)
    g.add_argument("--views", type=int, default=6, help="number of training views")
    g.add_argument("--test-views", type=int, default=6)
    g.add_argument("--candidates", type=int, default=24)
    g.add_argument("--size", type=int, default=128)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_scene)

    g = sub.add_parser("ingest", help="verify candidate views against a reference")
    g.add_argument("--ref", required=True)
    g.add_argument("--candidates", nargs="+", required=True)
    g.add_argument("--threshold", type=float, default=1.5)
    g.add_argument("--max-rounds", type=int, default=1)
    g.add_argument("--report", default=None)
    g.set_defaults(func=cmd_ingest)

    g = sub.add_parser("build-bank", help="build a feature bank from views")
    g.add_argument("--views", required=True, help="directory of .png views")
    g.add_argument("--crops-per-view", type=int, default=1)
    g.add_argument("--extractor", default="builtin")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_build_bank)

    g = sub.add_parser("train", help="train a scene")
    g.add_argument("--scene-init", default=None, help="GSSC file (default: random init)")
    g.add_argument("--views-dir", required=True)
    g.add_argument("--bank", default=None)
    g.add_argument("--lambda", dest="lambda_weight", type=float, default=0.01)
    g.add_argument("--iters", type=int, default=300)
    g.add_argument("--semantic-every", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--init-count", type=int, default=2000)
    g.add_argument("--sh-degree", type=int, default=1)
    g.add_argument("--out", required=True)
    g.add_argument("--log", default=None)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("render", help="render a trained scene")
    g.add_argument("--model", required=True)
    g.add_argument("--camera", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_render)

    g = sub.add_parser("eval", help="score a render against ground truth")
    g.add_argument("--pred", required=True)
    g.add_argument("--gt", required=True)
    g.add_argument("--mask", default=None)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_eval)
    return p


def run(argv: list[str]) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _print_header(args)
    try:
        return args.func(args)
    except (DataFormatError,) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvalidInputError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
