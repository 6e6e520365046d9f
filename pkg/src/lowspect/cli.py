"""Batch command-line pipeline.

Subcommands: phantom, project, noise, dataset, mlem, train, infer, eval,
compare.  Every command writes a JSON run manifest next to its outputs
(command, full configuration echo, seeds, version, paths, wall-clock), which
is sufficient to re-run it.  Outputs are write-once; inputs are never
mutated.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import DatasetIndex, split_dataset
from .io import load_array, save_array
from .metrics import MetricsReport, SsimConfig, evaluate_pair
from .mlem import mlem_reconstruct
from .noise import NoiseConfig, poissonize, scale_for_max_counts
from .phantoms import (
    PhantomConfig,
    PhantomRecipe,
    random_phantom,
    rasterize,
    shepp_logan,
    shepp_logan_recipe,
)
from .projector import ScanGeometry, build_system_matrix, forward_project, parse_geometry
from .rng import Rng, child_seed

LARGE_RUN_ITEMS = 10_000
TRIPLE_NAMES = ("phantom", "sino_clean", "sino_noisy")


def _write_manifest(path: Path, command: str, config: dict, io_paths: dict, started: float):
    manifest = {
        "command": command,
        "config": config,
        "io": io_paths,
        "tool_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _save_png(path, panels, lo, hi):
    """8-bit grayscale, non-interlaced montage of equally sized panels."""
    from PIL import Image

    span = hi - lo if hi > lo else 1.0
    scaled = [
        np.clip((np.asarray(p, dtype=np.float64) - lo) / span, 0.0, 1.0) for p in panels
    ]
    strip = np.concatenate(scaled, axis=1)
    img = Image.fromarray((strip * 255.0).round().astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def cmd_phantom(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "shepp-logan":
        img = shepp_logan(args.n, args.variant)
        recipe = shepp_logan_recipe(args.n, args.variant)
    else:
        recipe, img = random_phantom(Rng(args.seed), args.n)
    save_array(out, img.astype(np.float32))
    sidecar = out.with_suffix(".recipe.json")
    sidecar.write_text(json.dumps(recipe.to_dict(), sort_keys=True, indent=1) + "\n")
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "phantom",
        {"kind": args.kind, "n": args.n, "variant": args.variant, "seed": args.seed},
        {"out": str(out), "recipe": str(sidecar)},
        started,
    )
    return 0


def cmd_project(args) -> int:
    started = time.time()
    geom = parse_geometry(args.geom)
    matrix = build_system_matrix(geom)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    img = load_array(args.image).astype(np.float64)
    sino = forward_project(matrix, img)
    save_array(out, sino.astype(np.float32))
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "project",
        {"geom": args.geom},
        {"image": args.image, "out": str(out)},
        started,
    )
    return 0


def cmd_noise(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sino = load_array(args.sino).astype(np.float64)
    noisy = poissonize(sino, NoiseConfig(args.scale, args.seed))
    save_array(out, noisy.astype(np.float32))
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "noise",
        {"scale": args.scale, "seed": args.seed},
        {"sino": args.sino, "out": str(out)},
        started,
    )
    return 0


def _dataset_triple_paths(out_dir: Path, index: int):
    return {
        name: out_dir / f"{name}_{index:06d}.spct" for name in TRIPLE_NAMES
    }


def _generate_triple(matrix, n, counts_scale, seed, index, out_dir):
    paths = _dataset_triple_paths(out_dir, index)
    item_seed = child_seed(seed, index)
    recipe, img = random_phantom(Rng(child_seed(item_seed, 0)), n)
    clean = forward_project(matrix, img)
    noisy = poissonize(clean, NoiseConfig(counts_scale, child_seed(item_seed, 1)))
    save_array(paths["phantom"], img.astype(np.float32))
    save_array(paths["sino_clean"], clean.astype(np.float32))
    save_array(paths["sino_noisy"], noisy.astype(np.float32))
    return paths


def _triple_complete(out_dir: Path, index: int) -> bool:
    for path in _dataset_triple_paths(out_dir, index).values():
        if not path.exists():
            return False
        try:
            load_array(path)
        except Exception:
            return False
    return True


def cmd_dataset(args) -> int:
    started = time.time()
    geom = parse_geometry(args.geom)
    estimated_bytes = args.count * 4 * (geom.n * geom.n + 2 * geom.n_rays)
    if args.count >= LARGE_RUN_ITEMS and not args.confirm_large:
        print(
            f"refusing a {args.count}-item run without --confirm-large "
            f"(estimated {estimated_bytes / 1e9:.1f} GB, well beyond desk scale)",
            file=sys.stderr,
        )
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix = build_system_matrix(geom)

    todo = [i for i in range(args.count) if not _triple_complete(out_dir, i)]
    if args.jobs > 1 and todo:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial

        with ProcessPoolExecutor(
            max_workers=args.jobs,
            initializer=_worker_init,
            initargs=(geom, args.scale, args.seed, str(out_dir)),
        ) as pool:
            list(pool.map(_worker_generate, todo, chunksize=16))
    else:
        for i in todo:
            _generate_triple(matrix, geom.n, args.scale, args.seed, i, out_dir)

    pairs = []
    for i in range(args.count):
        paths = _dataset_triple_paths(out_dir, i)
        pairs.append((str(paths["sino_noisy"]), str(paths["phantom"])))
    DatasetIndex(pairs, split_seed=args.seed).save(out_dir / "index.json")
    _write_manifest(
        out_dir / "manifest.json",
        "dataset",
        {
            "count": args.count,
            "geom": args.geom,
            "scale": args.scale,
            "seed": args.seed,
            "jobs": args.jobs,
        },
        {"out_dir": str(out_dir), "index": str(out_dir / "index.json")},
        started,
    )
    return 0


# Worker-process state for parallel dataset generation: each worker builds
# the system matrix once; items are independent through per-item child seeds,
# so the output is identical for any worker count.
_WORKER_STATE: dict = {}


def _worker_init(geom, scale, seed, out_dir):
    _WORKER_STATE["matrix"] = build_system_matrix(geom)
    _WORKER_STATE["args"] = (geom.n, scale, seed, Path(out_dir))


def _worker_generate(index):
    n, scale, seed, out_dir = _WORKER_STATE["args"]
    return _generate_triple(_WORKER_STATE["matrix"], n, scale, seed, index, out_dir)


def cmd_mlem(args) -> int:
    started = time.time()
    geom = parse_geometry(args.geom)
    matrix = build_system_matrix(geom)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sino = load_array(args.sino).astype(np.float64)
    estimate, state = mlem_reconstruct(matrix, sino, args.iters, args.init)
    save_array(out, estimate.astype(np.float32))
    meta = {
        "iterations": state.iteration,
        "log_likelihood_history": state.log_likelihood_history,
        "init": args.init,
    }
    out.with_suffix(".mlem.json").write_text(json.dumps(meta, indent=1) + "\n")
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "mlem",
        {"geom": args.geom, "iters": args.iters, "init": args.init},
        {"sino": args.sino, "out": str(out)},
        started,
    )
    return 0


def cmd_train(args) -> int:
    started = time.time()
    from .nn import TrainConfig, build_cnnr, train

    index = DatasetIndex.load(args.dataset)
    model = build_cnnr(args.preset, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        train_fraction=args.train_fraction,
        seed=args.seed,
        checkpoint_path=str(out),
    )
    model, history = train(model, index, config)
    history_path = out.with_suffix(".history.json")
    history_path.write_text(json.dumps(history.to_dict(), indent=1) + "\n")
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "train",
        {
            "dataset": args.dataset,
            "preset": args.preset,
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "train_fraction": args.train_fraction,
            "seed": args.seed,
        },
        {"checkpoint": str(out), "history": str(history_path)},
        started,
    )
    return 0


def cmd_infer(args) -> int:
    started = time.time()
    from .nn import cnnr_forward, load_checkpoint

    model = load_checkpoint(args.checkpoint)
    out_paths = []
    sinos = args.sino
    for i, sino_path in enumerate(sinos):
        sino = load_array(sino_path).astype(np.float64)
        img = cnnr_forward(model, sino)
        if len(sinos) == 1:
            out = Path(args.out)
        else:
            out = Path(args.out).with_name(f"{Path(args.out).stem}_{i:06d}.spct")
        out.parent.mkdir(parents=True, exist_ok=True)
        save_array(out, img.astype(np.float32))
        out_paths.append(str(out))
    _write_manifest(
        Path(out_paths[0]).with_suffix(".manifest.json"),
        "infer",
        {"checkpoint": args.checkpoint, "preset": model.preset},
        {"sinos": list(sinos), "outs": out_paths},
        started,
    )
    return 0


def _ssim_config(mode_text: str) -> SsimConfig:
    if mode_text == "global":
        return SsimConfig(mode="global", dynamic_range=1.0)
    if mode_text.startswith("window:"):
        return SsimConfig(mode="window", window=int(mode_text.split(":", 1)[1]), dynamic_range=1.0)
    raise ValueError(f"--ssim-mode must be 'global' or 'window:w', got {mode_text!r}")


def cmd_eval(args) -> int:
    started = time.time()
    ref = load_array(args.ref).astype(np.float64)
    test = load_array(args.test).astype(np.float64)
    report = evaluate_pair(
        ref, test, _ssim_config(args.ssim_mode), metadata={"ref": args.ref, "test": args.test}
    )
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
        _write_manifest(
            Path(args.out).with_suffix(".manifest.json"),
            "eval",
            {"ssim_mode": args.ssim_mode},
            {"ref": args.ref, "test": args.test, "out": args.out},
            started,
        )
    else:
        print(text)
    return 0


def cmd_compare(args) -> int:
    started = time.time()
    truth = load_array(args.truth).astype(np.float64)
    config = _ssim_config(args.ssim_mode)
    rows = []
    panels = [truth]
    for labeled in args.recon:
        label, _, path = labeled.partition("=")
        if not path:
            label, path = Path(labeled).stem, labeled
        recon = load_array(path).astype(np.float64)
        report = evaluate_pair(truth, recon, config, metadata={"method": label, "path": path})
        rows.append(report.to_dict())
        panels.append(recon)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(rows, sort_keys=True, indent=1) + "\n")
    png_path = out.with_suffix(".png")
    _save_png(png_path, panels, float(truth.min()), float(truth.max()))
    _write_manifest(
        out.with_suffix(".manifest.json"),
        "compare",
        {"ssim_mode": args.ssim_mode, "methods": list(args.recon)},
        {"truth": args.truth, "report": str(out), "montage": str(png_path)},
        started,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowspect",
        description="Low-projection SPECT simulation and reconstruction pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a phantom image (SPCT + recipe JSON)")
    p.add_argument("--kind", choices=["random", "shepp-logan"], default="random")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--variant", choices=["original", "modified"], default="modified")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="forward-project an image to a sinogram")
    p.add_argument("--geom", required=True, help="n=128,angles=24,bins=128,arc=360")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("noise", help="apply Poisson noise to a sinogram")
    p.add_argument("--sino", required=True)
    p.add_argument("--scale", type=float, required=True, help="intensity-to-counts multiplier")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("dataset", help="generate (phantom, clean, noisy) training triples")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--geom", required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--confirm-large", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("mlem", help="MLEM reconstruction of a sinogram")
    p.add_argument("--geom", required=True)
    p.add_argument("--sino", required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--init", type=float, default=None, help="uniform start value")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mlem)

    p = sub.add_parser("train", help="train the CNN reconstructor on a dataset")
    p.add_argument("--dataset", required=True, help="path to index.json")
    p.add_argument("--preset", choices=["desk-64", "paper-128"], default="desk-64")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path (SPCK)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="CNN reconstruction of sinograms")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sino", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metrics for a (reference, test) image pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--ssim-mode", default="window:8")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="JSON report + PNG montage for reconstructions")
    p.add_argument("--truth", required=True)
    p.add_argument("--recon", nargs="+", required=True, help="label=path entries")
    p.add_argument("--ssim-mode", default="window:8")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a clean one-line error, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
