"""``orbit-llie`` command line.

Exit codes: 0 success, 1 usage error, 2 unreadable or invalid data,
3 numeric failure. Every random choice is driven by ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import trainer
from .config import fill_dataclass, read_config
from .denoiser import Denoiser
from .diffusion import cosine_schedule
from .errors import ContractError, DataError, NumericError, WorkspaceError
from .imaging import (
    ManifestEntry,
    demosaic_bilinear,
    load_float,
    load_pairs,
    read_bayer,
    read_image,
    rgb_to_gray,
    save_float,
    write_image,
    write_manifest,
)
from .metrics import format_table, mean_scores, score
from .posegen import ArmSetup, Strata, build_workspace, random_sample, spin_capture_poses, stratified_sample
from .posegen.workspace import read_workspace, write_projections, write_workspace
from .spectral import DEFAULT_CUTOFF, DEFAULT_LAMBDA, fag

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
MANIFEST = "manifest.tsv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _int_triple(text: str):
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three integers like 3,6,3, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three integers like 3,6,3, got {text!r}")
    return parts


# -- subcommands ------------------------------------------------------------

def cmd_demosaic(args) -> None:
    bayer = read_bayer(args.input, tuple(args.offset))
    rgb = demosaic_bilinear(bayer)
    write_image(args.output, np.rint(rgb * bayer.maxval).astype(np.uint16), bayer.maxval)


def cmd_fag(args) -> None:
    img = load_float(args.input)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    _, maxval = read_image(args.input)
    reference = None if args.absolute_cutoff else 256
    save_float(args.output, fag(img, args.lam, args.cutoff, reference), maxval)


def cmd_schedule_dump(args) -> None:
    sched = cosine_schedule(args.T, args.offset)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t", "beta", "alpha", "gamma"))
    for t, b, a, g in sched.rows():
        w.writerow((t, repr(float(b)), repr(float(a)), repr(float(g))))
    _emit(buf.getvalue(), args.out)


def cmd_synth_data(args) -> None:
    root = Path(args.dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    pairs = trainer.synth_dataset(args.n, args.seed, size=args.size)
    for i, pair in enumerate(pairs):
        low, high = f"low_{i:04d}.pgm", f"high_{i:04d}.pgm"
        save_float(root / low, pair.low)
        save_float(root / high, pair.high)
        entries.append(ManifestEntry(low, high, 0, "156us"))
    write_manifest(root / MANIFEST, entries)


def _manifest_in(data_dir) -> Path:
    path = Path(data_dir)
    return path if path.is_file() else path / MANIFEST


def cmd_train(args) -> None:
    net_cfg, run_cfg = trainer.split_run_config(read_config(args.config))
    if args.seed is not None:
        run_cfg = replace(run_cfg, seed=args.seed)
    pairs = load_pairs(_manifest_in(args.data_dir))
    net = Denoiser(net_cfg, rng=np.random.default_rng(run_cfg.seed))
    log = (lambda row: print(f"epoch {row.epoch} lr {row.lr:.3e} train {row.train_loss:.5f} val {row.val_loss:.5f}",
                             file=sys.stderr)) if args.verbose else None
    prefix = args.output if run_cfg.checkpoint_every else None
    result = trainer.train(net, run_cfg, pairs, log=log, checkpoint_prefix=prefix)
    trainer.save_denoiser(args.output, net)
    trainer.write_curve(args.curve or f"{args.output}.curve.csv", result.curve)


def cmd_enhance(args) -> None:
    net = trainer.load_denoiser(args.checkpoint)
    low = load_float(args.input)
    if low.ndim == 3:
        low = rgb_to_gray(low)
    noise = cosine_schedule(args.T, args.offset)
    out = trainer.enhance(net, low[None], noise, args.seed, clip_denoised=not args.no_clip)[0]
    if not np.all(np.isfinite(out)):
        raise NumericError("enhanced image contains non-finite values")
    save_float(args.output, out)


def _gray(path) -> np.ndarray:
    img = load_float(path)
    return rgb_to_gray(img) if img.ndim == 3 else img


def cmd_metrics(args) -> None:
    if args.manifest:
        pairs = load_pairs(args.manifest)
        rows = [(p.meta["low"], score(p.low, p.high)) for p in pairs]
        rows.append(("mean", mean_scores(s for _, s in rows)))
        _emit(format_table(rows, label="image"), args.out)
        return
    if len(args.images) != 2:
        raise UsageError("metrics: give two images or --manifest")
    _emit(format_table([(Path(args.images[0]).name, score(_gray(args.images[0]), _gray(args.images[1])))],
                       label="image"), args.out)


def _setup(path) -> ArmSetup:
    return fill_dataclass(ArmSetup, read_config(path))


def cmd_workspace(args) -> None:
    setup = _setup(args.config)
    ws = build_workspace(setup.scene(), args.candidates, setup.home, setup.camera_pose(), seed=args.seed,
                         keep_trajectories=False)
    write_workspace(args.out, ws.records)
    for reason, count in ws.histogram.items():
        print(f"{reason}: {count}", file=sys.stderr)


def cmd_workspace_plot(args) -> None:
    setup = _setup(args.config)
    write_projections(args.out, setup.chain(), read_workspace(args.workspace))


def cmd_sample_poses(args) -> None:
    records = [r for r in read_workspace(args.workspace) if r.feasible]
    if not records:
        raise DataError(f"{args.workspace}: no feasible poses")
    rng = np.random.default_rng(args.seed)
    if args.method == "stratified":
        picked = stratified_sample(records, args.bins, args.k, rng)
    else:
        picked = random_sample(records, args.k, rng)
    strata = Strata.fit(records, args.bins)
    chain = _setup(args.config).chain() if args.config else None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("pick", "shot", "q1", "q2", "q3", "q4", "q5", "q6", "r", "az", "el", "stratum"))
    for i, rec in enumerate(picked):
        label = "-".join(str(k) for k in strata.index(rec))
        shots = spin_capture_poses(rec, chain) if args.spin else [rec.q]
        for j, q in enumerate(shots):
            w.writerow([i, j] + [repr(float(v)) for v in q] + [repr(rec.r), repr(rec.azimuth), repr(rec.elevation), label])
    _emit(buf.getvalue(), args.out)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orbit-llie", description="Low-light enhancement and pose-sampling toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("demosaic", help="bilinear demosaic of an RGGB PGM into a PPM")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--offset", type=int, nargs=2, default=(0, 0), metavar=("DY", "DX"))
    s.set_defaults(func=cmd_demosaic)

    s = sub.add_parser("fag", help="frequency-aware guidance map of an image")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    s.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF)
    s.add_argument("--absolute-cutoff", action="store_true", help="use the cutoff as a raw bin radius")
    s.set_defaults(func=cmd_fag)

    s = sub.add_parser("schedule-dump", help="noise schedule as CSV")
    s.add_argument("--T", type=int, default=2000)
    s.add_argument("--offset", type=float, default=0.008)
    s.add_argument("--out")
    s.set_defaults(func=cmd_schedule_dump)

    s = sub.add_parser("synth-data", help="write synthetic paired scenes and a manifest")
    s.add_argument("dir")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=32)
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train", help="train a denoiser")
    s.add_argument("config")
    s.add_argument("data_dir")
    s.add_argument("output")
    s.add_argument("--seed", type=int, help="overrides the config seed")
    s.add_argument("--curve", help="loss/LR CSV (default: <output>.curve.csv)")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("enhance", help="enhance one low-light image")
    s.add_argument("checkpoint")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--T", type=int, default=2000)
    s.add_argument("--offset", type=float, default=0.008)
    s.add_argument("--no-clip", action="store_true", help="sample without clipping clean-image estimates")
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("metrics", help="PSNR/SSIM/FSIM of an image pair or a manifest")
    s.add_argument("images", nargs="*")
    s.add_argument("--manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("workspace", help="build the collision-free workspace")
    s.add_argument("config")
    s.add_argument("--candidates", type=int, default=500)
    s.add_argument("--seed", type=int, default=0, help="Halton index offset")
    s.add_argument("--out", default="workspace.csv")
    s.set_defaults(func=cmd_workspace)

    s = sub.add_parser("workspace-plot", help="x-z and y-z projections of feasible poses as CSV")
    s.add_argument("workspace")
    s.add_argument("config")
    s.add_argument("out")
    s.set_defaults(func=cmd_workspace_plot)

    s = sub.add_parser("sample-poses", help="pick capture poses from a workspace CSV")
    s.add_argument("workspace")
    s.add_argument("--bins", type=_int_triple, default=(3, 6, 3))
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=("stratified", "random"), default="stratified")
    s.add_argument("--spin", action="store_true", help="expand each pick into its 36 spin shots")
    s.add_argument("--config", help="arm setup whose limits the spin shots are wrapped into")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample_poses)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ContractError, WorkspaceError, OSError) as exc:
        print(f"error: {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
