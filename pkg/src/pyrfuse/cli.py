"""Command-line interface: ``pyrfuse <command> --flag value ...``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import fusenet, metrics, raster
from .errors import ConfigError, PyrfuseError
from .fusion import fuse
from .raster import RasterImage, load_mbr, save_mbr
from .training import load_config, simulate_reduced, train

log = logging.getLogger("pyrfuse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _need_file(args, flag: str) -> Path:
    path = Path(getattr(args, flag.lstrip("-").replace("-", "_")))
    if not path.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return path


def _need_out(args, flag: str) -> Path:
    path = Path(getattr(args, flag.lstrip("-").replace("-", "_")))
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir():
        raise UsageError(f"{flag}: directory {parent} does not exist")
    return path


def _crop_pair(pan: RasterImage, ms: RasterImage, ratio: int, multiple: int) -> tuple:
    """Check the PAN/MS ratio, then crop both to the largest size divisible by ``multiple`` at MS scale."""
    if (pan.height, pan.width) != (ms.height * ratio, ms.width * ratio):
        raise UsageError(
            f"pan {pan.width}x{pan.height} must be exactly {ratio}x ms {ms.width}x{ms.height}"
        )
    h = ms.height - ms.height % multiple
    w = ms.width - ms.width % multiple
    if h == 0 or w == 0:
        raise UsageError(f"ms {ms.width}x{ms.height} is too small (need multiples of {multiple})")
    if (h, w) != (ms.height, ms.width):
        log.info("cropping ms to %dx%d and pan to %dx%d", w, h, w * ratio, h * ratio)
    return pan.crop(h * ratio, w * ratio), ms.crop(h, w)


def cmd_simulate(args) -> int:
    pan_path, ms_path = _need_file(args, "--pan"), _need_file(args, "--ms")
    out_dir = Path(args.out_dir)
    if not out_dir.is_dir():
        raise UsageError(f"--out-dir: not a directory: {out_dir}")
    pan, ms = load_mbr(pan_path), load_mbr(ms_path)
    pan, ms = _crop_pair(pan, ms, 4, 4)
    pan_lr, ms_lr, gt = simulate_reduced(pan.data, ms.data, 4)
    save_mbr(RasterImage(pan_lr, pan.radiometric_max), out_dir / "pan_lr.mbr")
    save_mbr(RasterImage(ms_lr, ms.radiometric_max), out_dir / "ms_lr.mbr")
    save_mbr(RasterImage(gt, ms.radiometric_max), out_dir / "gt.mbr")
    print(f"wrote {out_dir / 'pan_lr.mbr'} ({pan_lr.shape[2]}x{pan_lr.shape[1]}), "
          f"ms_lr.mbr ({ms_lr.shape[2]}x{ms_lr.shape[1]}), gt.mbr ({gt.shape[2]}x{gt.shape[1]})")
    return EXIT_OK


def read_data_list(path: Path) -> list:
    """``pan_path ms_path`` per line (whitespace or comma separated), relative to the list file."""
    pairs = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        if len(fields) != 2:
            raise UsageError(f"--data-list line {lineno}: expected 'pan_path ms_path', got {raw!r}")
        resolved = []
        for f in fields:
            p = Path(f) if os.path.isabs(f) else path.parent / f
            if not p.is_file():
                raise UsageError(f"--data-list line {lineno}: no such file: {p}")
            resolved.append(p)
        pairs.append(tuple(resolved))
    if not pairs:
        raise UsageError(f"--data-list: {path} lists no image pairs")
    return pairs


def cmd_train(args) -> int:
    config_path, list_path = _need_file(args, "--config"), _need_file(args, "--data-list")
    ck, loss_log = _need_out(args, "--out-checkpoint"), _need_out(args, "--loss-log")
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        raise UsageError(f"--config: {exc}") from None
    pairs = read_data_list(list_path)
    images = []
    for pan_path, ms_path in pairs:
        pan, ms = _crop_pair(load_mbr(pan_path), load_mbr(ms_path), cfg.ratio, cfg.ratio)
        images.append((pan.data, ms.data))
    result = train(images, cfg, ck, loss_log, progress_every=args.log_every)
    if result.losses:
        print(f"trained {cfg.iterations} iterations, final loss {result.losses[-1]:.6g}")
    print(f"wrote {ck} and {loss_log}")
    return EXIT_OK


def _parse_bands(text: str) -> tuple:
    try:
        bands = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--bands: expected r,g,b band indices, got {text!r}") from None
    if len(bands) != 3:
        raise UsageError(f"--bands: expected three indices, got {text!r}")
    return bands


def cmd_fuse(args) -> int:
    pan_path, ms_path = _need_file(args, "--pan"), _need_file(args, "--ms")
    ck_path = _need_file(args, "--checkpoint")
    out = _need_out(args, "--out")
    bands = None
    if args.preview:
        _need_out(args, "--preview")
        bands = _parse_bands(args.bands)
    params = fusenet.load_checkpoint(ck_path)
    pan, ms = load_mbr(pan_path), load_mbr(ms_path)
    if ms.bands != params.bands:
        raise raster.FormatError(f"checkpoint expects {params.bands} bands, {ms_path} has {ms.bands}")
    if bands is not None:
        for b in bands:
            if not 0 <= b < ms.bands:
                raise IndexError(f"--bands: index {b} out of range for {ms.bands}-band image")
    ratio = 2**args.levels
    pan, ms = _crop_pair(pan, ms, ratio, 1)
    fused = fuse(pan.data, ms.data, params, args.levels).final_image()
    if not np.all(np.isfinite(fused)):
        raise FloatingPointError("fused output contains non-finite values")
    img = RasterImage(fused, ms.radiometric_max)
    save_mbr(img, out)
    print(f"wrote {out} ({img.width}x{img.height}, {img.bands} bands)")
    if bands is not None:
        Path(args.preview).write_bytes(raster.export_ppm(img, bands))
        print(f"wrote {args.preview}")
    return EXIT_OK


def _write_report(report: metrics.MetricsReport, args) -> None:
    Path(args.out).write_text(report.to_csv())
    if args.markdown:
        Path(args.markdown).write_text(report.to_markdown(args.label))
    for k, v in report.values.items():
        print(f"{k:>9} {v:.6f}")


def cmd_eval_reduced(args) -> int:
    fused_path, gt_path = _need_file(args, "--fused"), _need_file(args, "--gt")
    _need_out(args, "--out")
    report = metrics.evaluate_reduced(load_mbr(fused_path).data, load_mbr(gt_path).data, args.window)
    _write_report(report, args)
    return EXIT_OK


def cmd_eval_full(args) -> int:
    paths = [_need_file(args, f) for f in ("--fused", "--ms", "--pan")]
    _need_out(args, "--out")
    fused, ms, pan = (load_mbr(p).data for p in paths)
    report = metrics.evaluate_full(fused, ms, pan, args.window)
    _write_report(report, args)
    return EXIT_OK


def describe_file(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(24)
    if head[:4] == raster.MBR_MAGIC:
        width, height, bands, code, rmax = raster.read_mbr_header(head)
        dtype = "u16" if code == raster.DTYPE_U16 else "f32"
        return f"{width}x{height}, {bands} bands, {dtype}, max {rmax:g}"
    if head[:4] == fusenet.FNET_MAGIC:
        params = fusenet.load_checkpoint(path)
        return f"FuseNet checkpoint: B={params.bands}, K={params.blocks}, {params.parameter_count} parameters"
    raise raster.FormatError(f"unknown magic {head[:4]!r} in {path}")


def cmd_info(args) -> int:
    print(describe_file(_need_file(args, "--file")))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pyrfuse", description="Pyramid deep pansharpening toolkit")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Wald-protocol reduced-scale triple from a full-scale pair")
    p.add_argument("--pan", required=True)
    p.add_argument("--ms", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a FuseNet checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--data-list", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--loss-log", required=True)
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="pansharpen with a checkpoint")
    p.add_argument("--pan", required=True)
    p.add_argument("--ms", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preview")
    p.add_argument("--bands", default="4,2,1", help="r,g,b band indices for --preview")
    p.add_argument("--levels", type=int, default=2)
    p.set_defaults(func=cmd_fuse)

    for name, func, flags in (
        ("eval-reduced", cmd_eval_reduced, ("--fused", "--gt")),
        ("eval-full", cmd_eval_full, ("--fused", "--ms", "--pan")),
    ):
        p = sub.add_parser(name, help=f"{name.split('-')[1]}-scale quality metrics")
        for flag in flags:
            p.add_argument(flag, required=True)
        p.add_argument("--out", required=True, help="CSV report path")
        p.add_argument("--markdown", help="also write a Markdown table")
        p.add_argument("--label", default="Proposed")
        p.add_argument("--window", type=int, default=metrics.Q_WINDOW)
        p.set_defaults(func=func)

    p = sub.add_parser("info", help="describe an MBR image or FNET checkpoint")
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(f"pyrfuse: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"pyrfuse: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PyrfuseError, IndexError, OSError) as exc:
        print(f"pyrfuse: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
