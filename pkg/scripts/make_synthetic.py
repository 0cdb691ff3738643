"""Write synthetic full-scale PAN/MS pairs as MBR files plus a data list for ``pyrfuse train``.

    python3 scripts/make_synthetic.py --out-dir data --count 8 --size 128
    pyrfuse train --config train.cfg --data-list data/list.txt --out-checkpoint net.fnet --loss-log loss.csv
"""

import argparse
from pathlib import Path

from pyrfuse.raster import RasterImage, save_mbr
from pyrfuse.synthetic import make_scenes


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", required=True, type=Path)
    parser.add_argument("--count", type=int, default=8)
    parser.add_argument("--size", type=int, default=128, help="PAN side length")
    parser.add_argument("--bands", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dtype", choices=("u16", "f32"), default="u16")
    parser.add_argument("--radiometric-max", type=float, default=2047.0)
    args = parser.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, scene in enumerate(make_scenes(args.count, args.size, args.bands, args.seed)):
        pan, ms, truth = (f"scene{i:03d}_{k}.mbr" for k in ("pan", "ms", "truth"))
        save_mbr(RasterImage(scene.pan, args.radiometric_max), args.out_dir / pan, args.dtype)
        save_mbr(RasterImage(scene.ms, args.radiometric_max), args.out_dir / ms, args.dtype)
        save_mbr(RasterImage(scene.truth, args.radiometric_max), args.out_dir / truth, args.dtype)
        lines.append(f"{pan} {ms}")
    (args.out_dir / "list.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {args.count} scenes and {args.out_dir / 'list.txt'}")


if __name__ == "__main__":
    main()
