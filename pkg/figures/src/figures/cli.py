"""figures <kind> --in a.csv[,b.csv...] --out fig.png [--l-train 10]"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figures")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", required=True,
                        help="comma-separated input CSV paths")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--l-train", type=int, default=None,
                        help="upper bound of the shaded training range")
    parser.add_argument("--labels", default=None, help="comma-separated series labels")
    parser.add_argument("--y-scale", choices=("linear", "log"), default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = PlotSpec(
            kind=args.kind,
            inputs=[Path(p) for p in args.inputs.split(",") if p],
            output=Path(args.out),
            l_train=args.l_train,
            labels=[s for s in args.labels.split(",")] if args.labels else [],
            y_scale=args.y_scale,
        )
        render(spec)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
