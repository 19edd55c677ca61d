"""render --kind KIND --in DIR --out FILE"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FIGURE_KINDS, FigureSpec, RenderError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render experiment figures from banditlab CSV artifacts",
    )
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS,
                        help="figure kind to render")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="run directory holding effects.csv / buckets.csv")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--phase-boundary", type=int, default=None,
                        help="day index where phase 2 starts "
                             "(default: inferred from effects.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, in_dir=Path(args.in_dir),
                      out_path=Path(args.out),
                      phase_boundary=args.phase_boundary)
    try:
        path = render(spec)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
