"""plot-cdf entry point."""
from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, render_cdf_figure


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-cdf",
        description="Render a CDF figure from a simulation cdf.csv table.",
    )
    parser.add_argument("--in", dest="input_path", required=True,
                        help="cdf.csv produced by the simulation harness")
    parser.add_argument("--quantity", choices=("link-rate", "system-utility"),
                        default="link-rate")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="output image path (png)")
    parser.add_argument("--title", default="")
    parser.add_argument("--log-x", action="store_true",
                        help="logarithmic rate axis")
    args = parser.parse_args(argv)
    try:
        render_cdf_figure(FigureSpec(
            input_path=args.input_path,
            quantity=args.quantity,
            output_path=args.output_path,
            title=args.title,
            log_x=args.log_x,
        ))
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
