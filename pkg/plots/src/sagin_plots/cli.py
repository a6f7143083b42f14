"""plot --kind K --in PATHS --out FILE [--window N]

Exit codes: 0 success, 2 bad arguments/schema, 1 render failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import CSV_KINDS, KINDS, FigureSpec, render
from .io import SchemaError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plot",
        description="Render figures from sagin-sched run outputs")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--in", dest="inputs", required=True, nargs="+",
                   help="metrics.csv paths (reward/profit-time/clusters) or "
                        "run.json paths (aggregate kinds)")
    p.add_argument("--out", required=True, help="output image file")
    p.add_argument("--window", type=int, default=1,
                   help="trailing moving-average window (reward curves)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = Path(args.out).suffix.lstrip(".") or "png"
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                          window=args.window, image_format=fmt)
    except (ValueError, FileNotFoundError) as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return 2
    try:
        render(spec)
    except (SchemaError, FileNotFoundError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"render failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
