"""plotkit <kind> --in CSV[,CSV...] [--labels L[,L...]] --out PATH"""

from __future__ import annotations

import argparse
import logging
import sys

from .figures import KINDS, FigureSpec, SchemaError, render

logger = logging.getLogger(__name__)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit", description="Render figures from memlqr CSV outputs."
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument(
        "--in", dest="inputs", required=True,
        help="comma-separated input CSV paths",
    )
    parser.add_argument(
        "--labels", default="", help="comma-separated curve labels"
    )
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    spec = FigureSpec(
        kind=args.kind,
        inputs=tuple(p for p in args.inputs.split(",") if p),
        output=args.out,
        labels=tuple(l for l in args.labels.split(",") if l),
    )
    try:
        path = render(spec)
    except (SchemaError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
