"""CLI: plotkit plot --spec figure.json --out dir"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpecError, load_spec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plot")
    p.add_argument("--spec", required=True, help="figure spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    try:
        meta = render(load_spec(args.spec), args.out)
    except FigureSpecError as exc:
        print(f"figure spec error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {meta['png']} and {meta['svg']} ({meta['points']} points)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
