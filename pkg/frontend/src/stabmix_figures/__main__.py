"""CLI: python -m stabmix_figures <kind> --csv <glob> --out <path>."""

import argparse

from .figures import FIGURE_KINDS, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stabmix_figures",
        description="render figures from stabmix experiment CSV files")
    parser.add_argument("kind", choices=sorted(FIGURE_KINDS))
    parser.add_argument("--csv", required=True,
                        help="glob pattern of input CSV files")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    path = render(args.kind, args.csv, args.out, title=args.title)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
