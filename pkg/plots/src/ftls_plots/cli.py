"""Command line: recipe path in, image path out.

Exit codes: 0 success, 2 invalid recipe or input data (missing files,
missing columns, malformed JSON).
"""

from __future__ import annotations

import argparse
import sys

from .recipes import RecipeError, load_recipe
from .render import render

EXIT_OK = 0
EXIT_INVALID = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftls-plots",
        description="Render one figure from CSV artifacts per a JSON recipe.",
    )
    parser.add_argument("recipe", help="figure recipe JSON")
    parser.add_argument("output", help="output image path (png, svg, pdf)")
    parser.add_argument("--data-dir", default=None,
                        help="directory against which relative input paths "
                             "resolve (default: the recipe's directory)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        recipe = load_recipe(args.recipe, data_dir=args.data_dir)
        render(recipe, args.output)
    except RecipeError as e:
        for p in e.problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(args.output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
