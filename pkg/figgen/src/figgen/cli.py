"""Command line wrapper: ``figgen <spec.json>``."""

import argparse
import sys

from .render import SchemaError, SpecError, load_spec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figgen",
        description="render a vinestep CSV into PNG and SVG figures",
    )
    parser.add_argument("spec", help="path to a JSON figure spec")
    args = parser.parse_args(argv)
    try:
        png, svg = render(load_spec(args.spec))
    except (SpecError, SchemaError) as exc:
        print(f"figgen: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {png}")
    print(f"wrote {svg}")
    return 0


def entry() -> None:
    sys.exit(main())
