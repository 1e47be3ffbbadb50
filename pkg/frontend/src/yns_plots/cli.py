"""yns-plots --spec <json>: render one figure from primary-run artifacts."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .figures import FigureSpecError, RenderError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="yns-plots",
        description="Render a static figure from yns CSV/JSON artifacts",
    )
    parser.add_argument("--spec", required=True, help="figure spec JSON path")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        spec = json.loads(Path(args.spec).read_text())
    except OSError as err:
        sys.stderr.write(f"cannot read spec: {err}\n")
        return 2
    except json.JSONDecodeError as err:
        sys.stderr.write(f"spec is not valid JSON: {err}\n")
        return 2

    try:
        result = render(spec)
    except FigureSpecError as err:
        sys.stderr.write(f"bad figure spec: {err}\n")
        return 2
    except RenderError as err:
        sys.stderr.write(f"render failed: {err}\n")
        return 3

    for w in result.warnings:
        sys.stderr.write(f"warning: {w}\n")
    if args.verbose:
        print(json.dumps({"path": result.path, "kind": result.kind,
                          "annotations": result.annotations}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
