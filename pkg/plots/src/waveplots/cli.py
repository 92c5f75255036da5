"""waveplots: render figures from actionwave artifact directories."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureSpec, SchemaError, render

# default wiring of figure kinds to files of a `run` artifact directory
RUN_FILES = {
    "heatmap": {"field": "field_kernel.csv"},
    "profile": {"profile": "bohm_profile.csv"},
    "convergence": {"table": "convergence.csv"},
    "collapse": {"clock": "clock.csv", "summary": "collapse.json"},
}


def render_run(run_dir, out_dir=None) -> list[Path]:
    """Render all four figure kinds from a completed run directory."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "figures"
    written = []
    for kind, files in RUN_FILES.items():
        inputs = {key: str(run_dir / name) for key, name in files.items()}
        spec = FigureSpec(kind=kind, inputs=inputs,
                          output=str(out_dir / f"{kind}.png"))
        written.append(render(spec))
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="waveplots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one figure from a spec")
    p_render.add_argument("--spec", required=True, help="figure spec JSON")
    p_all = sub.add_parser("render-run",
                           help="render all four kinds from a run directory")
    p_all.add_argument("run_dir")
    p_all.add_argument("--out-dir")
    args = parser.parse_args(argv)
    try:
        if args.command == "render":
            out = render(FigureSpec.from_json(args.spec))
            print(out)
        else:
            for path in render_run(args.run_dir, args.out_dir):
                print(path)
    except (SchemaError, OSError, KeyError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
