"""Command line entry points: ``partition``, ``run`` and ``bench``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

log = logging.getLogger("jetles")


def _mesh(text):
    from .io import _parse_mesh

    try:
        return _parse_mesh(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_partition(args) -> int:
    from .core import generate_jet_grid
    from .partition import build_map, partition_grid

    nxi, neta, nzeta = args.mesh
    pmap = build_map(nxi, nzeta, args.npx, args.npz)
    grid = generate_jet_grid(nxi, neta, nzeta, args.length, args.height)
    paths = partition_grid(grid, pmap, args.out)
    print(f"wrote {len(paths)} grid container(s) and partition.map to {args.out}")
    return 0


def cmd_run(args) -> int:
    from .boundary import jet_boundaries
    from .core import generate_jet_grid
    from .diagnostics import PotentialCore
    from .io import load_config
    from .physics import jet_state
    from .runner import run_from_grid_dir, run_partitioned

    cfg, params = load_config(args.config)
    out = Path(args.out or params.output)
    bset = jet_boundaries(cfg)
    if params.grid_dir:
        res = run_from_grid_dir(params.grid_dir, cfg, bset, params.steps, exchange=params.exchange,
                                output_dir=out, snapshot_interval=params.snapshot_interval)
        xyz = None
    else:
        grid = generate_jet_grid(*params.mesh, params.length, params.height)
        res = run_partitioned(grid, cfg, bset, params.npx, params.npz, params.steps,
                              exchange=params.exchange, output_dir=out,
                              snapshot_interval=params.snapshot_interval)
        xyz = grid.xyz
    print(f"completed {res.iterations} iteration(s) on {res.pmap.size} rank(s); snapshots in {out}")
    if xyz is not None:
        core = PotentialCore.from_state(res.q, xyz, jet_state(cfg).u[0])
        print(f"potential core: present={core.present} contiguous={core.contiguous} "
              f"length={core.length:.3f}")
    return 0


def cmd_bench(args) -> int:
    from .bench import emit_report, parse_plan, run_plan
    from .core import FlowConfig

    plan = parse_plan(Path(args.plan).read_text())
    st = plan.settings
    cfg = FlowConfig(mach_jet=st.get("mach", 1.4), dt=st.get("dt", 0.01),
                     reynolds=st.get("reynolds", 1.5744e6))
    report = run_plan(plan, cfg, mode=args.mode)
    paths = emit_report(report, args.out)
    for w in report.warnings:
        print(f"warning: {w}")
    print(f"wrote {len(paths)} file(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jetles", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="split a jet grid into per-rank containers")
    p.add_argument("--mesh", type=_mesh, required=True, help="NXIxNETAxNZETA, e.g. 64x64x37")
    p.add_argument("--npx", type=int, required=True)
    p.add_argument("--npz", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--length", type=float, default=30.0)
    p.add_argument("--height", type=float, default=10.0)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("run", help="run the solver from a key = value configuration file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides the file)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="strong or weak scaling campaign")
    p.add_argument("mode", choices=("strong", "weak"))
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report and exit nonzero
        print(f"jetles {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
