"""Command line entry point.

    solver run <config|preset> -o DIR [--force] [--scheme S] [--dt X]
               [--snapshot-stride N] [--duration T]
    solver report FILES... [--csv PATH]
    solver presets

Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import output
from .config import ConfigError, dump_config, parse_config
from .geometry import GeometryError
from .scenarios import (PRESETS, SCHEMES, EventTimeline, ScenarioConfig, default_material,
                        preset, windowed_increments)
from .simulation import build_model, run_model
from .timeintegration import SolverError

log = logging.getLogger("vibrofcm")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def load_config(source: str) -> ScenarioConfig:
    if source in PRESETS:
        return preset(source)
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {source!r}: {exc.strerror or exc}", EXIT_IO) from None
    return parse_config(text)


def _prepare_dir(path: Path, force: bool):
    if path.exists() and not path.is_dir():
        raise CliError(f"output path {str(path)!r} is not a directory", EXIT_IO)
    if path.is_dir() and any(path.iterdir()) and not force:
        raise CliError(f"output directory {str(path)!r} is not empty (use --force)", EXIT_IO)
    path.mkdir(parents=True, exist_ok=True)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.scheme:
        cfg = replace(cfg, scheme=args.scheme)
    if args.dt is not None:
        if not args.dt > 0:
            raise ConfigError(["validation: time.dt must be positive"])
        cfg = replace(cfg, dt=args.dt)
    if args.duration is not None:
        if not args.duration > 0:
            raise ConfigError(["validation: time.duration must be positive"])
        cfg = replace(cfg, duration=args.duration)
    if args.snapshot_stride is not None:
        if args.snapshot_stride < 0:
            raise ConfigError(["validation: output.snapshot_stride must be >= 0"])
        cfg = replace(cfg, snapshot_stride=args.snapshot_stride)

    out = Path(args.output)
    _prepare_dir(out, args.force)

    model = build_model(cfg)
    callback = None
    if cfg.snapshot_stride:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        sampler = output.SnapshotSampler(model.grid_s, model.grid_f, cfg.material.rho_f)

        def callback(n, t, u, v):
            output.write_snapshot(snap_dir / f"snapshot_{n:07d}.vtk", sampler, n, t, u, v)

    records = run_model(model, callback=callback)
    output.write_observers(out / "observers.csv", records)
    written = ["observers.csv"]
    if "sender" in records.groups or "receiver" in records.groups:
        output.write_rt_measures(out / "rt_measures.csv", records)
        written.append("rt_measures.csv")
    output.write_manifest(
        out / "run_manifest.json", dump_config(cfg),
        {"structure": model.grid_s.n_dofs, "fluid": model.grid_f.n_dofs,
         "total": model.grid_s.n_dofs + model.grid_f.n_dofs},
        model.timings,
        {"scenario": cfg.name, "scheme": cfg.scheme, "n_steps": records.meta["n_steps"],
         "interface_segments": model.n_segments, "files": written})
    print(f"{cfg.name}: {records.meta['n_steps']} steps, wrote {', '.join(written)} to {out}")
    return EXIT_OK


def _timeline_for(path: Path, c, length):
    manifest = path.parent / "run_manifest.json"
    name = path.parent.name or path.stem
    if manifest.is_file():
        doc = json.loads(manifest.read_text(encoding="utf-8"))
        cfg = parse_config(doc["config"])
        name = cfg.name
        if c is None:
            c = cfg.material.c
        if length is None:
            length = cfg.length
    if c is None:
        c = default_material().c
    if length is None:
        length = preset("tube-v1").length
    return name, EventTimeline(c, length)


def report_rows(paths, c=None, length=None):
    rows = []
    axis = None
    for p in paths:
        p = Path(p)
        try:
            header, data = output.read_csv(p)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read {str(p)!r}: {exc}", EXIT_IO) from None
        if header[:3] != ["t", "P_ref", "P_tra"]:
            raise CliError(f"{str(p)!r} is not an rt_measures file", EXIT_INVALID)
        t = data[:, 0]
        if axis is None:
            axis = t
        elif len(t) != len(axis) or not np.array_equal(t, axis):
            raise CliError("incompatible time axes", EXIT_INVALID)
        name, timeline = _timeline_for(p, c, length)
        d_ref, d_tra = windowed_increments(t, data[:, 1], data[:, 2], timeline)
        rows.append((name, d_ref, d_tra, data[-1, 1], data[-1, 2]))
    return rows


REPORT_HEADER = ("scenario", "reflectance_BD", "transmittance_CF", "P_ref_final", "P_tra_final")


def format_table(rows) -> str:
    cells = [REPORT_HEADER] + [(r[0],) + tuple("%.6e" % v for v in r[1:]) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(REPORT_HEADER))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(v.ljust(widths[0]) if i == 0 else v.rjust(widths[i])
                               for i, v in enumerate(row)))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(rows) -> str:
    lines = [",".join(REPORT_HEADER)]
    for r in rows:
        lines.append(",".join([r[0]] + [output.fmt(v) for v in r[1:]]))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    rows = report_rows(args.files, args.c, args.length)
    sys.stdout.write(format_table(rows))
    if args.csv:
        output.atomic_write(args.csv, format_csv(rows))
    else:
        sys.stdout.write("\n" + format_csv(rows))
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in PRESETS:
        cfg = preset(name)
        print(f"{name:10s} {cfg.fluid_grid.cells[0]}x{cfg.fluid_grid.cells[1]} cells, "
              f"p={cfg.fluid_grid.degree}, dt={cfg.dt:g}, T={cfg.duration:g}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="solver", description=__doc__.split("\n")[0] or None)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("config", help="config file or preset name")
    run.add_argument("-o", "--output", required=True, help="output directory")
    run.add_argument("--force", action="store_true", help="overwrite a non-empty directory")
    run.add_argument("--scheme", choices=SCHEMES)
    run.add_argument("--dt", type=float)
    run.add_argument("--duration", type=float, help="override the simulated time span")
    run.add_argument("--snapshot-stride", type=int, dest="snapshot_stride")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="compare rt_measures.csv files")
    rep.add_argument("files", nargs="+")
    rep.add_argument("--csv", help="write the CSV table here instead of stdout")
    rep.add_argument("--c", type=float, help="fluid sound speed for the event windows")
    rep.add_argument("--length", type=float, help="reference length L for the event windows")
    rep.set_defaults(func=cmd_report)

    pre = sub.add_parser("presets", help="list built-in scenarios")
    pre.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(e, file=sys.stderr)
        return EXIT_INVALID
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SolverError, GeometryError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":      # pragma: no cover
    sys.exit(main())
