"""Command-line entry point: fit, fuse, bench and synth.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, fileio
from . import pl_density as pld
from .bench import METHODS, BenchConfig, run_bench
from .errors import InvalidInputError, NumericalFailure
from .metrics import REPORT_COLUMNS, format_table
from .mixture import K, build_mixture_table, fuse_raster
from .synth import (ClassGripGenerator, SceneConfig, SimulatorConfig, default_class_densities,
                    derive_seed, generate_scene, parse_layout, simulate_classifier)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DEFAULT_LAYOUT = "dry:0.3,wet:0.25,snowy:0.15,icy:0.1,slushy:0.2"


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _methods(s: str) -> tuple:
    return tuple(m.strip() for m in s.split(",") if m.strip())


SCENE_KEYS = {
    "height": (int, "560"),
    "width": (int, "32"),
    "horizon": (int, "40"),
    "layout": (str, DEFAULT_LAYOUT),
    "accuracy": (float, "0.95"),
    "temperature": (float, "0.2"),
    "densities": (str, ""),
}

BENCH_KEYS = {
    **SCENE_KEYS,
    "scenes": (int, "200"),
    "shuffle_layout": (_bool, "true"),
    "noise_sigma": (float, "0.02"),
    "miscalibration": (float, "1.0"),
    "ensemble_size": (int, "5"),
    "dropout_samples": (int, "10"),
    "methods": (_methods, ",".join(METHODS)),
    "clamp": (_bool, "true"),
    "weighted_coverage": (_bool, "true"),
    "violation_mode": (str, "per_sample"),
    "workers": (int, "1"),
}


def resolve_config(path, schema) -> tuple[dict, dict]:
    """(raw strings with defaults filled in, parsed values)."""
    raw = fileio.read_config(path) if path else {}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise InvalidInputError(f"unknown config key(s): {', '.join(unknown)}")
    resolved = {k: raw.get(k, default) for k, (_, default) in schema.items()}
    values = {}
    for k, (conv, _) in schema.items():
        try:
            values[k] = conv(resolved[k])
        except ValueError as exc:
            raise InvalidInputError(f"config key {k!r}: {exc}") from None
    return resolved, values


def _generator(path) -> ClassGripGenerator:
    if path:
        return ClassGripGenerator.from_densities(fileio.read_densities(path))
    return default_class_densities()


def _manifest(subcommand, config, inputs, seed=None) -> str:
    doc = {
        "tool": "gvrs",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {os.path.basename(p): fileio.file_digest(p) for p in inputs},
        "seed": seed,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    return "" if v is None else (v if isinstance(v, str) else fileio._fmt(v))


def report_csv(reports) -> bytes:
    return fileio._csv_bytes(REPORT_COLUMNS, [[_cell(v) for v in r.row()] for r in reports])


# -- subcommands ----------------------------------------------------------------------

def cmd_fit(args) -> int:
    if args.intervals < 2:
        raise InvalidInputError("--intervals must be at least 2")
    hists = fileio.read_histograms(args.histograms)
    fitted = []
    for h in hists:
        d = pld.fit_from_histogram(h, args.intervals)
        mse = pld.histogram_mse(h, d)
        if not np.isfinite(mse):
            raise NumericalFailure(f"fit of {h.name!r} produced a non-finite error")
        print(f"{h.name}\tmse={mse:.6g}")
        fitted.append(d)
    fileio.write_densities(args.out, fitted)
    fileio.write_text(args.out + ".manifest.json",
                      _manifest("fit", {"intervals": args.intervals}, [args.histograms]))
    return EXIT_OK


def cmd_fuse(args) -> int:
    table = build_mixture_table(fileio.read_densities(args.densities))
    probs = fileio.read_raster(args.probs)
    if probs.shape[-1] != K:
        raise InvalidInputError(f"probability raster has {probs.shape[-1]} channels, expected {K}")
    summary = fuse_raster(table, probs.astype(np.float64), workers=args.workers)
    fileio.write_raster(args.out, summary.to_channels(np.float32))
    fileio.write_text(args.out + ".manifest.json",
                      _manifest("fuse", {}, [args.densities, args.probs]))
    return EXIT_OK


def _simulator(v) -> SimulatorConfig:
    return SimulatorConfig(
        accuracy=v["accuracy"], temperature=v["temperature"],
        noise_sigma=v.get("noise_sigma", 0.0), miscalibration=v.get("miscalibration", 1.0),
        ensemble_size=v.get("ensemble_size", 5), dropout_samples=v.get("dropout_samples", 10))


def cmd_bench(args) -> int:
    resolved, v = resolve_config(args.config, BENCH_KEYS)
    cfg = BenchConfig(
        scenes=v["scenes"], height=v["height"], width=v["width"], horizon=v["horizon"],
        layout=parse_layout(v["layout"]), shuffle_layout=v["shuffle_layout"],
        simulator=_simulator(v), methods=v["methods"], clamp=v["clamp"],
        weighted_coverage=v["weighted_coverage"], violation_mode=v["violation_mode"],
        workers=v["workers"])
    # validates the layout once before the scene loop
    SceneConfig(cfg.height, cfg.width, cfg.horizon, cfg.layout)
    gen = _generator(v["densities"])
    reports, records = run_bench(cfg, gen, args.seed)

    os.makedirs(args.out, exist_ok=True)
    fileio.atomic_write(os.path.join(args.out, "report.csv"), report_csv(reports))
    for m in cfg.methods:
        rows = [[r.sample_id, fileio._fmt(r.gt_mean), fileio._fmt(r.p05_mean)]
                for r in sorted(records[m], key=lambda r: r.sample_id)]
        fileio.atomic_write(os.path.join(args.out, f"scatter_{m}.csv"),
                            fileio._csv_bytes(["sample_id", "gt_grip_mean", "p05_mean"], rows))
    inputs = [v["densities"]] if v["densities"] else []
    fileio.write_text(os.path.join(args.out, "manifest.json"),
                      _manifest("bench", resolved, inputs, args.seed))
    print(format_table(reports))
    return EXIT_OK


def cmd_synth(args) -> int:
    resolved, v = resolve_config(args.config, SCENE_KEYS)
    scene = SceneConfig(v["height"], v["width"], v["horizon"], parse_layout(v["layout"]),
                        args.seed)
    sim = _simulator(v)
    gen = _generator(v["densities"])
    labels, sample = generate_scene(scene, gen)
    probs = simulate_classifier(labels, sim, derive_seed(args.seed, "classifier"))

    os.makedirs(args.out, exist_ok=True)
    fileio.write_raster(os.path.join(args.out, "labels.grr1"), labels)
    fileio.write_raster(os.path.join(args.out, "probs.grr1"), probs.astype(np.float32))
    fileio.write_ground_truth(os.path.join(args.out, "ground_truth.csv"), sample)
    inputs = [v["densities"]] if v["densities"] else []
    fileio.write_text(os.path.join(args.out, "manifest.json"),
                      _manifest("synth", resolved, inputs, args.seed))
    return EXIT_OK


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gvrs", description="Per-pixel grip distributions "
                                 "from road surface state probabilities")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit piecewise-linear densities to class histograms")
    p.add_argument("histograms")
    p.add_argument("--intervals", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fuse", help="per-pixel grip summaries of a probability raster")
    p.add_argument("densities")
    p.add_argument("probs")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1, help="threads for the pixel loop")
    p.set_defaults(func=cmd_fuse)

    for name, func, help_ in (("bench", cmd_bench, "evaluate all methods on synthetic scenes"),
                              ("synth", cmd_synth, "generate one synthetic scene")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default=None, help="key = value file (defaults if omitted)")
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"gvrs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, ValueError, OSError) as exc:
        print(f"gvrs: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
