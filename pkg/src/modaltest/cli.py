"""
``modaltest`` command line: simulate, analyze, modes, ods, compare.

Exit codes: 0 success, 1 comparison mismatch, 2 usage or validation error,
3 file-system error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import bundle
from .capture import QualityRules
from .frf import FrfWindows, summed_spectrum
from .modal import compare_runs, mode_table_csv, read_mode_table
from .ods import export_animation, extract_ods, load_geometry, seam_check
from .pipeline import analyze_runs, modes_from_frfs
from .rig import (
    HammerSpec,
    load_model_config,
    load_noise_spec,
    impact_schedule,
    inject_noise,
    parse_point,
    simulate_impact,
    simulate_sweep,
)
from .signal import G

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def data_path(name):
    """Bundled data file by name (``"rig-12dof"`` or ``"rig-12dof.json"``)."""
    base = resources.files("modaltest") / "data"
    for cand in (name, f"{name}.json"):
        p = base / cand
        if p.is_file():
            return Path(str(p))
    raise UsageError(f"no such file or bundled config: {name}")


def resolve_input(name):
    p = Path(name)
    return p if p.exists() else data_path(name)


def _pair(text, conv=float, sep=":"):
    try:
        a, b = text.split(sep)
        return conv(a), conv(b)
    except ValueError:
        raise UsageError(f"expected A{sep}B, got {text!r}") from None


def _load(fn, path, what):
    try:
        return fn(resolve_input(path))
    except UsageError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid {what} {path}: {exc}") from None


def cmd_simulate(args):
    cfg = _load(load_model_config, args.model_file, "model")
    if (args.hits is None) == (args.sweep is None):
        raise UsageError("give exactly one of --hits or --sweep")
    if args.hits is not None and args.hits < 1:
        raise UsageError("hits must be ≥ 1")
    try:
        drive = parse_point(args.drive)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if f"{drive[0]}:{drive[1]}" not in cfg.rig.node_map:
        raise UsageError(f"drive point {args.drive} is not in the model")
    if args.sweep is not None:
        try:
            f0, f1, rate = (float(v) for v in args.sweep.split(":"))
        except ValueError:
            raise UsageError("--sweep expects f0:f1:rate") from None
        try:
            run = simulate_sweep(cfg.rig, drive, f0, f1, rate, args.amplitude, args.fs, cfg.sensor)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        hammer = cfg.hammer
        if args.tip:
            hammer = HammerSpec(tip=args.tip, peak_force_N=hammer.peak_force_N)
        times, duration = impact_schedule(args.hits, args.record, args.seed)
        if args.duration is not None:
            duration = args.duration
        try:
            run = simulate_impact(
                cfg.rig, hammer, drive, cfg.sensor, args.fs, duration, args.seed, hit_times_s=times
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        run = replace(run, meta={**run.meta, "record_s": args.record})
    if args.noise:
        noise = _load(load_noise_spec, args.noise, "noise spec")
        try:
            run = inject_noise(run, replace(noise, seed=args.seed))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    meta = bundle.write_run_bundle(run, args.out_dir)
    print(f"wrote {len(meta['channels'])} channels, {meta['n_samples']} samples to {args.out_dir}")
    return EXIT_OK


def _read_run(path):
    try:
        return bundle.read_run_bundle(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid run bundle {path}: {exc}") from None


def cmd_analyze(args):
    band = _pair(args.band)
    runs, ids = [], []
    for d in args.run_dirs:
        run, meta = _read_run(d)
        runs.append(run)
        ids.append(meta.get("run_id", Path(d).name))
    windows = FrfWindows()
    if args.window and args.window != "none":
        kind, _, tau = args.window.partition(":")
        try:
            tau = float(tau)
        except ValueError:
            tau = 0.0
        if kind != "exp" or not tau > 0:
            raise UsageError("--window expects exp:TAU with TAU > 0, or none")
        windows = FrfWindows(exp_tau_s=tau)
    try:
        res = analyze_runs(runs, band, windows, args.record, args.min_force, ids)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bundle.write_frf_bundle(args.out, res.frfs, band, ids, res.quality_lines, res.ambient, res.rejected_rows)
    for line in res.quality_lines + res.rejected_rows:
        print(line)
    return EXIT_OK


def _read_frf(path):
    try:
        return bundle.read_frf_bundle(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid FRF bundle {path}: {exc}") from None


def cmd_modes(args):
    frfs, ambient, doc = _read_frf(args.frf_dir)
    if not frfs:
        raise UsageError("empty FRF set")
    if not args.prominence > 1:
        raise UsageError("--prominence must be > 1")
    run_id = args.run_id or "+".join(doc.get("run_ids", [])) or Path(args.frf_dir).name
    modes = modes_from_frfs(frfs, None, args.prominence, ambient, args.coherence, run_id)
    scale = 1.0 / G if args.units == "g" else 1.0
    text = mode_table_csv(modes, amplitude_scale=scale)
    if args.out:
        bundle.write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    counts = {}
    for m in modes:
        counts[m.classification] = counts.get(m.classification, 0) + 1
    summary = ", ".join(f"{v} {k}" for k, v in sorted(counts.items())) or "no peaks"
    print(summary, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_ods(args):
    frfs, _, _ = _read_frf(args.frf_dir)
    if not frfs:
        raise UsageError("empty FRF set")
    geom = _load(load_geometry, args.geometry, "geometry")
    try:
        shape = extract_ods(frfs, args.freq, geom)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for key in shape.omitted:
        print(f"warning: point {key} not in geometry, omitted", file=sys.stderr)
    if args.frames < 1 or not args.scale > 0:
        raise UsageError("--frames must be >= 1 and --scale > 0")
    doc = export_animation(shape, geom, args.frames, args.scale)
    if args.out:
        bundle.write_atomic(args.out, json.dumps(doc, indent=1) + "\n")
    status = EXIT_OK
    if args.seam_pairs:
        pairs = [_pair(p, int) for p in args.seam_pairs.split(",") if p]
        try:
            report = seam_check(shape, pairs, args.seam_mag_tol, args.seam_phase_tol, args.axis)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        for (a, b), r in zip(pairs, report):
            verdict = "PASS" if r.passed else f"FAIL({r.reason})"
            print(f"seam {a}:{b} {verdict} dmag={r.mag_diff_rel:.3g} dphase={r.phase_diff_deg:.3g}deg")
    print(f"ODS at {shape.frequency_hz:.6g} Hz, {len(shape.entries)} entries")
    return status


def _read_modes(path):
    try:
        return read_mode_table(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot parse mode table {path}: {exc}") from None


def cmd_compare(args):
    a = _read_modes(args.modes_a)
    b = _read_modes(args.modes_b)
    rep = compare_runs(a, b, tol_rel=args.tol_pct / 100.0)
    print(f"matched ({len(rep.matched)}):")
    for p in rep.matched:
        dz = "" if p.delta_zeta is None else f" dzeta={p.delta_zeta:+.3g}"
        print(f"  {p.a.f_n_hz:.6g} -> {p.b.f_n_hz:.6g} Hz  df={p.delta_f_hz:+.4g}{dz}  [{p.a.classification}/{p.b.classification}]")
    for title, rows in ((f"only in {args.modes_a}", rep.only_in_a), (f"only in {args.modes_b}", rep.only_in_b)):
        print(f"{title} ({len(rows)}):")
        for m in rows:
            print(f"  {m.f_n_hz:.6g} Hz [{m.classification}]")
    ok = rep.structural_match
    print("structural sets match" if ok else "structural sets differ")
    return EXIT_OK if ok else EXIT_MISMATCH


def build_parser():
    p = argparse.ArgumentParser(prog="modaltest", description="Impact-test simulation and modal analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a hammer or sweep run into a run bundle")
    s.add_argument("model_file")
    s.add_argument("out_dir")
    s.add_argument("--hits", type=int)
    s.add_argument("--sweep", metavar="F0:F1:RATE")
    s.add_argument("--amplitude", type=float, default=100.0, help="sweep force amplitude, N")
    s.add_argument("--drive", default="13:z", metavar="POINT:AXIS")
    s.add_argument("--tip", choices=["soft", "medium", "medium_hard", "hard"])
    s.add_argument("--noise", metavar="NOISESPEC")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fs", type=float, default=1024.0)
    s.add_argument("--duration", type=float)
    s.add_argument("--record", type=float, default=QualityRules.window_s, help="record length used to space hits, s")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="capture, screen and estimate FRFs")
    a.add_argument("run_dirs", nargs="+")
    a.add_argument("--band", default="0:200", metavar="LO:HI")
    a.add_argument("--out", required=True)
    a.add_argument("--window", default="none", metavar="exp:TAU|none")
    a.add_argument("--min-force", type=float, dest="min_force")
    a.add_argument("--record", type=float, default=None, help="record length, s (default: the run's own, else 8)")
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("modes", help="identify modes from an FRF bundle")
    m.add_argument("frf_dir")
    m.add_argument("--prominence", type=float, default=10.0)
    m.add_argument("--coherence", type=float, default=0.5)
    m.add_argument("--out")
    m.add_argument("--units", choices=["si", "g"], default="si")
    m.add_argument("--run-id", dest="run_id")
    m.set_defaults(func=cmd_modes)

    o = sub.add_parser("ods", help="deflection shape, animation and seam check")
    o.add_argument("frf_dir")
    o.add_argument("--freq", type=float, required=True)
    o.add_argument("--geometry", default="geometry.json")
    o.add_argument("--out")
    o.add_argument("--frames", type=int, default=24)
    o.add_argument("--scale", type=float, default=1.0)
    o.add_argument("--seam-pairs", dest="seam_pairs", metavar="A:B,...")
    o.add_argument("--seam-mag-tol", type=float, default=0.05, dest="seam_mag_tol")
    o.add_argument("--seam-phase-tol", type=float, default=5.0, dest="seam_phase_tol")
    o.add_argument("--axis", default="z")
    o.set_defaults(func=cmd_ods)

    c = sub.add_parser("compare", help="compare two mode tables")
    c.add_argument("modes_a")
    c.add_argument("modes_b")
    c.add_argument("--tol-pct", type=float, default=2.0, dest="tol_pct")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
