"""
On-disk formats: run bundles, FRF bundles, and atomic file writes.

A run bundle is a directory with ``run.json`` and one ``time_s,value`` CSV per
channel. An FRF bundle is a directory with ``frf.json`` (complex bins,
coherence and metadata per excitation/response pair) and ``quality.txt``.
Floats are written with ``repr`` so a write/read cycle is exact and reruns are
byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .frf import FrfSpectrum
from .rig import Run
from .signal import Spectrum, TimeSeries


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _channel_file(channel_id):
    return "ch_" + channel_id.replace(":", "_") + ".csv"


def _channel_csv(ts):
    t = ts.start_time_s + np.arange(len(ts)) / ts.sample_rate_hz
    lines = ["time_s,value"]
    lines.extend(f"{float(a)!r},{float(b)!r}" for a, b in zip(t, ts.samples))
    return "\n".join(lines) + "\n"


def write_run_bundle(run, out_dir, run_id=None):
    """Write ``run`` under ``out_dir``; returns the metadata dict that was saved."""
    out = Path(out_dir)
    channels = []
    series = ([run.force] if run.force is not None else []) + list(run.responses)
    for ts in series:
        channels.append(
            {
                "id": ts.channel_id,
                "quantity": ts.quantity,
                "file": _channel_file(ts.channel_id),
                "start_time_s": ts.start_time_s,
            }
        )
    meta = {
        "run_id": run_id or out.name,
        "sample_rate_hz": run.sample_rate_hz,
        "n_samples": len(series[0]),
        "excitation": run.excitation or "none",
        "force_channel": run.force.channel_id if run.force is not None else None,
        "channels": channels,
        "meta": run.meta,
    }
    for ts, ch in zip(series, channels):
        write_atomic(out / ch["file"], _channel_csv(ts))
    write_atomic(out / "run.json", _dump_json(meta))
    return meta


def read_run_meta(run_dir):
    return json.loads((Path(run_dir) / "run.json").read_text())


def read_run_bundle(run_dir):
    """Inverse of :func:`write_run_bundle`; returns ``(run, metadata)``."""
    run_dir = Path(run_dir)
    meta = read_run_meta(run_dir)
    fs = float(meta["sample_rate_hz"])
    force, responses = None, []
    for ch in meta["channels"]:
        path = run_dir / ch["file"]
        if not path.exists():
            raise ValueError(f"missing channel file {ch['file']}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if len(data) != meta["n_samples"]:
            raise ValueError(f"channel {ch['id']} has {len(data)} samples, expected {meta['n_samples']}")
        ts = TimeSeries(data[:, 1], fs, ch["quantity"], channel_id=ch["id"], start_time_s=ch.get("start_time_s", 0.0))
        if ch["id"] == meta.get("force_channel"):
            force = ts
        else:
            responses.append(ts)
    exc = meta.get("excitation")
    run = Run(force, responses, None if exc in (None, "none") else exc, meta.get("meta", {}))
    return run, meta


def _spec_dict(spec, real=False):
    d = {"df_hz": spec.df_hz, "first_bin": spec.first_bin, "quantity": spec.quantity}
    if real:
        d["values"] = [float(v) for v in np.real(spec.bins)]
    else:
        d["re"] = [float(v) for v in spec.bins.real]
        d["im"] = [float(v) for v in spec.bins.imag]
    return d


def _spec_from(d, n_averages=1):
    bins = np.asarray(d["values"], float) if "values" in d else np.asarray(d["re"]) + 1j * np.asarray(d["im"])
    return Spectrum(bins, d["df_hz"], d["quantity"], n_averages=n_averages, first_bin=d["first_bin"])


def write_frf_bundle(out_dir, frfs, band, run_ids, quality_lines, ambient=None, rejected_rows=()):
    """Write ``frf.json`` and ``quality.txt`` into ``out_dir``."""
    out = Path(out_dir)
    doc = {
        "band_hz": list(band),
        "run_ids": list(run_ids),
        "records": [
            {
                "excitation": fr.excitation_point,
                "response": fr.response_point,
                "n_averages": fr.n_averages,
                "window_meta": fr.window_meta,
                "h": _spec_dict(fr.h),
                "coherence": [float(c) for c in fr.coherence],
            }
            for fr in frfs
        ],
        "ambient": None if ambient is None else _spec_dict(ambient, real=True),
    }
    write_atomic(out / "frf.json", _dump_json(doc))
    text = "\n".join(list(quality_lines) + ([""] + list(rejected_rows) if rejected_rows else [])) + "\n"
    write_atomic(out / "quality.txt", text)


def read_frf_bundle(frf_dir):
    """Returns ``(frfs, ambient_or_None, document)``."""
    doc = json.loads((Path(frf_dir) / "frf.json").read_text())
    frfs = [
        FrfSpectrum(
            h=_spec_from(r["h"], r["n_averages"]),
            coherence=np.asarray(r["coherence"], float),
            excitation_point=r["excitation"],
            response_point=r["response"],
            n_averages=r["n_averages"],
            window_meta=r.get("window_meta") or {},
        )
        for r in doc["records"]
    ]
    ambient = _spec_from(doc["ambient"]) if doc.get("ambient") else None
    return frfs, ambient, doc
