"""Run-to-modes analysis chain shared by the command line and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field

from .capture import QualityRules, assemble_records, detect_triggers, quality_summary, rejection_table
from .frf import FrfWindows, estimate_all, summed_autospectrum, summed_spectrum
from .modal import identify_modes
from .rig import NOMINAL_PEAK_FORCE_N, SensorSpec


@dataclass
class Analysis:
    frfs: list
    band: tuple
    accepted: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    ambient: object = None
    run_ids: list = field(default_factory=list)

    @property
    def quality_lines(self):
        return quality_summary(self.accepted, self.rejected)

    @property
    def rejected_rows(self):
        return rejection_table(self.rejected) if self.rejected else []


def rules_for_run(run, window_s=None, min_force_N=None):
    """
    Quality rules scaled to the hammer level recorded in the run metadata.

    The record length defaults to the one the run was simulated for, when known.
    """
    nominal = (run.meta.get("hammer") or {}).get("peak_force_N") or NOMINAL_PEAK_FORCE_N
    kw = {}
    if window_s is None:
        window_s = run.meta.get("record_s")
    if window_s is not None:
        kw["window_s"] = window_s
    rules = QualityRules.for_nominal_force(nominal, **kw)
    if min_force_N is not None:
        rules = QualityRules(
            threshold_N=rules.threshold_N,
            window_s=rules.window_s,
            min_force_N=min_force_N,
        )
    return rules


def sensors_for_run(run):
    d = dict(run.meta.get("sensor") or {})
    return SensorSpec.from_dict(d) if d else SensorSpec()


def ambient_segment(run, spans, n_window):
    """Response channels over the excitation-free stretch before the first trigger, if long enough."""
    first = spans[0].start if spans else len(run.responses[0])
    if first < n_window:
        return None
    return [ts.segment(0, n_window) for ts in run.responses]


def analyze_runs(runs, band=(0.0, 200.0), windows=None, window_s=None, min_force_N=None, run_ids=None):
    """
    Capture, screen and estimate FRFs for one or more impact runs.

    Several runs are treated as several drive points: their FRFs are pooled.
    The ambient summed autospectrum is taken from the quiet lead-in of each
    run (summed over runs) when the lead-in holds at least one full record.
    """
    runs = list(runs)
    windows = windows or FrfWindows()
    fs = runs[0].sample_rate_hz
    if band[1] > fs / 2:
        raise ValueError(f"band upper edge {band[1]} Hz exceeds Nyquist {fs / 2} Hz")
    if not 0 <= band[0] < band[1]:
        raise ValueError("band must satisfy 0 <= lo < hi")
    out = Analysis(frfs=[], band=tuple(band), run_ids=list(run_ids or []))
    ambient_channels = []
    for run in runs:
        if run.force is None:
            raise ValueError("run has no force channel")
        rules = rules_for_run(run, window_s, min_force_N)
        spans = detect_triggers(run.force, rules.threshold_N, rules.pretrigger_s, rules.window_s, rules.holdoff_s)
        acc, rej = assemble_records(run, spans, rules, sensors_for_run(run))
        out.accepted.extend(acc)
        out.rejected.extend(rej)
        if acc:
            out.frfs.extend(fr.band(*band) for fr in estimate_all(acc, windows))
        quiet = ambient_segment(run, spans, int(round(rules.window_s * fs)))
        if quiet:
            ambient_channels.extend(quiet)
    if ambient_channels:
        out.ambient = summed_autospectrum(ambient_channels, band)
    return out


def modes_from_frfs(frfs, band=None, prominence=10.0, ambient=None, coherence_threshold=0.5, run_id=""):
    frfs = list(frfs)
    if not frfs:
        raise ValueError("empty FRF set")
    summed = summed_spectrum(frfs, band)
    return identify_modes(
        summed,
        frfs,
        None,
        prominence,
        ambient,
        coherence_threshold,
        frfs[0].window_meta,
        run_id,
    )
