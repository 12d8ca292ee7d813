"""Trigger detection and hit-quality screening for hammer runs."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .rig import NOMINAL_PEAK_FORCE_N, SensorSpec

DEFECTS = ("double_hit", "overload", "underload")
FLAGS = ("ok",) + DEFECTS


@dataclass(frozen=True)
class QualityRules:
    """
    Capture and screening knobs.

    Defaults: trigger at 2% of the nominal hammer force, 8 s records with 5%
    pretrigger, holdoff equal to the record, second-impact ratio 0.2 and a
    minimum accepted peak of 10% of nominal.
    """

    threshold_N: float = 0.02 * NOMINAL_PEAK_FORCE_N
    window_s: float = 8.0
    pretrigger_s: float | None = None
    holdoff_s: float | None = None
    double_hit_ratio: float = 0.2
    min_force_N: float = 0.1 * NOMINAL_PEAK_FORCE_N
    force_range_N: float | None = None

    def __post_init__(self):
        if not self.threshold_N > 0:
            raise ValueError("threshold_N must be > 0")
        if not self.window_s > 0:
            raise ValueError("window_s must be > 0")
        if self.pretrigger_s is None:
            object.__setattr__(self, "pretrigger_s", 0.05 * self.window_s)
        if self.holdoff_s is None:
            object.__setattr__(self, "holdoff_s", self.window_s)
        if not 0 <= self.pretrigger_s < self.window_s:
            raise ValueError("pretrigger_s must lie in [0, window_s)")

    @classmethod
    def for_nominal_force(cls, nominal_N, **kw):
        return cls(threshold_N=0.02 * nominal_N, min_force_N=0.1 * nominal_N, **kw)


@dataclass(frozen=True)
class TriggerSpan:
    start: int
    trigger: int
    stop: int


def detect_triggers(force, threshold_N, pretrigger_s, window_s, holdoff_s):
    """
    One span per upward threshold crossing.

    ``window_s`` is the whole captured span, pretrigger included, so a span is
    ``[trigger - pre, trigger - pre + window)``. Crossings within ``holdoff_s``
    of the previous trigger are ignored; spans that would run past either end
    of the record are dropped.
    """
    if not threshold_N > 0:
        raise ValueError("threshold_N must be > 0")
    fs = force.sample_rate_hz
    x = force.samples
    n_pre = int(round(pretrigger_s * fs))
    n_win = int(round(window_s * fs))
    n_hold = int(round(holdoff_s * fs))
    above = x >= threshold_N
    crossings = np.flatnonzero(above[1:] & ~above[:-1]) + 1
    spans = []
    last = None
    for c in crossings:
        if last is not None and c - last < n_hold:
            continue
        last = c
        start = c - n_pre
        stop = start + n_win
        if start < 0 or stop > len(x):
            continue
        spans.append(TriggerSpan(int(start), int(c), int(stop)))
    return spans


@dataclass(frozen=True)
class ImpactRecord:
    force: object
    responses: tuple
    trigger_time_s: float
    peak_force_N: float
    flags: frozenset = field(default_factory=frozenset)
    pretrigger_samples: int = 0
    excitation: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(self.responses))
        object.__setattr__(self, "flags", frozenset(self.flags))
        for ts in self.responses:
            if len(ts) != len(self.force) or ts.sample_rate_hz != self.force.sample_rate_hz:
                raise ValueError("record segments must share length and sample rate")
        unknown = self.flags - set(FLAGS)
        if unknown:
            raise ValueError(f"unknown flags {sorted(unknown)}")
        if self.flags and (("ok" in self.flags) == bool(self.flags & set(DEFECTS))):
            raise ValueError("flags must be {'ok'} or a set of defects")

    @property
    def accepted(self):
        return self.flags == {"ok"}


def _main_pulse(force, trigger, threshold):
    """``(begin, end)`` of the first contiguous run at/above threshold from the trigger."""
    above = force >= threshold
    idx = np.flatnonzero(above[trigger:])
    if idx.size == 0:
        return trigger, trigger
    begin = trigger + int(idx[0])
    below = np.flatnonzero(~above[begin:])
    end = begin + (int(below[0]) if below.size else len(force) - begin)
    return begin, end


def extract_records(run, spans, rules):
    """Cut unclassified records out of a run."""
    records = []
    for sp in spans:
        force = run.force.segment(sp.start, sp.stop)
        n_pre = sp.trigger - sp.start
        b, e = _main_pulse(force.samples, n_pre, rules.threshold_N)
        peak = float(force.samples[b:e].max()) if e > b else 0.0
        records.append(
            ImpactRecord(
                force=force,
                responses=[ts.segment(sp.start, sp.stop) for ts in run.responses],
                trigger_time_s=run.force.start_time_s + sp.trigger / run.force.sample_rate_hz,
                peak_force_N=peak,
                pretrigger_samples=n_pre,
                excitation=run.excitation,
            )
        )
    return records


def classify_hit(record, sensors=None, rules=None):
    """
    Flag set for one record.

    ``double_hit``: a force maximum above ``double_hit_ratio`` times the main
    peak after the main pulse (first contiguous region above threshold,
    extended by twice its width). ``overload``: any response at or beyond the
    sensor range, or the force at ``force_range_N``. ``underload``: main peak
    below ``min_force_N``.
    """
    sensors = sensors or SensorSpec()
    rules = rules or QualityRules()
    f = record.force.samples
    flags = set()
    b, e = _main_pulse(f, record.pretrigger_samples, rules.threshold_N)
    peak = float(f[b:e].max()) if e > b else 0.0
    tail = e + 2 * (e - b)
    if peak > 0 and tail < len(f) and f[tail:].max() > rules.double_hit_ratio * peak:
        flags.add("double_hit")
    if any(np.max(np.abs(ts.samples)) >= sensors.range_pk for ts in record.responses if len(ts)):
        flags.add("overload")
    if rules.force_range_N is not None and np.max(np.abs(f)) >= rules.force_range_N:
        flags.add("overload")
    if record.peak_force_N < rules.min_force_N:
        flags.add("underload")
    return frozenset(flags or {"ok"})


def assemble_records(run, spans, rules=None, sensors=None):
    """Classify every span of ``run``; returns ``(accepted, rejected)`` in order."""
    rules = rules or QualityRules()
    accepted, rejected = [], []
    for rec in extract_records(run, spans, rules):
        rec = replace(rec, flags=classify_hit(rec, sensors, rules))
        (accepted if rec.accepted else rejected).append(rec)
    return accepted, rejected


def quality_summary(accepted, rejected):
    """Report lines, e.g. ``"4 accepted, 1 rejected"`` then ``"1 rejected (double_hit)"``."""
    lines = [f"{len(accepted)} accepted, {len(rejected)} rejected"]
    counts = Counter(flag for rec in rejected for flag in rec.flags)
    for flag in DEFECTS:
        if counts[flag]:
            lines.append(f"{counts[flag]} rejected ({flag})")
    return lines


def rejection_table(rejected):
    rows = ["trigger_time_s,peak_force_N,flags"]
    for rec in rejected:
        rows.append(f"{rec.trigger_time_s:.6g},{rec.peak_force_N:.6g},{'|'.join(sorted(rec.flags))}")
    return rows
