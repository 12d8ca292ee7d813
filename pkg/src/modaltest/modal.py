"""Peak picking, half-power damping, tone screening and run comparison."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

CLASSES = ("structural", "external_tone", "unresolved")
MODE_COLUMNS = ("f_hz", "zeta", "amplitude", "f1_hz", "f2_hz", "classification", "run_id")

SQRT3 = np.sqrt(3.0)


class UnresolvedPeak(ValueError):
    """Half-power points could not be bracketed for a single isolated peak."""


@dataclass(frozen=True)
class ModeEstimate:
    f_n_hz: float
    zeta: float | None
    amplitude: float
    half_power: tuple | None = None
    classification: str = "unresolved"
    source: str = ""

    def __post_init__(self):
        if self.classification not in CLASSES:
            raise ValueError(f"bad classification {self.classification!r}")
        if self.zeta is not None and self.zeta < 0:
            raise ValueError("zeta must be >= 0")
        if self.half_power is not None:
            f1, f2 = self.half_power
            if not f1 < self.f_n_hz < f2:
                raise ValueError("half-power points must bracket f_n")


def _parabolic(y, k):
    """Vertex offset (bins) and height of the parabola through ``y[k-1:k+2]``."""
    if k <= 0 or k >= len(y) - 1:
        return 0.0, float(y[k])
    y0, y1, y2 = y[k - 1], y[k], y[k + 1]
    den = y0 - 2.0 * y1 + y2
    if den >= 0:
        return 0.0, float(y1)
    delta = float(np.clip(0.5 * (y0 - y2) / den, -0.5, 0.5))
    return delta, float(y1 - 0.25 * (y0 - y2) * delta)


def pick_peaks(summed, band=None, min_prominence_ratio=10.0):
    """
    Local maxima whose prominence exceeds ``min_prominence_ratio`` times the
    median magnitude in ``band``.

    :return: ``[(f_hz, amplitude), ...]`` sorted by frequency; both refined by a
        3-point parabola through the peak bin and its neighbours
    """
    if not min_prominence_ratio > 1:
        raise ValueError("min_prominence_ratio must be > 1")
    spec = summed.band(*band) if band is not None else summed
    mag = np.abs(spec.bins)
    floor = float(np.median(mag))
    idx, props = find_peaks(mag, prominence=0.0)
    keep = props["prominences"] > min_prominence_ratio * floor
    out = []
    for k in idx[keep]:
        delta, height = _parabolic(mag, k)
        out.append(((spec.first_bin + k + delta) * spec.df_hz, height))
    return out


def _crossing(f, mag, k, level, step, ceiling):
    """
    Walk from bin ``k`` in direction ``step`` until ``mag`` drops below
    ``level``; return the interpolated crossing frequency, or None when the
    walk leaves the array or meets a value above ``ceiling`` first.
    """
    i = k
    while True:
        j = i + step
        if j < 0 or j >= len(mag):
            return None
        if mag[j] > ceiling:
            return None
        if mag[j] < level:
            frac = (mag[i] - level) / (mag[i] - mag[j])
            return f[i] + frac * (f[j] - f[i])
        i = j


def half_power_damping(spec, peak_f_hz, window_meta=None, shape_tol=0.2):
    """
    Damping ratio from the -3 dB width of a magnitude peak.

    ``zeta = (f2 - f1) / (2 f_n)`` with linearly interpolated crossings. When
    ``window_meta`` records an exponential window of time constant tau, the
    decay it added is removed: ``zeta - 1 / (2 pi f_n tau)``, floored at 0.

    A single mode is about sqrt(3) times wider at -6 dB than at -3 dB; a peak
    that is markedly flatter than that is two modes merged and is refused, as
    is a peak whose -3 dB points are not bracketed.

    :raises UnresolvedPeak: overlapping or unbracketed peak
    :return: ``(zeta, f1, f2)``
    """
    mag = np.abs(spec.bins)
    f = spec.freqs
    k = min(max(spec.bin_index(peak_f_hz), 0), len(mag) - 1)
    # climb to the local maximum nearest the requested frequency
    while True:
        nxt = max((j for j in (k - 1, k + 1) if 0 <= j < len(mag)), key=lambda j: mag[j])
        if mag[nxt] <= mag[k]:
            break
        k = nxt
    delta, peak = _parabolic(mag, k)
    f_n = float(f[k] + delta * spec.df_hz)
    if peak <= 0:
        raise UnresolvedPeak(f"no peak at {peak_f_hz} Hz")
    ceiling = peak * (1.0 + 1e-9)
    level = peak / np.sqrt(2.0)
    f1 = _crossing(f, mag, k, level, -1, ceiling)
    f2 = _crossing(f, mag, k, level, +1, ceiling)
    if f1 is None or f2 is None or not f1 < f_n < f2:
        raise UnresolvedPeak(f"half-power points not bracketed at {f_n:.4g} Hz")
    h1 = _crossing(f, mag, k, peak / 2.0, -1, ceiling)
    h2 = _crossing(f, mag, k, peak / 2.0, +1, ceiling)
    if h1 is not None and h2 is not None:
        if (h2 - h1) / (f2 - f1) < (1.0 - shape_tol) * SQRT3:
            raise UnresolvedPeak(f"flat-topped peak at {f_n:.4g} Hz, overlapping modes")
    zeta = (f2 - f1) / (2.0 * f_n)
    tau = ((window_meta or {}).get("exponential") or {}).get("tau_s")
    if tau:
        zeta = max(zeta - 1.0 / (2.0 * np.pi * f_n * tau), 0.0)
    return float(zeta), float(f1), float(f2)


def tone_persists(ambient, f_hz, prominence_ratio=10.0):
    """True when the excitation-free spectrum stands above its band median at ``f_hz``."""
    mag = np.abs(ambient.bins)
    k = ambient.bin_index(f_hz)
    local = mag[max(k - 1, 0) : k + 2].max()
    return bool(local > 0 and local > prominence_ratio * np.median(mag))


def classify_tone(peak_f_hz, frfs, ambient=None, coherence_threshold=0.5, prominence_ratio=10.0):
    """
    ``structural`` if the mean coherence across channels at the peak bin is at
    least the threshold; ``external_tone`` if it is below and the peak also
    stands out in the excitation-free autospectrum; ``unresolved`` otherwise.
    """
    frfs = list(frfs)
    if not frfs:
        raise ValueError("no FRFs")
    coh = np.mean([fr.coherence[fr.h.bin_index(peak_f_hz)] for fr in frfs])
    if coh >= coherence_threshold:
        return "structural"
    if ambient is not None and tone_persists(ambient, peak_f_hz, prominence_ratio):
        return "external_tone"
    return "unresolved"


def _consistent_width(frfs, f_hz, width_hz, min_share=0.2, width_tol=0.25):
    """
    True when every channel carrying at least ``min_share`` of the strongest
    channel's magnitude at ``f_hz`` shows a peak of the same -3 dB width.

    An isolated mode has one width in every channel. Two close modes whose
    skirts merge can look like a single peak in any one spectrum, but the
    channels where their residues have opposite signs show a narrower (or
    split) peak.
    """
    mags = [abs(fr.h.bins[fr.h.bin_index(f_hz)]) for fr in frfs]
    top = max(mags, default=0.0)
    if top <= 0:
        return True
    for fr, m in zip(frfs, mags):
        if m < min_share * top:
            continue
        try:
            _, f1, f2 = half_power_damping(fr.h, f_hz)
        except UnresolvedPeak:
            return False
        if abs((f2 - f1) / width_hz - 1.0) > width_tol:
            return False
    return True


def identify_modes(
    summed,
    frfs,
    band=None,
    min_prominence_ratio=10.0,
    ambient=None,
    coherence_threshold=0.5,
    window_meta=None,
    run_id="",
):
    """Peaks of a summed spectrum turned into classified :class:`ModeEstimate` rows."""
    spec = summed.band(*band) if band is not None else summed
    src = run_id
    modes = []
    for f_pk, amp in pick_peaks(spec, None, min_prominence_ratio):
        cls = classify_tone(f_pk, frfs, ambient, coherence_threshold, min_prominence_ratio)
        zeta = hp = None
        try:
            zeta, f1, f2 = half_power_damping(spec, f_pk, window_meta)
            hp = (f1, f2)
            if cls == "structural" and not _consistent_width(frfs, f_pk, f2 - f1):
                raise UnresolvedPeak(f"channels disagree on the width of the {f_pk:.4g} Hz peak")
        except UnresolvedPeak:
            zeta = hp = None
            if cls == "structural":
                cls = "unresolved"
        if hp is not None and not hp[0] < f_pk < hp[1]:
            hp, zeta = None, None
        modes.append(ModeEstimate(f_pk, zeta, amp, hp, cls, src))
    return modes


def mass_shift_estimate(f_n_hz, effective_mass_kg, delta_mass_kg):
    """SDOF estimate of a natural frequency after adding ``delta_mass_kg``."""
    total = effective_mass_kg + delta_mass_kg
    if effective_mass_kg <= 0 or total <= 0:
        raise ValueError("resulting mass must be > 0")
    return f_n_hz * np.sqrt(effective_mass_kg / total)


@dataclass(frozen=True)
class MatchedPair:
    a: ModeEstimate
    b: ModeEstimate

    @property
    def delta_f_hz(self):
        return self.b.f_n_hz - self.a.f_n_hz

    @property
    def delta_zeta(self):
        if self.a.zeta is None or self.b.zeta is None:
            return None
        return self.b.zeta - self.a.zeta


@dataclass(frozen=True)
class Comparison:
    matched: list = field(default_factory=list)
    only_in_a: list = field(default_factory=list)
    only_in_b: list = field(default_factory=list)

    @property
    def structural_match(self):
        """Every structural mode on either side is paired with a structural mode."""
        for m in self.only_in_a + self.only_in_b:
            if m.classification == "structural":
                return False
        return all(
            (p.a.classification == "structural") == (p.b.classification == "structural")
            for p in self.matched
        )


def compare_runs(modes_a, modes_b, match_tol_hz=None, tol_rel=0.02):
    """
    Greedy nearest-frequency matching.

    Pairs are taken in order of increasing ``|delta f|``, ties going to the
    lower frequency. The tolerance is ``match_tol_hz`` when given, otherwise
    ``tol_rel`` times the frequency of the mode in ``modes_a``.
    """
    a = sorted(modes_a, key=lambda m: m.f_n_hz)
    b = sorted(modes_b, key=lambda m: m.f_n_hz)
    cand = []
    for i, ma in enumerate(a):
        tol = match_tol_hz if match_tol_hz is not None else tol_rel * ma.f_n_hz
        for j, mb in enumerate(b):
            d = abs(ma.f_n_hz - mb.f_n_hz)
            if d <= tol:
                cand.append((d, min(ma.f_n_hz, mb.f_n_hz), i, j))
    cand.sort()
    used_a, used_b, pairs = set(), set(), []
    for _, _, i, j in cand:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    pairs.sort()
    return Comparison(
        matched=[MatchedPair(a[i], b[j]) for i, j in pairs],
        only_in_a=[m for i, m in enumerate(a) if i not in used_a],
        only_in_b=[m for j, m in enumerate(b) if j not in used_b],
    )


def _fmt(x):
    return "" if x is None else f"{x:.6g}"


def mode_table_csv(modes, amplitude_scale=1.0):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MODE_COLUMNS)
    for m in sorted(modes, key=lambda m: m.f_n_hz):
        f1, f2 = m.half_power if m.half_power else (None, None)
        w.writerow(
            [_fmt(m.f_n_hz), _fmt(m.zeta), _fmt(m.amplitude * amplitude_scale), _fmt(f1), _fmt(f2), m.classification, m.source]
        )
    return buf.getvalue()


def read_mode_table(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(MODE_COLUMNS) - set(rows[0]):
        raise ValueError("mode table is missing columns")
    if not rows and text.strip().split("\n")[0].split(",") != list(MODE_COLUMNS):
        raise ValueError("mode table is missing columns")
    out = []
    for r in rows:
        num = lambda s: float(s) if s.strip() else None  # noqa: E731
        f1, f2 = num(r["f1_hz"]), num(r["f2_hz"])
        out.append(
            ModeEstimate(
                f_n_hz=float(r["f_hz"]),
                zeta=num(r["zeta"]),
                amplitude=float(r["amplitude"]),
                half_power=(f1, f2) if f1 is not None and f2 is not None else None,
                classification=r["classification"],
                source=r["run_id"],
            )
        )
    return out
