"""Averaged H1 frequency response functions, coherence and summed spectra."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .signal import Spectrum, apply_window, auto_cross_spectra, average_spectra, dft_forward

COHERENCE_GUARD = 1e-12


@dataclass(frozen=True)
class FrfWindows:
    """
    Windows applied to every record before the spectra.

    ``force_span_s`` keeps the force channel only over the first
    ``pretrigger + force_span_s`` seconds (plus ``force_taper_s``).
    ``exp_tau_s`` applies the same exponential decay to force and response.
    """

    force_span_s: float | None = None
    force_taper_s: float = 0.0
    exp_tau_s: float | None = None

    def meta(self):
        out = {}
        if self.force_span_s is not None:
            out["force"] = {"span_s": self.force_span_s, "taper_s": self.force_taper_s}
        if self.exp_tau_s is not None:
            out["exponential"] = {"tau_s": self.exp_tau_s}
        return out

    @classmethod
    def from_meta(cls, meta):
        meta = meta or {}
        force = meta.get("force") or {}
        exp = meta.get("exponential") or {}
        return cls(
            force_span_s=force.get("span_s"),
            force_taper_s=force.get("taper_s", 0.0),
            exp_tau_s=exp.get("tau_s"),
        )


@dataclass(frozen=True)
class FrfSpectrum:
    h: Spectrum
    coherence: np.ndarray
    excitation_point: str
    response_point: str
    n_averages: int
    window_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coh = np.array(self.coherence, dtype=float)
        if coh.shape != (len(self.h),):
            raise ValueError("coherence must have one value per bin")
        if np.any(coh < 0) or np.any(coh > 1):
            raise ValueError("coherence must lie in [0, 1]")
        coh.setflags(write=False)
        object.__setattr__(self, "coherence", coh)

    @property
    def freqs(self):
        return self.h.freqs

    def band(self, f_lo, f_hi):
        h = self.h.band(f_lo, f_hi)
        i0 = h.first_bin - self.h.first_bin
        return replace(self, h=h, coherence=self.coherence[i0 : i0 + len(h)])

    def scaled(self, c):
        return replace(self, h=replace(self.h, bins=self.h.bins * c))


def _windowed(rec, ts, windows, is_force):
    fs = ts.sample_rate_hz
    out = ts
    if is_force and windows.force_span_s is not None:
        out = apply_window(
            out,
            "force",
            start_s=0.0,
            span_s=rec.pretrigger_samples / fs + windows.force_span_s,
            taper_s=windows.force_taper_s,
        )
    if windows.exp_tau_s is not None:
        out = apply_window(out, "exponential", tau_s=windows.exp_tau_s)
    return out


def estimate_h1(records, response_channel, windows=None):
    """
    H1 estimate ``mean(S_fx) / mean(S_ff)`` over accepted records.

    Coherence is ``|mean(S_fx)|^2 / (mean(S_ff) mean(S_xx))``; it is exactly 1
    for a single record wherever both spectra are non-zero, and 0 where the
    response or force spectrum vanishes.
    """
    records = list(records)
    if not records:
        raise ValueError("no accepted hits")
    windows = windows or FrfWindows()
    fs = records[0].force.sample_rate_hz
    n = len(records[0].force)
    sff, sxx, sfx = [], [], []
    for rec in records:
        if rec.force.sample_rate_hz != fs or len(rec.force) != n:
            raise ValueError("records must share sample rate and length")
        resp = next((ts for ts in rec.responses if ts.channel_id == response_channel), None)
        if resp is None:
            raise ValueError(f"record has no channel {response_channel}")
        f = _windowed(rec, rec.force, windows, True)
        x = _windowed(rec, resp, windows, False)
        a, b, c = auto_cross_spectra(f, x)
        sff.append(a)
        sxx.append(b)
        sfx.append(c)
    Sff = average_spectra(sff).bins.real
    Sxx = average_spectra(sxx).bins.real
    Sfx = average_spectra(sfx)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(Sff > 0, Sfx.bins / Sff, 0.0)
        denom = Sff * Sxx
        coh = np.where(denom > 0, np.abs(Sfx.bins) ** 2 / denom, 0.0)
    if len(records) == 1:
        coh = np.where(denom > 0, 1.0, 0.0)
    coh = np.clip(coh, 0.0, 1.0)
    h_spec = Spectrum(
        bins=h,
        df_hz=Sfx.df_hz,
        quantity=f"{resp.quantity.split('_')[0]}_per_force",
        n_averages=len(records),
        n_samples=n,
    )
    return FrfSpectrum(
        h=h_spec,
        coherence=coh,
        excitation_point=records[0].excitation or "",
        response_point=response_channel,
        n_averages=len(records),
        window_meta=windows.meta(),
    )


def estimate_all(records, windows=None):
    """H1 for every response channel present in the records."""
    records = list(records)
    if not records:
        raise ValueError("no accepted hits")
    return [estimate_h1(records, ts.channel_id, windows) for ts in records[0].responses]


def _check_df(spectra):
    df = {round(s.df_hz, 12) for s in spectra}
    if len(df) > 1:
        raise ValueError("df mismatch between spectra")


def summed_spectrum(frfs, band=None):
    """Per-bin sum of ``|H|`` over all FRFs, optionally restricted to ``band``."""
    frfs = list(frfs)
    if not frfs:
        raise ValueError("no FRFs to sum")
    _check_df([fr.h for fr in frfs])
    hs = [fr.h.band(*band) if band else fr.h for fr in frfs]
    first = {h.first_bin for h in hs}
    length = {len(h) for h in hs}
    if len(first) > 1 or len(length) > 1:
        raise ValueError("FRFs cover different bins")
    total = np.sum([np.abs(h.bins) for h in hs], axis=0)
    return replace(hs[0], bins=total, quantity="sum|accel_per_force|", n_averages=1)


def summed_autospectrum(responses, band=None):
    """
    Per-bin sum of response spectral magnitudes ``|X|`` for runs with no
    force reference (e.g. the quiet stretch before the first hit).
    """
    responses = list(responses)
    if not responses:
        raise ValueError("need at least one response channel")
    specs = [dft_forward(ts) for ts in responses]
    _check_df(specs)
    total = np.sum([np.abs(s.bins) for s in specs], axis=0)
    out = replace(specs[0], bins=total, quantity="sum|accel_mps2|")
    return out.band(*band) if band else out
