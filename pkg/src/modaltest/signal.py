"""
Time series and spectrum primitives.

All values are SI internally (N, m/s^2, m/s, m, Hz). Unit conversions to g and
lbf happen only at IO boundaries, see :func:`to_si` and :func:`from_si`.

Spectra are one-sided (bin 0 = DC) and scaled by the sample interval, so that
``X[k] = dt * sum(x[n] * exp(-2j*pi*k*n/N))`` approximates the continuous
Fourier transform. With this scaling the DC bin of a pulse equals its area.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import get_window

G = 9.80665  # m/s^2
LBF = 4.4482216  # N

QUANTITIES = ("force_N", "accel_mps2", "vel_mps", "disp_m")

# spectrum quantity tags reachable by integration / differentiation
_INTEGRATE = {
    "accel_mps2": ("vel_mps", "disp_m"),
    "accel_per_force": ("vel_per_force", "disp_per_force"),
    "vel_mps": ("disp_m", None),
    "vel_per_force": ("disp_per_force", None),
}
_DIFFERENTIATE = {
    "disp_m": ("vel_mps", "accel_mps2"),
    "disp_per_force": ("vel_per_force", "accel_per_force"),
    "vel_mps": ("accel_mps2", None),
    "vel_per_force": ("accel_per_force", None),
}

WINDOW_KINDS = ("rectangular", "hann", "force", "exponential")


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled single channel signal."""

    samples: np.ndarray
    sample_rate_hz: float
    quantity: str
    channel_id: str = ""
    start_time_s: float = 0.0

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be > 0")
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def dt(self):
        return 1.0 / self.sample_rate_hz

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate_hz

    @property
    def time(self):
        return self.start_time_s + np.arange(len(self.samples)) / self.sample_rate_hz

    def with_samples(self, samples, **changes):
        return replace(self, samples=samples, **changes)

    def segment(self, start, stop):
        """Sub-series of samples ``[start, stop)`` with the matching start time."""
        return replace(
            self,
            samples=self.samples[start:stop],
            start_time_s=self.start_time_s + start / self.sample_rate_hz,
        )


@dataclass(frozen=True)
class Spectrum:
    """
    One-sided complex (or real) spectrum.

    ``bins[i]`` sits at frequency ``(first_bin + i) * df_hz``. ``n_samples`` is the
    length of the source record when the spectrum came from a DFT, and is needed
    for the inverse transform and for Parseval sums.
    """

    bins: np.ndarray
    df_hz: float
    quantity: str
    n_averages: int = 1
    n_samples: int | None = None
    first_bin: int = 0

    def __post_init__(self):
        bins = _frozen(self.bins, dtype=np.result_type(np.asarray(self.bins), float))
        if bins.ndim != 1:
            raise ValueError("bins must be one-dimensional")
        if not self.df_hz > 0:
            raise ValueError("df_hz must be > 0")
        if self.n_averages < 1:
            raise ValueError("n_averages must be >= 1")
        if not np.all(np.isfinite(np.abs(bins))):
            raise ValueError("spectrum bins must be finite")
        object.__setattr__(self, "bins", bins)

    def __len__(self):
        return len(self.bins)

    @property
    def freqs(self):
        return (self.first_bin + np.arange(len(self.bins))) * self.df_hz

    @property
    def magnitude(self):
        return np.abs(self.bins)

    def bin_index(self, f_hz):
        """Index into ``bins`` of the bin nearest to ``f_hz``."""
        i = int(np.rint(f_hz / self.df_hz)) - self.first_bin
        return int(np.clip(i, 0, len(self.bins) - 1))

    def band(self, f_lo, f_hi):
        """Bins with ``f_lo <= f <= f_hi`` (inclusive, to within 1e-9 of a bin)."""
        k = self.first_bin + np.arange(len(self.bins))
        eps = 1e-9
        mask = (k >= f_lo / self.df_hz - eps) & (k <= f_hi / self.df_hz + eps)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise ValueError(f"empty band [{f_lo}, {f_hi}] Hz")
        return replace(self, bins=self.bins[idx], first_bin=self.first_bin + int(idx[0]))

    def power_sum(self):
        """
        Mean square of the source record recovered from the one-sided bins.

        Equals ``sum(x**2) / N`` for a full, un-averaged DFT (Parseval).
        """
        if self.n_samples is None or self.first_bin != 0:
            raise ValueError("power_sum needs a full one-sided DFT")
        n = self.n_samples
        dt_n = 1.0 / (self.df_hz * n)  # sample interval
        p = np.abs(self.bins) ** 2
        weights = np.full(len(p), 2.0)
        weights[0] = 1.0
        if n % 2 == 0:
            weights[-1] = 1.0
        return float(np.sum(weights * p) / (n * n * dt_n * dt_n))


def to_si(values, unit):
    """Convert values given in ``g``, ``lbf`` or an SI unit to SI."""
    factor = {"g": G, "lbf": LBF, "N": 1.0, "m/s^2": 1.0, "m/s": 1.0, "m": 1.0}[unit]
    return np.asarray(values, dtype=float) * factor


def from_si(values, unit):
    factor = {"g": G, "lbf": LBF, "N": 1.0, "m/s^2": 1.0, "m/s": 1.0, "m": 1.0}[unit]
    return np.asarray(values, dtype=float) / factor


def dft_forward(ts, n_fft=None):
    """
    One-sided DFT of a time series, scaled by the sample interval.

    :param ts: input series, at least 2 samples
    :param n_fft: optional zero-padded length (>= len(ts)); no padding by default
    :return: :class:`Spectrum` with ``floor(N/2)+1`` bins and ``df = fs/N``
    """
    n = len(ts)
    if n == 0:
        raise ValueError("empty series")
    if n < 2:
        raise ValueError("series must have at least 2 samples")
    n_fft = n if n_fft is None else int(n_fft)
    if n_fft < n:
        raise ValueError("n_fft shorter than the series")
    bins = np.fft.rfft(ts.samples, n=n_fft) * ts.dt
    return Spectrum(
        bins=bins,
        df_hz=ts.sample_rate_hz / n_fft,
        quantity=ts.quantity,
        n_samples=n_fft,
    )


def dft_inverse(spec, quantity=None, channel_id="", start_time_s=0.0):
    """Inverse of :func:`dft_forward` for a full one-sided spectrum."""
    if spec.n_samples is None or spec.first_bin != 0:
        raise ValueError("inverse needs a full one-sided DFT")
    n = spec.n_samples
    fs = spec.df_hz * n
    samples = np.fft.irfft(spec.bins, n=n) * fs
    return TimeSeries(
        samples=samples,
        sample_rate_hz=fs,
        quantity=quantity or spec.quantity,
        channel_id=channel_id,
        start_time_s=start_time_s,
    )


def window_values(n, fs, kind, **params):
    """
    Window weights for a record of ``n`` samples at ``fs``.

    ``force``: 1 over ``[start_s, start_s + span_s]`` with an optional raised
    cosine ``taper_s`` after the span, 0 elsewhere.
    ``exponential``: ``exp(-i / (fs * tau_s))``.
    """
    i = np.arange(n)
    if kind == "rectangular":
        return np.ones(n)
    if kind == "hann":
        return get_window("hann", n)
    if kind == "exponential":
        tau = params.get("tau_s")
        if tau is None or not tau > 0:
            raise ValueError("exponential window needs tau_s > 0")
        return np.exp(-i / (fs * tau))
    if kind == "force":
        start = params.get("start_s", 0.0)
        span = params["span_s"]
        taper = params.get("taper_s", 0.0)
        if span <= 0 or taper < 0:
            raise ValueError("force window needs span_s > 0 and taper_s >= 0")
        t = i / fs
        stop = start + span
        if start < 0 or stop > (n - 1) / fs + 1e-12:
            raise ValueError("force window span outside the record")
        eps = 1e-9 / fs
        w = ((t >= start - eps) & (t <= stop + eps)).astype(float)
        if taper > 0:
            in_taper = (t > stop + eps) & (t < stop + taper)
            w[in_taper] = 0.5 * (1.0 + np.cos(np.pi * (t[in_taper] - stop) / taper))
        return w
    raise ValueError(f"unknown window kind {kind!r}")


def apply_window(ts, kind, **params):
    """Return a windowed copy of ``ts``. See :func:`window_values` for the kinds."""
    if kind == "rectangular":
        return ts.with_samples(ts.samples.copy())
    w = window_values(len(ts), ts.sample_rate_hz, kind, **params)
    return ts.with_samples(ts.samples * w)


def integrate_freq(spec, order, highpass_hz=2.0):
    """
    Divide each bin by ``(i*2*pi*f)**order``; bins at or below ``highpass_hz``
    (always including DC) are set to zero.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if highpass_hz < 0:
        raise ValueError("highpass_hz must be >= 0")
    try:
        target = _INTEGRATE[spec.quantity][order - 1]
    except KeyError:
        raise ValueError(f"cannot integrate quantity {spec.quantity!r}") from None
    if target is None:
        raise ValueError(f"cannot integrate {spec.quantity!r} {order} times")
    f = spec.freqs
    keep = (f > highpass_hz) & (f > 0)
    out = np.zeros(len(f), dtype=complex)
    out[keep] = spec.bins[keep] / (2j * np.pi * f[keep]) ** order
    return replace(spec, bins=out, quantity=target)


def differentiate_freq(spec, order=1):
    """Multiply each bin by ``(i*2*pi*f)**order`` (e.g. velometer velocity to acceleration)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    try:
        target = _DIFFERENTIATE[spec.quantity][order - 1]
    except KeyError:
        raise ValueError(f"cannot differentiate quantity {spec.quantity!r}") from None
    if target is None:
        raise ValueError(f"cannot differentiate {spec.quantity!r} {order} times")
    out = spec.bins * (2j * np.pi * spec.freqs) ** order
    return replace(spec, bins=out, quantity=target)


def auto_cross_spectra(x, y):
    """
    Single-record auto and cross spectra.

    :return: ``(Sxx, Syy, Sxy)`` with ``Sxy = conj(X) * Y``
    """
    if len(x) != len(y):
        raise ValueError("length mismatch")
    if x.sample_rate_hz != y.sample_rate_hz:
        raise ValueError("sample rate mismatch")
    X = dft_forward(x)
    Y = dft_forward(y)
    tag = f"{x.quantity}*{y.quantity}"
    sxx = replace(X, bins=(np.abs(X.bins) ** 2).astype(float), quantity=f"{x.quantity}^2")
    syy = replace(Y, bins=(np.abs(Y.bins) ** 2).astype(float), quantity=f"{y.quantity}^2")
    sxy = replace(X, bins=np.conj(X.bins) * Y.bins, quantity=tag)
    return sxx, syy, sxy


def average_spectra(spectra):
    """Bin-wise mean of compatible spectra; ``n_averages`` is the total count."""
    spectra = list(spectra)
    if not spectra:
        raise ValueError("nothing to average")
    first = spectra[0]
    for s in spectra[1:]:
        if len(s) != len(first) or s.df_hz != first.df_hz or s.first_bin != first.first_bin:
            raise ValueError("incompatible spectra")
    total = sum(s.n_averages for s in spectra)
    acc = sum(s.bins * s.n_averages for s in spectra) / total
    return replace(first, bins=acc, n_averages=total)
