"""
Lumped mass-spring-damper test rig with exact modal parameters.

The rig is the ground truth for everything downstream: impact runs are built
by modal superposition (sampled analytic impulse responses, discrete
convolution), swept-sine runs by average-acceleration Newmark stepping, and
pump tones / broadband noise are added on top of the acceleration channels.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.linalg

from .signal import G, LBF, TimeSeries

AXES = ("x", "y", "z")

# Half-sine contact durations per tip. Calibrated so that medium_hard gives a
# ~900 Hz usable band at a 10 dB drop; softer tips last longer.
TIP_DURATIONS_S = {
    "soft": 8.0e-3,
    "medium": 3.0e-3,
    "medium_hard": 1.13e-3,
    "hard": 0.5e-3,
}
NOMINAL_PEAK_FORCE_N = 1000.0 * LBF


def parse_point(text):
    """``"13:z"`` -> ``(13, "z")``."""
    try:
        pid, axis = str(text).split(":")
        pid = int(pid)
    except ValueError:
        raise ValueError(f"bad point spec {text!r}, expected ID:AXIS") from None
    axis = axis.strip().lower()
    if axis not in AXES:
        raise ValueError(f"bad axis {axis!r} in {text!r}")
    return pid, axis


def point_key(point):
    pid, axis = parse_point(point) if isinstance(point, str) else point
    return f"{pid}:{axis}"


@dataclass(frozen=True)
class RigModel:
    masses: np.ndarray
    stiffness: np.ndarray
    modal_damping: np.ndarray
    node_map: dict = field(default_factory=dict)
    dof_labels: tuple = ()
    name: str = "rig"

    def __post_init__(self):
        m = np.array(self.masses, dtype=float)
        k = np.array(self.stiffness, dtype=float)
        z = np.array(self.modal_damping, dtype=float)
        n = len(m)
        if n < 1:
            raise ValueError("rig needs at least one DOF")
        if np.any(m <= 0):
            raise ValueError("masses must be > 0")
        if k.shape != (n, n):
            raise ValueError(f"stiffness must be {n}x{n}")
        scale = max(float(np.max(np.abs(k))), 1e-300)
        if np.max(np.abs(k - k.T)) > 1e-12 * scale:
            raise ValueError("stiffness must be symmetric")
        if z.shape != (n,):
            raise ValueError(f"modal_damping needs one ratio per mode ({n})")
        if np.any((z <= 0) | (z >= 1)):
            raise ValueError("modal damping ratios must lie in (0, 1)")
        node_map = {}
        for key, dof in dict(self.node_map).items():
            dof = int(dof)
            if not 0 <= dof < n:
                raise ValueError(f"point {key} maps to missing DOF {dof}")
            node_map[point_key(key)] = dof
        labels = tuple(self.dof_labels) or tuple(f"dof{i}" for i in range(n))
        if len(labels) != n:
            raise ValueError("dof_labels length mismatch")
        for name, arr in (("masses", m), ("stiffness", k), ("modal_damping", z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "node_map", node_map)
        object.__setattr__(self, "dof_labels", labels)

    @property
    def n_dof(self):
        return len(self.masses)

    def channels(self):
        """Mapped ``"id:axis"`` keys sorted by point id then axis."""
        return sorted(self.node_map, key=lambda s: (parse_point(s)[0], parse_point(s)[1]))

    def dof_of(self, point):
        key = point_key(point)
        if key not in self.node_map:
            raise ValueError(f"unknown point {key}")
        return self.node_map[key]

    def scaled(self, factor):
        """Uniformly scale M and K (natural frequencies are unchanged)."""
        return replace(self, masses=self.masses * factor, stiffness=self.stiffness * factor)

    def to_dict(self):
        return {
            "name": self.name,
            "dof_labels": list(self.dof_labels),
            "masses": self.masses.tolist(),
            "stiffness": self.stiffness.tolist(),
            "modal_damping": self.modal_damping.tolist(),
            "node_map": dict(self.node_map),
        }


def stiffness_from_springs(n_dof, springs):
    """Assemble K from ``(a, b, k)`` springs; ``b = None`` grounds DOF ``a``."""
    K = np.zeros((n_dof, n_dof))
    for a, b, k in springs:
        K[a, a] += k
        if b is not None:
            K[b, b] += k
            K[a, b] -= k
            K[b, a] -= k
    return K


def rig_from_dict(d):
    n = len(d["masses"])
    if "stiffness" in d:
        K = d["stiffness"]
    elif "springs" in d:
        K = stiffness_from_springs(n, [(s["a"], s.get("b"), s["k"]) for s in d["springs"]])
    else:
        raise ValueError("rig needs 'stiffness' or 'springs'")
    return RigModel(
        masses=d["masses"],
        stiffness=K,
        modal_damping=d["modal_damping"],
        node_map=d.get("node_map", {}),
        dof_labels=tuple(d.get("dof_labels", ())),
        name=d.get("name", "rig"),
    )


@dataclass(frozen=True)
class Mode:
    f_n_hz: float
    zeta: float
    shape: np.ndarray

    @property
    def omega(self):
        return 2.0 * np.pi * self.f_n_hz


def eigen_modes(rig):
    """
    Undamped modes of ``K phi = w^2 M phi``, ascending, mass-orthonormal.

    Each shape is signed so that its largest component is positive. Damping
    ratios are the rig's per-mode ``modal_damping`` in the same order.
    """
    M = np.diag(rig.masses)
    try:
        lam, phi = scipy.linalg.eigh(rig.stiffness, M)
    except np.linalg.LinAlgError:
        raise ValueError("unstable model") from None
    if np.any(lam <= 0):
        raise ValueError("unstable model")
    modes = []
    for r in range(rig.n_dof):
        v = phi[:, r].copy()
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        v.setflags(write=False)
        modes.append(Mode(float(np.sqrt(lam[r]) / (2.0 * np.pi)), float(rig.modal_damping[r]), v))
    return modes


def damping_matrix(rig, modes=None):
    """Viscous damping matrix that reproduces the per-mode ratios."""
    modes = modes or eigen_modes(rig)
    M = np.diag(rig.masses)
    phi = np.column_stack([m.shape for m in modes])
    c_modal = np.diag([2.0 * m.zeta * m.omega for m in modes])
    return M @ phi @ c_modal @ phi.T @ M


def add_mass(rig, dof, delta_kg):
    masses = rig.masses.copy()
    masses[dof] += delta_kg
    return replace(rig, masses=masses)


def with_bad_weld(rig, point_a, point_b, k_weld, mass_kg, zeta=0.02):
    """
    Detach ``point_b`` from the DOF it shares with ``point_a``.

    A new DOF of ``mass_kg`` hangs off ``point_a``'s DOF through a spring of
    ``k_weld`` N/m; every axis of ``point_b`` is remapped to it.
    """
    pa = parse_point(point_a) if isinstance(point_a, str) else point_a
    pb = parse_point(point_b) if isinstance(point_b, str) else point_b
    dof_a = rig.dof_of(pa)
    n = rig.n_dof
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = rig.stiffness
    K += stiffness_from_springs(n + 1, [(dof_a, n, k_weld)])
    node_map = dict(rig.node_map)
    moved = [key for key in node_map if parse_point(key)[0] == pb[0]]
    if not moved:
        raise ValueError(f"unknown point {pb[0]}")
    for key in moved:
        node_map[key] = n
    return RigModel(
        masses=np.append(rig.masses, mass_kg),
        stiffness=K,
        modal_damping=np.append(rig.modal_damping, zeta),
        node_map=node_map,
        dof_labels=rig.dof_labels + (f"weld{pb[0]}",),
        name=rig.name + "-bad-weld",
    )


@dataclass(frozen=True)
class HammerSpec:
    tip: str = "medium_hard"
    peak_force_N: float = NOMINAL_PEAK_FORCE_N
    pulse_duration_s: float | None = None

    def __post_init__(self):
        if self.tip not in TIP_DURATIONS_S:
            raise ValueError(f"unknown tip {self.tip!r}")
        if self.peak_force_N < 0:
            raise ValueError("peak_force_N must be >= 0")
        if self.pulse_duration_s is None:
            object.__setattr__(self, "pulse_duration_s", TIP_DURATIONS_S[self.tip])
        if not self.pulse_duration_s > 0:
            raise ValueError("pulse_duration_s must be > 0")

    @classmethod
    def from_dict(cls, d, durations=None):
        d = dict(d)
        if d.get("pulse_duration_s") is None and durations and d.get("tip") in durations:
            d["pulse_duration_s"] = durations[d["tip"]]
        return cls(**d)


@dataclass(frozen=True)
class SensorSpec:
    range_pk: float = 50.0 * G
    sensitivity_factor: float = 1.0
    band: tuple = (0.5, 4500.0)

    def __post_init__(self):
        if not self.range_pk > 0:
            raise ValueError("range_pk must be > 0")
        if not 0.5 <= self.sensitivity_factor <= 1.5:
            raise ValueError("sensitivity_factor must lie in [0.5, 1.5]")
        lo, hi = self.band
        if not lo < hi:
            raise ValueError("sensor band must have f_lo < f_hi")
        object.__setattr__(self, "band", (float(lo), float(hi)))

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class NoiseSpec:
    tones: tuple = ()
    broadband_rms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        tones = tuple((float(f), float(a)) for f, a in self.tones)
        if any(f <= 0 for f, _ in tones):
            raise ValueError("tone frequencies must be > 0")
        if self.broadband_rms < 0:
            raise ValueError("broadband_rms must be >= 0")
        object.__setattr__(self, "tones", tones)

    @property
    def is_empty(self):
        return not self.tones and self.broadband_rms == 0

    @classmethod
    def from_dict(cls, d):
        return cls(
            tones=[(t["frequency_hz"], t["amplitude_mps2"]) for t in d.get("tones", [])],
            broadband_rms=d.get("broadband_rms", 0.0),
            seed=d.get("seed", 0),
        )

    def to_dict(self):
        return {
            "tones": [{"frequency_hz": f, "amplitude_mps2": a} for f, a in self.tones],
            "broadband_rms": self.broadband_rms,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ModelConfig:
    rig: RigModel
    hammer: HammerSpec
    sensor: SensorSpec


def load_model_config(path):
    """Read a rig config (JSON) with optional ``hammer`` and ``sensor`` sections."""
    d = json.loads(Path(path).read_text())
    durations = dict(TIP_DURATIONS_S)
    durations.update(d.get("tip_durations_s", {}))
    return ModelConfig(
        rig=rig_from_dict(d),
        hammer=HammerSpec.from_dict(d.get("hammer", {}), durations),
        sensor=SensorSpec.from_dict(d.get("sensor", {})),
    )


def load_noise_spec(path):
    return NoiseSpec.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Run:
    """Raw multi-channel record: optional force channel plus response channels."""

    force: TimeSeries | None
    responses: tuple
    excitation: str | None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(self.responses))
        n = {len(ts) for ts in self.responses}
        if self.force is not None:
            n.add(len(self.force))
        if len(n) > 1:
            raise ValueError("all channels must share the sample count")

    @property
    def sample_rate_hz(self):
        ref = self.force if self.force is not None else self.responses[0]
        return ref.sample_rate_hz

    def response(self, channel_id):
        for ts in self.responses:
            if ts.channel_id == channel_id:
                return ts
        raise KeyError(channel_id)


def half_sine_pulse(n, fs, t0, duration, peak):
    """
    Half-sine force pulse starting at ``t0``, sampled as cell averages.

    Sample ``i`` holds the mean force over ``[t_i - dt/2, t_i + dt/2]``, so the
    pulse area is exact and a contact shorter than one sample still shows up.
    """
    dt = 1.0 / fs
    t = np.arange(n) * dt
    lo = np.clip(t - dt / 2 - t0, 0.0, duration)
    hi = np.clip(t + dt / 2 - t0, 0.0, duration)
    w = np.pi / duration
    # integral of sin(w u) over [lo, hi]
    area = (np.cos(w * lo) - np.cos(w * hi)) / w
    return peak * area / dt


def _impact_force(n, fs, hammer, hit_times_s, hit_scales):
    force = np.zeros(n)
    for t0, s in zip(hit_times_s, hit_scales):
        force += half_sine_pulse(n, fs, t0, hammer.pulse_duration_s, hammer.peak_force_N * s)
    return force


def _modal_accel_kernels(modes, n, dt):
    """
    Per-mode smooth part ``k_r`` of the modal acceleration impulse response.

    Modal acceleration for modal force f is ``f - dt * (k_r * f)`` with
    ``k_r = 2 sigma g' + w^2 g`` and ``g = exp(-sigma t) sin(wd t) / wd``.
    The jump of ``g'`` at t=0 gets a half weight (trapezoidal endpoint).
    """
    t = np.arange(n) * dt
    kernels = np.empty((len(modes), n))
    for r, m in enumerate(modes):
        w = m.omega
        sigma = m.zeta * w
        wd = w * np.sqrt(1.0 - m.zeta**2)
        env = np.exp(-sigma * t)
        g = env * np.sin(wd * t) / wd
        gd = env * (np.cos(wd * t) - sigma / wd * np.sin(wd * t))
        gd[0] = 0.5
        kernels[r] = 2.0 * sigma * gd + w * w * g
    return kernels


def dof_accelerations(rig, force, fs, drive_dof, modes=None):
    """Acceleration at every DOF (rows) for ``force`` applied at ``drive_dof``."""
    modes = modes or eigen_modes(rig)
    n = len(force)
    dt = 1.0 / fs
    nfft = scipy.fft.next_fast_len(2 * n)
    F = np.fft.rfft(force, nfft)
    K = np.fft.rfft(_modal_accel_kernels(modes, n, dt), nfft, axis=1)
    phi = np.column_stack([m.shape for m in modes])  # dof x mode
    participation = phi * phi[drive_dof][None, :]  # phi_i,r * phi_j,r
    modal = F[None, :] - dt * K * F[None, :]
    acc = np.fft.irfft(participation @ modal, nfft, axis=1)[:, :n]
    return acc


def _sensor_channels(rig, dof_signals, fs, sensors, quantity="accel_mps2"):
    responses, clipped = [], []
    for key in rig.channels():
        x = dof_signals[rig.node_map[key]]
        if quantity == "accel_mps2":
            x = x * sensors.sensitivity_factor
            if np.any(np.abs(x) > sensors.range_pk):
                clipped.append(key)
                x = np.clip(x, -sensors.range_pk, sensors.range_pk)
        responses.append(TimeSeries(x, fs, quantity, channel_id=key))
    return responses, clipped


def impact_schedule(n_hits, record_s, seed, lead_s=None, gap_s=1.0, jitter_s=0.5):
    """
    Hit times for a roving-free multi-hit run.

    A quiet lead-in of ``lead_s`` (default one record) is left before the first
    hit so the run also carries an excitation-free stretch. Each later hit lands
    one slot of ``record_s + gap_s + jitter_s`` after the previous slot start,
    offset by a seeded uniform jitter so the strikes are not phase locked to
    any background tone.
    """
    rng = np.random.default_rng(seed)
    lead = record_s if lead_s is None else lead_s
    slot = record_s + gap_s + jitter_s
    jitter = rng.uniform(0.0, jitter_s, n_hits)
    pre = 0.05 * record_s
    times = [lead + pre + k * slot + jitter[k] for k in range(n_hits)]
    duration = lead + n_hits * slot + pre
    return times, duration


def simulate_impact(
    rig,
    hammer,
    drive_point,
    sensors=None,
    fs_hz=1024.0,
    duration_s=None,
    seed=0,
    hit_times_s=None,
    hit_scales=None,
    force_jitter=0.0,
):
    """
    Hammer run by modal superposition.

    :param hit_times_s: pulse start times; default is one hit at 10% of the run
    :param hit_scales: per-pulse multipliers of ``hammer.peak_force_N``
        (e.g. ``[1.0, 0.4]`` with close times builds a double hit)
    :param force_jitter: relative peak force scatter per hit, drawn from ``seed``
    :return: :class:`Run` with a force channel and one acceleration channel per
        mapped point/axis; ``meta["clipped"]`` lists channels that hit the sensor
        range
    """
    sensors = sensors or SensorSpec()
    key = point_key(drive_point)
    drive_dof = rig.dof_of(key)
    if duration_s is None:
        raise ValueError("duration_s is required")
    if hammer.pulse_duration_s >= duration_s:
        raise ValueError("pulse longer than the run duration")
    n = int(round(duration_s * fs_hz))
    if hit_times_s is None:
        hit_times_s = [0.1 * duration_s]
    hit_times_s = [float(t) for t in hit_times_s]
    if any(t < 0 or t + hammer.pulse_duration_s > n / fs_hz for t in hit_times_s):
        raise ValueError("hit outside the run")
    scales = np.ones(len(hit_times_s)) if hit_scales is None else np.asarray(hit_scales, float)
    if force_jitter:
        rng = np.random.default_rng(seed)
        scales = scales * (1.0 + force_jitter * rng.uniform(-1.0, 1.0, len(scales)))
    force = _impact_force(n, fs_hz, hammer, hit_times_s, scales)
    acc = dof_accelerations(rig, force, fs_hz, drive_dof)
    responses, clipped = _sensor_channels(rig, acc, fs_hz, sensors)
    meta = {
        "mode": "impact",
        "sample_rate_hz": fs_hz,
        "hammer": asdict(hammer),
        "sensor": {**asdict(sensors), "band": list(sensors.band)},
        "seed": seed,
        "hit_times_s": hit_times_s,
        "hit_scales": scales.tolist(),
        "clipped": clipped,
    }
    return Run(TimeSeries(force, fs_hz, "force_N", channel_id="force"), responses, key, meta)


class NewmarkAverageAcceleration:
    """
    Newmark-beta stepping (gamma=1/2, beta=1/4) of decoupled modal equations
    ``q'' + 2 zeta w q' + w^2 q = p``, vectorised over modes.
    """

    beta = 0.25
    gamma = 0.5

    def __init__(self, omega, zeta, dt):
        self.omega = np.asarray(omega, float)
        self.zeta = np.asarray(zeta, float)
        self.dt = dt
        self.c = 2.0 * self.zeta * self.omega
        self.k = self.omega**2
        b, g = self.beta, self.gamma
        self.k_eff = self.k + g / (b * dt) * self.c + 1.0 / (b * dt * dt)

    def run(self, p):
        """Integrate from rest; ``p`` has shape (n_modes, n_steps)."""
        dt, b, g = self.dt, self.beta, self.gamma
        c, k, k_eff = self.c, self.k, self.k_eff
        n_modes, n = p.shape
        u = np.zeros((n_modes, n))
        v = np.zeros((n_modes, n))
        a = np.zeros((n_modes, n))
        a[:, 0] = p[:, 0]
        a0 = 1.0 / (b * dt * dt)
        a1 = g / (b * dt)
        a2 = 1.0 / (b * dt)
        a3 = 1.0 / (2.0 * b) - 1.0
        a4 = g / b - 1.0
        a5 = dt / 2.0 * (g / b - 2.0)
        for i in range(1, n):
            ui, vi, ai = u[:, i - 1], v[:, i - 1], a[:, i - 1]
            rhs = p[:, i] + a0 * ui + a2 * vi + a3 * ai + c * (a1 * ui + a4 * vi + a5 * ai)
            un = rhs / k_eff
            an = a0 * (un - ui) - a2 * vi - a3 * ai
            u[:, i] = un
            a[:, i] = an
            v[:, i] = vi + dt * ((1.0 - g) * ai + g * an)
        return u, v, a


def simulate_sweep(
    rig,
    drive_point,
    f_start_hz,
    f_end_hz,
    rate_hz_per_s,
    amplitude_N,
    fs_hz,
    sensors=None,
    quantity="accel_mps2",
):
    """
    Linear swept-sine shaker run, ``F(t) = A sin(2 pi (f0 t + rate t^2 / 2))``.

    Responses come from Newmark stepping in modal coordinates. ``quantity``
    selects what the response channels carry (acceleration by default; the
    sensor model only applies to acceleration).
    """
    if not 0 < f_start_hz < f_end_hz < fs_hz / 2:
        raise ValueError("sweep band must satisfy 0 < f_start < f_end < Nyquist")
    if not rate_hz_per_s > 0:
        raise ValueError("sweep rate must be > 0")
    if quantity not in ("accel_mps2", "vel_mps", "disp_m"):
        raise ValueError(f"bad response quantity {quantity!r}")
    sensors = sensors or SensorSpec()
    key = point_key(drive_point)
    drive_dof = rig.dof_of(key)
    duration = (f_end_hz - f_start_hz) / rate_hz_per_s
    n = int(round(duration * fs_hz)) + 1
    t = np.arange(n) / fs_hz
    force = amplitude_N * np.sin(2.0 * np.pi * (f_start_hz * t + 0.5 * rate_hz_per_s * t * t))
    modes = eigen_modes(rig)
    phi = np.column_stack([m.shape for m in modes])
    stepper = NewmarkAverageAcceleration([m.omega for m in modes], [m.zeta for m in modes], 1.0 / fs_hz)
    u, v, a = stepper.run(phi[drive_dof][:, None] * force[None, :])
    q = {"disp_m": u, "vel_mps": v, "accel_mps2": a}[quantity]
    responses, clipped = _sensor_channels(rig, phi @ q, fs_hz, sensors, quantity)
    meta = {
        "mode": "sweep",
        "sample_rate_hz": fs_hz,
        "sweep": {
            "f_start_hz": f_start_hz,
            "f_end_hz": f_end_hz,
            "rate_hz_per_s": rate_hz_per_s,
            "amplitude_N": amplitude_N,
        },
        "sensor": {**asdict(sensors), "band": list(sensors.band)},
        "clipped": clipped,
    }
    return Run(TimeSeries(force, fs_hz, "force_N", channel_id="force"), responses, key, meta)


def inject_noise(run, noise):
    """
    Add pump tones (seeded random phase per channel and tone) and Gaussian
    broadband noise to every acceleration channel. The force channel is left
    alone; an empty spec returns ``run`` itself.
    """
    if noise.is_empty:
        return run
    fs = run.sample_rate_hz
    for f, _ in noise.tones:
        if f >= fs / 2:
            raise ValueError(f"tone {f} Hz at or above Nyquist")
    rng = np.random.default_rng(noise.seed)
    out = []
    for ts in run.responses:
        if ts.quantity != "accel_mps2":
            out.append(ts)
            continue
        x = ts.samples.copy()
        t = ts.time
        for f, amp in noise.tones:
            x += amp * np.cos(2.0 * np.pi * f * t + rng.uniform(0.0, 2.0 * np.pi))
        if noise.broadband_rms > 0:
            x += rng.normal(0.0, noise.broadband_rms, len(x))
        out.append(ts.with_samples(x))
    return replace(run, responses=tuple(out), meta={**run.meta, "noise": noise.to_dict()})


def usable_bandwidth(force_spectrum, drop_db=10.0):
    """
    Highest frequency up to which the force spectrum stays within ``drop_db``
    of its DC level (linear interpolation at the crossing).
    """
    mag = np.abs(force_spectrum.bins)
    if force_spectrum.first_bin != 0:
        raise ValueError("force spectrum must start at DC")
    dc = mag[0]
    if dc == 0:
        raise ValueError("zero force spectrum")
    level = dc * 10.0 ** (-drop_db / 20.0)
    below = np.flatnonzero(mag < level)
    f = force_spectrum.freqs
    if below.size == 0:
        return float(f[-1])
    k = below[0]
    frac = (mag[k - 1] - level) / (mag[k - 1] - mag[k])
    return float(f[k - 1] + frac * (f[k] - f[k - 1]))
