"""Test geometry, operating deflection shapes, phase relations and animation export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rig import AXES, parse_point, point_key

GROUPS = ("foundation", "grout_plate", "steel_plate", "gearbox", "piping")


@dataclass(frozen=True)
class GeometryPoint:
    id: int
    label: str
    position: tuple
    group: str
    pedestal: int | None


@dataclass(frozen=True)
class GeometryModel:
    points: tuple

    def __post_init__(self):
        seen = set()
        for p in self.points:
            if p.id in seen:
                raise ValueError(f"duplicate point {p.id}")
            seen.add(p.id)
            if p.group not in GROUPS:
                raise ValueError(f"unknown group {p.group!r} for point {p.id}")
            if p.group == "piping":
                if p.pedestal is not None:
                    raise ValueError(f"piping point {p.id} must have no pedestal")
            elif p.pedestal not in (1, 2):
                raise ValueError(f"point {p.id} needs pedestal 1 or 2")

    def __contains__(self, pid):
        return any(p.id == pid for p in self.points)

    def point(self, pid):
        for p in self.points:
            if p.id == pid:
                return p
        raise KeyError(f"unknown point {pid}")

    def members(self, group, pedestal=None):
        return sorted(p.id for p in self.points if p.group == group and (pedestal is None or p.pedestal == pedestal))


def geometry_from_dict(d):
    pts = []
    for e in d["points"]:
        ped = e.get("pedestal")
        if ped in ("none", None):
            ped = None
        pts.append(
            GeometryPoint(
                id=int(e["id"]),
                label=str(e.get("label", "")),
                position=tuple(float(v) for v in e["position"]),
                group=e["group"],
                pedestal=None if ped is None else int(ped),
            )
        )
    return GeometryModel(tuple(pts))


def load_geometry(path):
    return geometry_from_dict(json.loads(Path(path).read_text()))


def _wrap_deg(a):
    """Wrap to (-180, 180]."""
    w = -((-a + 180.0) % 360.0 - 180.0)
    return 180.0 if w == -180.0 else w


@dataclass(frozen=True)
class DeflectionShape:
    """Complex receptance (m/N) per ``"id:axis"`` key at one frequency."""

    frequency_hz: float
    entries: dict
    omitted: tuple = ()
    meta: dict = field(default_factory=dict)

    def magnitude(self, key):
        return abs(self.entries[key])

    def phase_deg(self, key):
        return _wrap_deg(float(np.degrees(np.angle(self.entries[key]))))

    def entry(self, point, axis=None):
        key = point if axis is None else f"{point}:{axis}"
        key = point_key(parse_point(key)) if ":" in str(key) else key
        if key not in self.entries:
            raise KeyError(f"no entry for point {key}")
        return self.entries[key]

    def scaled(self, c):
        return DeflectionShape(self.frequency_hz, {k: v * c for k, v in self.entries.items()}, self.omitted, self.meta)


def extract_ods(frfs, f_hz, geometry=None):
    """
    Deflection shape at the bin nearest ``f_hz``: ``H / (-(2 pi f*)^2)``.

    Channels whose point is missing from ``geometry`` are left out and listed
    in ``omitted``.
    """
    frfs = list(frfs)
    if not frfs:
        raise ValueError("no FRFs")
    h0 = frfs[0].h
    if not h0.freqs[0] <= f_hz <= h0.freqs[-1]:
        raise ValueError(f"{f_hz} Hz outside FRF band")
    k = h0.bin_index(f_hz)
    f_star = float(h0.freqs[k])
    if f_star <= 0:
        raise ValueError("ODS needs a non-zero frequency")
    conv = -1.0 / (2.0 * np.pi * f_star) ** 2
    entries, omitted = {}, []
    for fr in frfs:
        pid, _ = parse_point(fr.response_point)
        if geometry is not None and pid not in geometry:
            omitted.append(fr.response_point)
            continue
        entries[fr.response_point] = complex(fr.h.bins[fr.h.bin_index(f_hz)]) * conv
    return DeflectionShape(f_star, entries, tuple(omitted), {"requested_hz": f_hz})


@dataclass(frozen=True)
class PhaseRelation:
    relation: str
    angle_deg: float


def _key(point, axis):
    s = str(point)
    return s if ":" in s else f"{s}:{axis}"


def phase_relation(shape, point_a, point_b, axis="z", in_phase_deg=30.0, out_of_phase_deg=150.0):
    ka, kb = _key(point_a, axis), _key(point_b, axis)
    for k in (ka, kb):
        if k not in shape.entries:
            raise KeyError(f"no entry for point {k}")
    a, b = shape.entries[ka], shape.entries[kb]
    angle = _wrap_deg(float(np.degrees(np.angle(b) - np.angle(a))))
    if abs(angle) <= in_phase_deg:
        rel = "in_phase"
    elif abs(angle) >= out_of_phase_deg:
        rel = "out_of_phase"
    else:
        rel = "indeterminate"
    return PhaseRelation(rel, angle)


@dataclass(frozen=True)
class SeamResult:
    point_a: str
    point_b: str
    mag_diff_rel: float
    phase_diff_deg: float
    passed: bool
    reason: str = ""


def seam_check(shape, pairs, mag_tol_rel=0.05, phase_tol_deg=5.0, axis="z"):
    """
    Pass iff both the relative magnitude difference and the absolute phase
    difference are within tolerance. Relative difference is taken against the
    larger magnitude; two zero entries count as equal.
    """
    out = []
    for a, b in pairs:
        ka, kb = _key(a, axis), _key(b, axis)
        for k in (ka, kb):
            if k not in shape.entries:
                raise KeyError(f"no entry for point {k}")
        za, zb = shape.entries[ka], shape.entries[kb]
        big = max(abs(za), abs(zb))
        dm = abs(abs(za) - abs(zb)) / big if big > 0 else 0.0
        dp = 0.0 if za == zb else abs(_wrap_deg(float(np.degrees(np.angle(zb) - np.angle(za)))))
        reasons = []
        if dm > mag_tol_rel:
            reasons.append("magnitude")
        if dp > phase_tol_deg:
            reasons.append("phase")
        out.append(SeamResult(ka, kb, dm, dp, not reasons, ",".join(reasons)))
    return out


def export_animation(shape, geometry, n_frames=24, scale=1.0):
    """
    Animation document: header plus ``n_frames`` frames of displaced points.

    Frame ``k`` places every point at ``position + scale * Re(entry * exp(2 pi i k / n))``
    along each measured axis; unmeasured axes stay at rest.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if not scale > 0:
        raise ValueError("scale must be > 0")
    by_point = {}
    for key, z in shape.entries.items():
        pid, ax = parse_point(key)
        by_point.setdefault(pid, {})[ax] = z
    frames = []
    for k in range(n_frames):
        rot = np.exp(2j * np.pi * k / n_frames)
        pts = []
        for p in geometry.points:
            pos = list(p.position)
            for i, ax in enumerate(AXES):
                z = by_point.get(p.id, {}).get(ax)
                if z is not None:
                    pos[i] += scale * float((z * rot).real)
            pts.append({"id": p.id, "x": pos[0], "y": pos[1], "z": pos[2]})
        frames.append({"index": k, "points": pts})
    return {
        "frequency_hz": shape.frequency_hz,
        "scale": scale,
        "n_frames": n_frames,
        "frames": frames,
    }
