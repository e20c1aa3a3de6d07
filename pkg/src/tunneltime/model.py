"""Potentials, the region of interest and spatial grids.

Units: hbar = 1 throughout; the particle mass ``mass`` defaults to 1 and is
passed explicitly to every operation that needs it.

A potential is piecewise constant: an ordered list of non-overlapping
segments ``[x_lo, x_hi)`` with a height each, zero outside the listed
support.  Segments may extend to +-inf (a potential step).  Individual named
segments can carry a piecewise-linear height schedule in time.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import NumericalDomainError, SchemaError

__all__ = [
    "UnitsConvention",
    "RegionOfInterest",
    "Segment",
    "Profile",
    "PotentialSpec",
    "SpatialGrid",
    "composite_potential",
    "sample_potential",
    "rectangular_barrier",
    "potential_step",
    "piecewise",
]


@dataclass(frozen=True)
class UnitsConvention:
    """hbar is fixed at one; only the mass is configurable."""

    mass: float = 1.0
    hbar: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not self.mass > 0:
            raise SchemaError(f"mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class RegionOfInterest:
    """The interval Omega = [a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise SchemaError(f"region needs a < b, got [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a

    def indicator(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ((x >= self.a) & (x <= self.b)).astype(float)

    def mirrored(self) -> "RegionOfInterest":
        return RegionOfInterest(-self.b, -self.a)

    @classmethod
    def whole(cls, grid: "SpatialGrid") -> "RegionOfInterest":
        """Region containing every cell of ``grid``."""
        return cls(grid.x_min, grid.x_max)


@dataclass(frozen=True)
class Profile:
    """Piecewise-linear height samples ``heights[i]`` at ``times[i]``."""

    times: tuple
    heights: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        h = np.asarray(self.heights, dtype=float)
        if t.ndim != 1 or t.shape != h.shape or t.size < 2:
            raise SchemaError("profile needs matching 1-D times/heights with >= 2 samples")
        if np.any(np.diff(t) <= 0):
            raise SchemaError("profile times must be strictly increasing")
        if not np.all(np.isfinite(h)):
            raise SchemaError("profile heights must be finite")
        object.__setattr__(self, "times", tuple(float(v) for v in t))
        object.__setattr__(self, "heights", tuple(float(v) for v in h))

    @classmethod
    def from_function(cls, func, t1: float, t2: float, n: int = 401) -> "Profile":
        t = np.linspace(t1, t2, n)
        return cls(tuple(t), tuple(float(func(s)) for s in t))

    @property
    def domain(self) -> tuple[float, float]:
        return self.times[0], self.times[-1]

    def __call__(self, t: float) -> float:
        lo, hi = self.domain
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if t < lo - tol or t > hi + tol:
            raise NumericalDomainError(f"t={t} outside schedule domain [{lo}, {hi}]")
        return float(np.interp(t, self.times, self.heights))


@dataclass(frozen=True)
class Segment:
    """A constant-height piece on ``[x_lo, x_hi)``.

    ``shift`` is an additive offset applied on top of the scheduled height of
    a named segment (static segments fold offsets into ``height``).
    """

    x_lo: float
    x_hi: float
    height: float
    name: str | None = None
    shift: float = 0.0

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise SchemaError(f"segment needs x_lo < x_hi, got [{self.x_lo}, {self.x_hi})")
        if not math.isfinite(self.height):
            raise SchemaError("segment heights must be finite")


@dataclass(frozen=True)
class PotentialSpec:
    """Piecewise-constant potential, optionally with per-segment schedules."""

    segments: tuple = ()
    schedule: Mapping[str, Profile] = field(default_factory=dict)

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=lambda s: s.x_lo))
        for left, right in zip(segs, segs[1:]):
            if right.x_lo < left.x_hi:
                raise SchemaError(f"segments overlap: {left} and {right}")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "schedule", dict(self.schedule))
        for name in self.schedule:
            if not any(s.name == name for s in segs):
                raise SchemaError(f"schedule refers to unknown segment {name!r}")

    @property
    def is_static(self) -> bool:
        return not any(s.name in self.schedule for s in self.segments)

    @property
    def time_domain(self) -> tuple[float, float] | None:
        if self.is_static:
            return None
        lo = max(p.domain[0] for p in self.schedule.values())
        hi = min(p.domain[1] for p in self.schedule.values())
        return lo, hi

    def height(self, seg: Segment, t: float | None = None) -> float:
        if seg.name in self.schedule:
            if t is None:
                t = self.schedule[seg.name].domain[0]
            return self.schedule[seg.name](t) + seg.shift
        return seg.height + seg.shift

    def at_time(self, t: float | None) -> "PotentialSpec":
        """Static snapshot (schedules evaluated at ``t``)."""
        return PotentialSpec(tuple(Segment(s.x_lo, s.x_hi, self.height(s, t)) for s in self.segments))

    def max_abs_height(self) -> float:
        hs = [abs(self.height(s)) for s in self.segments]
        for p in self.schedule.values():
            hs.extend(abs(h) for h in p.heights)
        return max(hs, default=0.0)

    def __call__(self, x, t: float | None = None) -> np.ndarray:
        """Point values (half-open segments)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for s in self.segments:
            out[(x >= s.x_lo) & (x < s.x_hi)] = self.height(s, t)
        return out

    def shifted(self, offset: float) -> "PotentialSpec":
        """Same potential plus a constant everywhere (gauge shift)."""
        segs = list(self.segments)
        pieces = []
        edge = -math.inf
        for s in segs:
            if s.x_lo > edge:
                pieces.append(Segment(edge, s.x_lo, offset))
            pieces.append(replace(s, shift=s.shift + offset) if s.name in self.schedule
                          else replace(s, height=s.height + offset))
            edge = s.x_hi
        if edge < math.inf:
            pieces.append(Segment(edge, math.inf, offset))
        return PotentialSpec(tuple(pieces), self.schedule)

    def mirrored(self) -> "PotentialSpec":
        return PotentialSpec(tuple(replace(s, x_lo=-s.x_hi, x_hi=-s.x_lo) for s in self.segments),
                             self.schedule)

    # -- JSON ---------------------------------------------------------------
    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        segs = []
        for s in self.segments:
            d = {"x_lo": num(s.x_lo), "x_hi": num(s.x_hi), "height": s.height}
            if s.name is not None:
                d["name"] = s.name
            if s.shift:
                d["shift"] = s.shift
            segs.append(d)
        sched = {k: {"t": list(p.times), "height": list(p.heights)} for k, p in self.schedule.items()}
        return {"segments": segs, "schedule": sched}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PotentialSpec":
        if not isinstance(data, Mapping):
            raise SchemaError("potential must be a JSON object")
        unknown = set(data) - {"segments", "schedule"}
        if unknown:
            raise SchemaError(f"unknown potential fields: {sorted(unknown)}")
        segs = []
        for d in data.get("segments", []):
            extra = set(d) - {"x_lo", "x_hi", "height", "name", "shift"}
            if extra:
                raise SchemaError(f"unknown segment fields: {sorted(extra)}")
            try:
                segs.append(Segment(float(d["x_lo"]), float(d["x_hi"]), float(d["height"]),
                                    d.get("name"), float(d.get("shift", 0.0))))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"bad segment {d!r}: {exc}") from exc
        sched = {}
        for name, p in data.get("schedule", {}).items():
            try:
                sched[name] = Profile(tuple(p["t"]), tuple(p["height"]))
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"bad schedule entry {name!r}") from exc
        return cls(tuple(segs), sched)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PotentialSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid; points sit at cell midpoints.

    Cell ``j`` is ``[x_min + j dx, x_min + (j+1) dx)`` and its sample point is
    the midpoint, so that a region whose edges fall on cell boundaries is
    represented with its exact width.
    """

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if n < 256 or n & (n - 1):
            raise SchemaError(f"n_points must be a power of two >= 256, got {n}")
        if not self.x_min < self.x_max:
            raise SchemaError("grid needs x_min < x_max")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_points) + 0.5) * self.dx

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def mask(self, region: RegionOfInterest) -> np.ndarray:
        """Midpoint-rule membership of cells in ``region``."""
        return region.indicator(self.x)

    def edge_mask(self, fraction: float = 0.05) -> np.ndarray:
        n_edge = max(1, int(round(fraction * self.n_points)))
        m = np.zeros(self.n_points, dtype=bool)
        m[:n_edge] = True
        m[-n_edge:] = True
        return m


def _breakpoints(V: PotentialSpec, region: RegionOfInterest) -> list[float]:
    pts = {region.a, region.b}
    for s in V.segments:
        pts.update((s.x_lo, s.x_hi))
    return sorted(pts)


def composite_potential(V: PotentialSpec, region: RegionOfInterest, lam: float) -> PotentialSpec:
    """Return ``V + lam * Theta_region``.

    Region edges become breakpoints; cells inside the region are always kept
    (even at zero height), cells outside keep the pieces of ``V``.
    """
    lam = float(lam)
    pts = _breakpoints(V, region)
    starts = [s.x_lo for s in V.segments]
    pieces = []
    for lo, hi in zip(pts, pts[1:]):
        if lo == hi:
            continue
        mid = _midpoint(lo, hi)
        inside = region.a <= mid <= region.b
        i = bisect.bisect_right(starts, mid) - 1
        base = V.segments[i] if i >= 0 and mid < V.segments[i].x_hi else None
        add = lam if inside else 0.0
        if base is None:
            if inside:
                pieces.append(Segment(lo, hi, add))
            continue
        if base.name in V.schedule:
            pieces.append(Segment(lo, hi, base.height, base.name, base.shift + add))
        else:
            pieces.append(Segment(lo, hi, base.height + add, base.name, base.shift))
    return PotentialSpec(tuple(pieces), V.schedule)


def _midpoint(lo: float, hi: float) -> float:
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - 1.0
    if math.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def sample_potential(V: PotentialSpec, grid: SpatialGrid, t: float | None = None) -> np.ndarray:
    """Potential at the grid's cell midpoints; static specs ignore ``t``."""
    if not V.is_static:
        if t is None:
            raise NumericalDomainError("time-dependent potential needs a time")
        lo, hi = V.time_domain
        if t < lo - 1e-12 * max(1, abs(lo)) or t > hi + 1e-12 * max(1, abs(hi)):
            raise NumericalDomainError(f"t={t} outside schedule domain [{lo}, {hi}]")
    return V(grid.x, t)


def rectangular_barrier(height: float, width: float, x0: float = 0.0) -> PotentialSpec:
    return PotentialSpec((Segment(x0, x0 + width, height),))


def potential_step(height: float, x0: float = 0.0) -> PotentialSpec:
    return PotentialSpec((Segment(x0, math.inf, height),))


def piecewise(segments: Sequence[tuple]) -> PotentialSpec:
    """Build a static spec from ``(x_lo, x_hi, height)`` triples."""
    return PotentialSpec(tuple(Segment(*s) for s in segments))
