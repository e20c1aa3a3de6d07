"""One-dimensional tunnel-ionisation model.

Geometry (all lengths in units with hbar = 1)::

    x < 0        hard wall, height ``wall``
    0 <= x < a   well, depth ``V_w``
    a <= x < a+d barrier region (the region of interest), height ``V_b0``
    x >= a+d     outside, height 0

A pulse ``s(t)`` (raised-cosine bump on ``[t1, t1 + pulse]``, zero after)
tilts the potential to the right of the well: the barrier region is cut into
``n_slices`` constant slices whose heights drop linearly from ``V_b0`` to
``V_b0 - F s(t)`` and the outside drops to ``-F s(t)``.  During the pulse the
bound level sits above the outside floor, so the particle can tunnel out;
after the pulse the static potential is restored and escaped particles fly
away to the right.

At ``t2`` the wavefunction is split into the bound part ``C psi_0`` and a
free part whose momentum amplitudes ``B(p)`` are plane-wave overlaps taken
far to the right of the barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import LinearOperator, eigsh

from .ctime import ComplexTime, lambda_stencil, stencil_derivatives
from .errors import NumericalDomainError, PostSelectionError
from .evolve import Wavefunction, default_dt, dwell_time_stopwatch, propagate_batch
from .model import PotentialSpec, Profile, RegionOfInterest, Segment, SpatialGrid, sample_potential
from .tables import csv_text

__all__ = [
    "IonisationModel",
    "IonisationResult",
    "pulse_shape",
    "bound_state",
    "count_bound_states",
    "run_ionisation",
    "ionisation_sweep",
    "ionisation_complex_times",
    "swp_times_ionisation",
    "dwell_ionisation",
    "dwell_complex",
    "ionisation_stopwatch",
    "ionisation_csv",
    "ionisation_summary",
]

AMPLITUDE_FLOOR = 1e-12
COMPLETENESS_LIMIT = 1e-2
LAMBDA_STEP = 1e-4
# below this ionisation probability the free channel counts as closed (grid noise level)
FREE_FLOOR = 1e-8
# imaginary dwell residue per unit duration; set by the channel completeness
IMAG_LIMIT = 1e-3


def pulse_shape(t, t_on: float, duration: float):
    """C^1 bump ``sin^2(pi (t - t_on) / duration)`` on the pulse window, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    u = (t - t_on) / duration
    return np.where((u >= 0) & (u <= 1), np.sin(np.pi * u) ** 2, 0.0)


@dataclass(frozen=True)
class IonisationModel:
    mass: float = 1.0
    V_w: float = 2.0
    a: float = 2.0
    d: float = 3.0
    V_b0: float = 0.0
    F: float = 3.0
    wall: float = 1e3
    t1: float = 0.0
    t2: float = 40.0
    pulse: float = 10.0
    n_slices: int = 12
    grid: SpatialGrid = field(default_factory=lambda: SpatialGrid(-10.0, 150.0, 2048))
    dt: float | None = 0.002
    buffer: float = 1.0
    ramp: float = 3.0
    region: RegionOfInterest | None = None
    offset: float = 0.0
    schedule_samples: int = 601
    tilt: bool = True

    def __post_init__(self):
        if not (self.V_w > 0 and self.a > 0 and self.d > 0 and self.mass > 0):
            raise NumericalDomainError("well depth, widths and mass must be positive")
        if not self.t2 > self.t1 or not self.pulse > 0 or self.t1 + self.pulse > self.t2:
            raise NumericalDomainError("pulse must finish within [t1, t2]")
        if not self.grid.x_min < 0 < self.a + self.d + self.buffer + self.ramp < self.grid.x_max:
            raise NumericalDomainError("grid must contain the wall edge and the far detection zone")

    @property
    def omega(self) -> RegionOfInterest:
        return self.region if self.region is not None else RegionOfInterest(self.a, self.a + self.d)

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else default_dt(self.grid, self.mass)

    def initial_state(self) -> tuple[float, Wavefunction]:
        return bound_state(self.static_potential(), self.grid, self.mass, dt=self.time_step)

    @property
    def detector_edge(self) -> float:
        return self.a + self.d + self.buffer

    def static_potential(self) -> PotentialSpec:
        segs = [Segment(-math.inf, 0.0, self.wall), Segment(0.0, self.a, -self.V_w)]
        if self.V_b0:
            segs.append(Segment(self.a, self.a + self.d, self.V_b0))
        return PotentialSpec(tuple(segs))

    def potential(self) -> PotentialSpec:
        """Time-dependent potential including the pulse and any gauge offset."""
        t = np.linspace(self.t1, self.t2, self.schedule_samples)
        s = pulse_shape(t, self.t1, self.pulse)
        segs = [Segment(-math.inf, 0.0, self.wall), Segment(0.0, self.a, -self.V_w)]
        sched = {}
        if not self.tilt:
            # uniform lowering of the barrier, outside stays at zero
            segs.append(Segment(self.a, self.a + self.d, self.V_b0, "barrier"))
            sched["barrier"] = Profile(tuple(t), tuple(self.V_b0 - self.F * s))
            V = PotentialSpec(tuple(segs), sched)
            return V.shifted(self.offset) if self.offset else V
        w = self.d / self.n_slices
        for i in range(self.n_slices):
            lo = self.a + i * w
            frac = (i + 0.5) / self.n_slices
            name = f"slice{i}"
            segs.append(Segment(lo, lo + w, self.V_b0, name))
            sched[name] = Profile(tuple(t), tuple(self.V_b0 - self.F * frac * s))
        segs.append(Segment(self.a + self.d, math.inf, 0.0, "outside"))
        sched["outside"] = Profile(tuple(t), tuple(-self.F * s))
        V = PotentialSpec(tuple(segs), sched)
        return V.shifted(self.offset) if self.offset else V


def count_bound_states(V: PotentialSpec, grid: SpatialGrid, mass: float = 1.0) -> tuple[int, float]:
    """Number of negative levels of the finite-difference Hamiltonian and its lowest level."""
    v = sample_potential(V, grid)
    off = -0.5 / (mass * grid.dx**2)
    w = eigh_tridiagonal(v - 2 * off, np.full(grid.n_points - 1, off), eigvals_only=True,
                         select="v", select_range=(-np.inf, 0.0))
    return int(w.size), float(w[0]) if w.size else float("nan")


def _strang_filter(psi, v, grid, dt, mass, E0, duration):
    """Project onto the split-step eigenvector nearest ``E0`` by a windowed time average."""
    half = np.exp(-0.25j * grid.k**2 * dt / mass)
    pot = np.exp(-1j * dt * v)
    n = max(1, int(round(duration / dt)))
    phase = np.exp(1j * E0 * dt)
    acc = np.zeros_like(psi)
    for i in range(n + 1):
        acc += np.sin(np.pi * (i + 0.5) / (n + 1)) ** 2 * phase**i * psi
        psi = sfft.ifft(half * sfft.fft(psi))
        psi *= pot
        psi = sfft.ifft(half * sfft.fft(psi))
    return acc


def bound_state(V: PotentialSpec, grid: SpatialGrid, mass: float = 1.0, tol: float = 1e-13,
                dt: float | None = None, filter_time: float = 20.0) -> tuple[float, Wavefunction]:
    """Single bound state of a static potential on the propagation grid.

    The level count comes from the finite-difference Hamiltonian; the
    eigenpair itself is computed for the spectral Hamiltonian used by the
    propagator (FFT kinetic energy).  With ``dt`` the state is further
    filtered onto the eigenvector of one split-operator step, which removes
    the O(dt^2) leakage a high wall otherwise causes; the residual check
    applies to the spectral eigenpair before filtering.
    """
    n_bound, e_fd = count_bound_states(V, grid, mass)
    if n_bound != 1:
        raise NumericalDomainError(f"potential has {n_bound} bound states, expected exactly one")
    v = sample_potential(V, grid)
    kin = grid.k**2 / (2 * mass)

    def matvec(x):
        x = np.asarray(x).ravel()
        return sfft.ifft(kin * sfft.fft(x)).real + v * x

    H = LinearOperator((grid.n_points, grid.n_points), matvec=matvec, dtype=float)
    # FD eigenvector as the starting guess speeds up Lanczos considerably
    off = -0.5 / (mass * grid.dx**2)
    _, v0 = eigh_tridiagonal(v - 2 * off, np.full(grid.n_points - 1, off), select="i", select_range=(0, 0))
    E, vec = eigsh(H, k=1, which="SA", v0=v0[:, 0], tol=tol, maxiter=20000, ncv=64)
    psi = vec[:, 0]
    psi /= math.sqrt(np.sum(psi**2) * grid.dx)
    # fix the sign: positive in the well
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    E0 = float(E[0])
    residual = float(np.sqrt(np.sum((matvec(psi) - E0 * psi) ** 2) * grid.dx))
    if residual > 1e-8:
        raise NumericalDomainError(f"bound-state residual {residual:.3g} above 1e-8")
    if not E0 < 0:
        raise NumericalDomainError("lowest level is not bound")
    psi = psi.astype(complex)
    if dt is not None:
        psi = _strang_filter(psi, v, grid, dt, mass, E0, filter_time)
        i = np.argmax(np.abs(psi))
        psi *= abs(psi[i]) / psi[i]
        psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
    return E0, Wavefunction(grid, psi, 0.0)


@dataclass
class IonisationResult:
    """Channel amplitudes at ``t2``.

    ``p`` are the positive momenta of the detection grid (spacing ``dp``);
    ``completeness_defect = |C|^2 + sum |B|^2 dp - 1``.
    """

    C: complex
    p: np.ndarray
    B: np.ndarray
    dp: float
    lam: float = 0.0
    final: np.ndarray | None = None

    @property
    def W_ion(self) -> float:
        return float(np.sum(np.abs(self.B) ** 2) * self.dp)

    @property
    def completeness_defect(self) -> float:
        return abs(self.C) ** 2 + self.W_ion - 1.0


def _detection_window(model: IonisationModel) -> np.ndarray:
    x = model.grid.x
    u = np.clip((x - model.detector_edge) / model.ramp, 0.0, 1.0)
    return np.sin(0.5 * np.pi * u) ** 2


def _channels(model, psi0, finals, lams):
    grid = model.grid
    C = finals @ np.conj(psi0.values) * grid.dx
    free = (finals - np.multiply.outer(C, psi0.values)) * _detection_window(model)
    # B(p) = (2 pi)^-1/2 int free(x) e^{-ipx} dx on the FFT momenta
    k = grid.k
    phase = np.exp(-1j * k * grid.x[0])
    B = sfft.fft(free, axis=-1) * phase * grid.dx / math.sqrt(2 * np.pi)
    pos = k > 0
    order = np.argsort(k[pos])
    dp = 2 * np.pi / (grid.x_max - grid.x_min)
    return [IonisationResult(complex(C[i]), k[pos][order], B[i][pos][order], dp, float(lams[i]), finals[i])
            for i in range(len(lams))]


def ionisation_sweep(model: IonisationModel, lams, psi0: Wavefunction | None = None,
                     check: bool = True) -> list[IonisationResult]:
    """:func:`run_ionisation` for a batch of lambda values sharing one propagation."""
    if psi0 is None:
        _, psi0 = model.initial_state()
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    out = propagate_batch(psi0, model.potential(), model.omega, lams, model.t1, model.t2,
                          model.time_step, model.grid, model.mass)
    res = _channels(model, psi0, out, lams)
    if check:
        for r in res:
            if abs(r.completeness_defect) > COMPLETENESS_LIMIT:
                raise NumericalDomainError(
                    f"channel completeness defect {r.completeness_defect:.3g}; enlarge grid or t2")
    return res


def run_ionisation(model: IonisationModel, lam: float = 0.0, psi0: Wavefunction | None = None) -> IonisationResult:
    """Bound amplitude ``C`` and momentum amplitudes ``B(p)`` at ``t2``."""
    return ionisation_sweep(model, [lam], psi0)[0]


@dataclass
class _ChannelDerivatives:
    C: complex
    dC: complex
    d2C: complex
    p: np.ndarray
    B: np.ndarray
    dB: np.ndarray
    d2B: np.ndarray
    dp: float
    error: float


_CACHE: dict = {}


def _derivatives(model: IonisationModel, h: float = LAMBDA_STEP) -> _ChannelDerivatives:
    key = (model, h)
    if key in _CACHE:
        return _CACHE[key]
    lam = lambda_stencil(h)
    res = ionisation_sweep(model, lam)
    Cs = np.array([r.C for r in res])
    Bs = np.stack([r.B for r in res])
    dC, eC = stencil_derivatives(Cs, h, 1)
    d2C, _ = stencil_derivatives(Cs, h, 2)
    dB, eB = stencil_derivatives(Bs, h, 1)
    d2B, _ = stencil_derivatives(Bs, h, 2)
    mid = int(np.argmin(np.abs(lam)))
    out = _ChannelDerivatives(complex(Cs[mid]), complex(dC), complex(d2C), res[mid].p, Bs[mid], dB, d2B,
                              res[mid].dp, float(max(eC, np.max(eB))))
    if len(_CACHE) > 8:
        _CACHE.clear()
    _CACHE[key] = out
    return out


def ionisation_complex_times(model: IonisationModel, channel="bound") -> tuple[ComplexTime, ComplexTime]:
    """First and second complex moments for the bound channel or a momentum ``p``.

    For a momentum the nearest detection-grid momentum is used.
    """
    c = _derivatives(model)
    if channel == "bound":
        amp, d1, d2 = c.C, c.dC, c.d2C
    else:
        i = int(np.argmin(np.abs(c.p - float(channel))))
        amp, d1, d2 = c.B[i], c.dB[i], c.d2B[i]
    if abs(amp) <= AMPLITUDE_FLOOR:
        raise PostSelectionError(f"channel {channel!r} amplitude vanishes")
    return (ComplexTime(1j * d1 / amp, "moment-1", c.error / abs(amp)),
            ComplexTime(-d2 / amp, "moment-2", c.error / abs(amp)))


def swp_times_ionisation(model: IonisationModel, channels=("bound", "free", "all")) -> dict:
    """SWP times for the bound, free and unselected channels.

    ``T_all^2 = (1 - W) T_bound^2 + W T_free^2`` exactly; a free time is
    only available when ``W_ion`` exceeds ``FREE_FLOOR``, otherwise the free
    channel is dropped and ``T_all = T_bound``.
    """
    c = _derivatives(model)
    W = float(np.sum(np.abs(c.B) ** 2) * c.dp)
    out = {"W_ion": W}
    if abs(c.C) <= AMPLITUDE_FLOOR:
        raise PostSelectionError("bound amplitude vanishes")
    T_b = abs(c.dC / c.C)
    out["T_bound"] = T_b
    if W < FREE_FLOOR:
        if "free" in channels:
            raise PostSelectionError(f"ionisation probability {W:.3g} too small for the free channel")
        out["T_all"] = T_b
        return out
    T_f = math.sqrt(float(np.sum(np.abs(c.dB) ** 2) * c.dp) / W)
    out["T_free"] = T_f
    out["T_all"] = math.sqrt((1 - W) * T_b**2 + W * T_f**2)
    return out


def dwell_complex(model: IonisationModel) -> complex:
    """Channel sum for the dwell time before taking the real part."""
    c = _derivatives(model)
    return complex(1j * (np.conj(c.C) * c.dC + np.sum(np.conj(c.B) * c.dB) * c.dp))


def dwell_ionisation(model: IonisationModel) -> float:
    """``|C|^2 tau(bound) + int |B|^2 tau(p) dp`` (real part).

    The imaginary part equals ``-1/2 d/dlam (|C|^2 + W_ion)``, which vanishes
    only when the channels are complete; it is therefore bounded by the
    completeness error and checked against ``IMAG_LIMIT`` relative to the
    duration.
    """
    val = dwell_complex(model)
    if abs(val.imag) > IMAG_LIMIT * (model.t2 - model.t1):
        raise NumericalDomainError(f"dwell time has imaginary residue {val.imag:.3g}")
    return float(val.real)


def ionisation_stopwatch(model: IonisationModel, psi0: Wavefunction | None = None) -> float:
    """Time integral of the probability in the region for the ionisation run."""
    if psi0 is None:
        _, psi0 = model.initial_state()
    return dwell_time_stopwatch(psi0, model.potential(), model.omega, model.t1, model.t2, model.time_step,
                                model.mass)


def ionisation_csv(res: IonisationResult) -> str:
    return csv_text(["p", "Re_B", "Im_B"], zip(res.p, res.B.real, res.B.imag))


def ionisation_summary(model: IonisationModel) -> dict:
    """``{C, W_ion, T_bound, T_free, T_all, tau_dwell}`` with ``T_free = None`` when closed."""
    c = _derivatives(model)
    times = swp_times_ionisation(model, channels=("bound", "all"))
    return {"C": c.C, "W_ion": times["W_ion"], "T_bound": times["T_bound"], "T_free": times.get("T_free"),
            "T_all": times["T_all"], "tau_dwell": dwell_ionisation(model),
            "completeness_defect": abs(c.C) ** 2 + times["W_ion"] - 1.0}
