"""Split-operator propagation with the extra potential ``lam * Theta_region``.

The kinetic factor is applied spectrally on a periodic grid, so there are no
absorbing layers; instead every run watches the outer 5% of the grid and
aborts when probability reaches it.  A batch of lambda values (or of clock
components, which are the same thing) is propagated together with one FFT
call per step.

Strang step n (time ``t_n = t1 + n dt``)::

    psi -> K(dt/2) P(t_n + dt/2) K(dt/2) psi

The state between the first half-kinetic factor and the potential factor is
called ``chi_n``; sums over ``chi_n`` reproduce lambda-derivatives of the
discrete propagator exactly, which is what makes the dwell identities hold to
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .ctime import ComplexTime, lambda_stencil, stencil_derivatives
from .errors import DomainTooSmallError, NumericalDomainError, PostSelectionError
from .model import PotentialSpec, RegionOfInterest, SpatialGrid, sample_potential
from .tables import csv_text, json_text

__all__ = [
    "Wavefunction",
    "ConditionedState",
    "gaussian_packet",
    "free_gaussian_exact",
    "default_dt",
    "propagate",
    "propagate_batch",
    "conditioned_states",
    "complex_moments",
    "complex_time_spacetime_integral",
    "dwell_time_stopwatch",
    "dwell_time_operator_form",
    "swp_all_operator_form",
    "wavefunction_csv",
]

EDGE_FRACTION = 0.05
EDGE_TOL = 1e-6
AMPLITUDE_FLOOR = 1e-12
LAMBDA_STEP = 1e-4


@dataclass(frozen=True)
class Wavefunction:
    grid: SpatialGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n_points,):
            raise NumericalDomainError("wavefunction length does not match the grid")
        object.__setattr__(self, "values", v)

    def inner(self, other) -> complex:
        """``<self|other>`` with the grid measure."""
        o = other.values if isinstance(other, Wavefunction) else np.asarray(other)
        return complex(np.vdot(self.values, o) * self.grid.dx)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dx))

    def normalized(self) -> "Wavefunction":
        return Wavefunction(self.grid, self.values / self.norm(), self.t)

    def probability_in(self, region: RegionOfInterest) -> float:
        return float(np.sum(np.abs(self.values) ** 2 * self.grid.mask(region)) * self.grid.dx)


@dataclass(frozen=True)
class ConditionedState:
    """``psi^(n) = i^n d^n/dlam^n U(lam) psi_I`` at ``lam = 0`` (unnormalised for n >= 1)."""

    n: int
    state: np.ndarray
    error: float = 0.0


def gaussian_packet(grid: SpatialGrid, x0: float, p0: float, sigma: float, t: float = 0.0) -> Wavefunction:
    """Unit-norm packet with ``|psi|^2`` of standard deviation ``sigma``."""
    x = grid.x
    psi = np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * p0 * x)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
    return Wavefunction(grid, psi, t)


def free_gaussian_exact(x, x0: float, p0: float, sigma: float, t: float, mass: float = 1.0) -> np.ndarray:
    """Closed-form free evolution of the continuum Gaussian packet."""
    x = np.asarray(x, dtype=float)
    z = 1 + 1j * t / (2 * mass * sigma**2)
    xc = x - x0 - p0 * t / mass
    return ((2 * np.pi * sigma**2) ** -0.25 / np.sqrt(z)
            * np.exp(-(xc**2) / (4 * sigma**2 * z) + 1j * p0 * (x - p0 * t / (2 * mass))))


def default_dt(grid: SpatialGrid, mass: float = 1.0) -> float:
    return 0.2 * mass * grid.dx**2


class _Stepper:
    """Batched Strang stepping for ``V + lam_b * Theta`` over a lambda batch."""

    def __init__(self, grid, V, region, lams, t1, t2, dt, mass, check_wrap, check_every=50):
        if not t2 >= t1:
            raise NumericalDomainError("propagation needs t2 >= t1")
        if dt is None:
            dt = default_dt(grid, mass)
        if not dt > 0:
            raise NumericalDomainError("time step must be positive")
        if not V.is_static:
            lo, hi = V.time_domain
            if t1 < lo - 1e-12 * max(1, abs(lo)) or t2 > hi + 1e-12 * max(1, abs(hi)):
                raise NumericalDomainError(f"schedule [{lo}, {hi}] does not cover [{t1}, {t2}]")
        self.grid = grid
        self.V = V
        self.lams = np.atleast_1d(np.asarray(lams, dtype=float))
        self.n_steps = max(1, int(math.ceil((t2 - t1) / dt - 1e-9))) if t2 > t1 else 0
        self.dt = (t2 - t1) / self.n_steps if self.n_steps else 0.0
        self.t1 = t1
        self.mass = mass
        self.mask = grid.mask(region) if region is not None else np.zeros(grid.n_points)
        k = grid.k
        self.half_kin = np.exp(-0.25j * k * k * self.dt / mass)
        self.full_kin = self.half_kin * self.half_kin
        self.check_wrap = check_wrap
        self.check_every = check_every
        self.edge = grid.edge_mask(EDGE_FRACTION)
        self._lam_phase = np.exp(-1j * self.dt * np.outer(self.lams, self.mask))
        self._static = np.exp(-1j * self.dt * sample_potential(V, grid)) if V.is_static else None
        if self._static is None:
            t_mid = t1 + (np.arange(self.n_steps) + 0.5) * self.dt
            lo, hi = V.time_domain
            t_mid = np.clip(t_mid, lo, hi)
            # segment id per grid point, heights per (step, segment); one gather per step
            x = grid.x
            self._seg_id = np.zeros(x.size, dtype=int)
            cols = [np.zeros(self.n_steps)]
            for i, seg in enumerate(V.segments, start=1):
                self._seg_id[(x >= seg.x_lo) & (x < seg.x_hi)] = i
                if seg.name in V.schedule:
                    prof = V.schedule[seg.name]
                    cols.append(np.interp(t_mid, prof.times, prof.heights) + seg.shift)
                else:
                    cols.append(np.full(self.n_steps, seg.height + seg.shift))
            self._heights = np.stack(cols, axis=1)

    def potential_factor(self, n):
        if self._static is not None:
            base = self._static
        else:
            base = np.exp(-1j * self.dt * self._heights[n][self._seg_id])
        return base[None, :] * self._lam_phase

    def _wrap(self, psi, t):
        if not self.check_wrap:
            return
        p_edge = np.max(np.sum(np.abs(psi[:, self.edge]) ** 2, axis=1)) * self.grid.dx
        if p_edge > EDGE_TOL:
            raise DomainTooSmallError(
                f"probability {p_edge:.3g} reached the grid edges at t={t:.6g}; enlarge the grid")

    def _kin(self, psi, factor):
        return sfft.ifft(sfft.fft(psi, axis=-1, overwrite_x=True) * factor, axis=-1, overwrite_x=True)

    def forward(self, psi, observer: Callable | None = None):
        """Propagate a ``(batch, N)`` array; ``observer(n, chi_n)`` sees each chi_n."""
        psi = np.array(psi, dtype=complex, copy=True)
        if self.n_steps == 0:
            return psi
        self._wrap(psi, self.t1)
        psi = self._kin(psi, self.half_kin)
        for n in range(self.n_steps):
            if observer is not None:
                observer(n, psi)
            psi *= self.potential_factor(n)
            last = n == self.n_steps - 1
            psi = self._kin(psi, self.half_kin if last else self.full_kin)
            if self.check_wrap and (last or n % self.check_every == 0):
                self._wrap(psi, self.t1 + (n + 1) * self.dt)
        return psi

    def backward(self, psi, observer: Callable | None = None):
        """Exact inverse of :meth:`forward`; ``observer(n, phi)`` sees the post-potential state."""
        psi = np.array(psi, dtype=complex, copy=True)
        if self.n_steps == 0:
            return psi
        hk, fk = np.conj(self.half_kin), np.conj(self.full_kin)
        psi = self._kin(psi, hk)
        for n in range(self.n_steps - 1, -1, -1):
            if observer is not None:
                observer(n, psi)
            psi *= np.conj(self.potential_factor(n))
            psi = self._kin(psi, hk if n == 0 else fk)
        return psi


def _as_batch(psi):
    arr = psi.values if isinstance(psi, Wavefunction) else np.asarray(psi, dtype=complex)
    return arr[None, :] if arr.ndim == 1 else arr


def propagate_batch(psi, V: PotentialSpec, region: RegionOfInterest | None, lams, t1: float, t2: float,
                    dt: float | None = None, grid: SpatialGrid | None = None, mass: float = 1.0,
                    check_wrap: bool = True, observer: Callable | None = None) -> np.ndarray:
    """Propagate one state (or a batch) for every ``lam`` in ``lams``.

    A single input state is broadcast over the lambda batch; a batch of
    states must have one row per lambda.  Returns an array ``(len(lams), N)``.
    """
    if grid is None:
        grid = psi.grid
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    arr = _as_batch(psi)
    if arr.shape[0] == 1 and lams.size > 1:
        arr = np.repeat(arr, lams.size, axis=0)
    if arr.shape[0] != lams.size:
        raise NumericalDomainError("state batch and lambda batch differ in length")
    stepper = _Stepper(grid, V, region, lams, t1, t2, dt, mass, check_wrap)
    return stepper.forward(arr, observer)


def propagate(psi: Wavefunction, V: PotentialSpec, region: RegionOfInterest | None, lam: float,
              t1: float, t2: float, dt: float | None = None, mass: float = 1.0,
              check_wrap: bool = True) -> Wavefunction:
    """``U(t2, t1 | lam) psi`` for ``V + lam * Theta_region``."""
    out = propagate_batch(psi, V, region, [lam], t1, t2, dt, psi.grid, mass, check_wrap)
    return Wavefunction(psi.grid, out[0], t2)


def conditioned_states(psi_i: Wavefunction, V: PotentialSpec, region: RegionOfInterest, t1: float, t2: float,
                       n_max: int = 2, dt: float | None = None, mass: float = 1.0, h: float = LAMBDA_STEP,
                       check_wrap: bool = True) -> list[ConditionedState]:
    """States ``psi^(n)`` for ``n = 0..n_max`` from the lambda stencil."""
    if n_max not in (0, 1, 2):
        raise NumericalDomainError("n_max must be 0, 1 or 2")
    lam = lambda_stencil(h)
    out = propagate_batch(psi_i, V, region, lam, t1, t2, dt, psi_i.grid, mass, check_wrap)
    states = [ConditionedState(0, out[3])]
    for n in range(1, n_max + 1):
        d, err = stencil_derivatives(out, h, n)
        states.append(ConditionedState(n, (1j**n) * d, float(np.max(err))))
    return states


def _amplitude_derivatives(psi_i, psi_f, V, region, t1, t2, dt, mass, h, check_wrap):
    lam = lambda_stencil(h)
    out = propagate_batch(psi_i, V, region, lam, t1, t2, dt, psi_i.grid, mass, check_wrap)
    amps = out @ np.conj(psi_f.values) * psi_i.grid.dx
    return amps


def complex_moments(psi_i: Wavefunction, psi_f: Wavefunction, V: PotentialSpec, region: RegionOfInterest,
                    t1: float, t2: float, dt: float | None = None, mass: float = 1.0,
                    h: float = LAMBDA_STEP, check_wrap: bool = True) -> tuple[complex, ComplexTime, ComplexTime]:
    """Amplitude ``<psi_F|U|psi_I>`` with the first two complex moments."""
    amps = _amplitude_derivatives(psi_i, psi_f, V, region, t1, t2, dt, mass, h, check_wrap)
    a0 = amps[3]
    if abs(a0) <= AMPLITUDE_FLOOR:
        raise PostSelectionError(f"transition amplitude vanishes (|A| = {abs(a0):.3g})")
    d1, e1 = stencil_derivatives(amps, h, 1)
    d2, e2 = stencil_derivatives(amps, h, 2)
    return (complex(a0), ComplexTime(1j * d1 / a0, "moment-1", float(e1 / abs(a0))),
            ComplexTime(-d2 / a0, "moment-2", float(e2 / abs(a0))))


def complex_time_spacetime_integral(psi_i: Wavefunction, psi_f: Wavefunction, V: PotentialSpec,
                                    region: RegionOfInterest, t1: float, t2: float, dt: float | None = None,
                                    mass: float = 1.0, check_wrap: bool = True) -> ComplexTime:
    """Complex time as the overlap of forward and backward histories inside the region.

    ``psi_I`` is propagated to ``t2``; then it and ``psi_F`` are stepped back
    together and ``dt * <psi_F(t')|Theta|psi_I(t')>`` is accumulated.  No
    lambda differentiation is involved.
    """
    grid = psi_i.grid
    stepper = _Stepper(grid, V, region, [0.0], t1, t2, dt, mass, check_wrap)
    fwd = stepper.forward(_as_batch(psi_i))
    amp = complex(np.vdot(psi_f.values, fwd[0]) * grid.dx)
    if abs(amp) <= AMPLITUDE_FLOOR:
        raise PostSelectionError(f"transition amplitude vanishes (|A| = {abs(amp):.3g})")
    pair = np.vstack([fwd, _as_batch(psi_f)])
    mask = stepper.mask
    acc = [0j]

    def observe(n, phi):
        acc[0] += np.vdot(phi[1] * mask, phi[0])

    stepper.check_wrap = False
    stepper.backward(pair, observe)
    return ComplexTime(acc[0] * grid.dx * stepper.dt / amp, "moment-1")


def dwell_time_stopwatch(psi_i: Wavefunction, V: PotentialSpec, region: RegionOfInterest, t1: float, t2: float,
                         dt: float | None = None, mass: float = 1.0, check_wrap: bool = True) -> float:
    """Time integral of the probability inside the region."""
    stepper = _Stepper(psi_i.grid, V, region, [0.0], t1, t2, dt, mass, check_wrap)
    mask = stepper.mask
    acc = [0.0]

    def observe(n, chi):
        acc[0] += float(np.sum(np.abs(chi[0]) ** 2 * mask))

    stepper.forward(_as_batch(psi_i), observe)
    return acc[0] * psi_i.grid.dx * stepper.dt


def dwell_time_operator_form(psi_i: Wavefunction, V: PotentialSpec, region: RegionOfInterest, t1: float,
                             t2: float, dt: float | None = None, mass: float = 1.0, h: float = LAMBDA_STEP,
                             check_wrap: bool = True) -> complex:
    """``<psi^(0)|psi^(1)>``; real for exact arithmetic."""
    s = conditioned_states(psi_i, V, region, t1, t2, 1, dt, mass, h, check_wrap)
    return complex(np.vdot(s[0].state, s[1].state) * psi_i.grid.dx)


def swp_all_operator_form(psi_i: Wavefunction, V: PotentialSpec, region: RegionOfInterest, t1: float,
                          t2: float, dt: float | None = None, mass: float = 1.0, h: float = LAMBDA_STEP,
                          check_wrap: bool = True) -> float:
    """``||psi^(1)||``: the SWP time without post-selection."""
    s = conditioned_states(psi_i, V, region, t1, t2, 1, dt, mass, h, check_wrap)
    return float(np.sqrt(np.sum(np.abs(s[1].state) ** 2) * psi_i.grid.dx))


def wavefunction_csv(psi: Wavefunction) -> tuple[str, str]:
    """CSV body ``x, Re_psi, Im_psi`` and a JSON metadata document."""
    body = csv_text(["x", "Re_psi", "Im_psi"], zip(psi.grid.x, psi.values.real, psi.values.imag))
    g = psi.grid
    meta = json_text({"grid": {"x_min": g.x_min, "x_max": g.x_max, "n_points": g.n_points}, "t": psi.t})
    return body, meta
