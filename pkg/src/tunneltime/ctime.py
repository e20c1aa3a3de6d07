"""Complex traversal times from lambda-derivatives of amplitudes.

Every time here is a logarithmic derivative ``i d/dlam ln amp`` (or a higher
moment ``i^n amp^{-1} d^n amp``) of an amplitude computed with the extra
potential ``lam * Theta_region``.  Derivatives are taken numerically on a
shared seven-point stencil so that first and second moments come from the
same amplitude evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NumericalDomainError, PostSelectionError
from .model import PotentialSpec, RegionOfInterest
from .scatter import scattering_amplitudes
from .tables import csv_text

__all__ = [
    "ComplexTime",
    "Derivative",
    "MomentumDistribution",
    "lambda_stencil",
    "stencil_derivatives",
    "lambda_derivative",
    "default_step",
    "tunnelling_time",
    "reflection_time",
    "dwell_time_monochromatic",
    "swp_time_monochromatic_all",
    "swp_time_wavepacket",
    "dwell_time_wavepacket",
    "modified_swp_time_wavepacket",
    "channel_derivatives",
    "two_path_time",
    "two_path_moment",
    "ctime_csv",
]

AMPLITUDE_FLOOR = 1e-12
DWELL_IMAG_TOL = 1e-6

# lambda nodes in units of h; order 1 and 2 both use h and 2h stencils
_NODES = np.array([-4, -2, -1, 0, 1, 2, 4], dtype=float)
_IDX = {int(n): i for i, n in enumerate(_NODES)}


@dataclass(frozen=True)
class ComplexTime:
    """Complex value in time units.

    ``role`` is one of ``tunn``, ``refl``, ``dwell-component`` or
    ``moment-n``; ``error`` is the differentiation error estimate.
    """

    value: complex
    role: str = "tunn"
    error: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericalDomainError(f"non-finite complex time {self.value}")
        object.__setattr__(self, "value", complex(self.value))

    @property
    def real(self) -> float:
        return self.value.real

    @property
    def imag(self) -> float:
        return self.value.imag

    def __abs__(self) -> float:
        return abs(self.value)

    def __complex__(self) -> complex:
        return self.value


@dataclass(frozen=True)
class Derivative:
    value: complex | np.ndarray
    error: float | np.ndarray


def default_step(energy: float = 0.0, v_max: float = 0.0) -> float:
    """Lambda step ``1e-4 * max(E, |V|max, 1)``."""
    return 1e-4 * max(abs(energy), abs(v_max), 1.0)


def lambda_stencil(h: float) -> np.ndarray:
    """Lambda values at which amplitudes must be sampled."""
    if not h > 0:
        raise NumericalDomainError("differentiation step must be positive")
    return _NODES * h


def stencil_derivatives(samples, h: float, order: int):
    """First or second derivative at 0 from samples on ``lambda_stencil(h)``.

    Fourth-order central differences at steps h and 2h, combined by one
    Richardson level.  Samples run along axis 0.  Returns ``(value, err)``
    where ``err = |extrapolated - D(h)|``.
    """
    f = np.asarray(samples)
    if f.shape[0] != _NODES.size:
        raise ValueError(f"expected {_NODES.size} stencil samples along axis 0")
    if not np.all(np.isfinite(f)):
        raise NumericalDomainError("non-finite amplitude on the lambda stencil")
    g = {n: f[i] for n, i in _IDX.items()}
    if order == 1:
        d_h = (g[-2] - 8 * g[-1] + 8 * g[1] - g[2]) / (12 * h)
        d_2h = (g[-4] - 8 * g[-2] + 8 * g[2] - g[4]) / (24 * h)
    elif order == 2:
        d_h = (-g[-2] + 16 * g[-1] - 30 * g[0] + 16 * g[1] - g[2]) / (12 * h * h)
        d_2h = (-g[-4] + 16 * g[-2] - 30 * g[0] + 16 * g[2] - g[4]) / (48 * h * h)
    else:
        raise ValueError("order must be 1 or 2")
    value = (16 * d_h - d_2h) / 15
    return value, np.abs(value - d_h)


def lambda_derivative(f: Callable, order: int = 1, h: float = 1e-4, vectorized: bool = False) -> Derivative:
    """Numerical ``d^order f / dlam^order`` at ``lam = 0``.

    ``f`` maps a real lambda to a complex scalar or array.  With
    ``vectorized=True`` it is called once with the whole stencil and must
    return values stacked along axis 0.
    """
    lam = lambda_stencil(h)
    if vectorized:
        samples = np.asarray(f(lam))
    else:
        samples = np.stack([np.asarray(f(float(x)), dtype=complex) for x in lam])
    value, err = stencil_derivatives(samples, h, order)
    if np.ndim(value) == 0:
        return Derivative(complex(value), float(err))
    return Derivative(value, err)


# -- stationary channels ------------------------------------------------------

@dataclass
class ChannelDerivatives:
    """Amplitudes and their first two lambda-derivatives at ``lam = 0``."""

    p: np.ndarray
    T: np.ndarray
    dT: np.ndarray
    d2T: np.ndarray
    R: np.ndarray
    dR: np.ndarray
    d2R: np.ndarray
    flux: np.ndarray
    error: float
    h: float


def channel_derivatives(V: PotentialSpec, region: RegionOfInterest, p, mass: float = 1.0,
                        h: float | None = None) -> ChannelDerivatives:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if h is None:
        h = default_step(float(np.max(p)) ** 2 / (2 * mass), V.max_abs_height())
    lam = lambda_stencil(h)
    res = scattering_amplitudes(V, region, lam[:, None], p[None, :], mass)
    T0 = res.T[_IDX[0]]
    R0 = res.R[_IDX[0]]
    dT, eT = stencil_derivatives(res.T, h, 1)
    dR, eR = stencil_derivatives(res.R, h, 1)
    d2T, _ = stencil_derivatives(res.T, h, 2)
    d2R, _ = stencil_derivatives(res.R, h, 2)
    flux = np.real(res.k_right[_IDX[0]]) / p
    err = float(max(np.max(eT), np.max(eR)))
    return ChannelDerivatives(p, T0, dT, d2T, R0, dR, d2R, flux, err, h)


def _log_time(amp, damp, err, role) -> ComplexTime:
    if abs(amp) <= AMPLITUDE_FLOOR:
        raise PostSelectionError(f"{role} amplitude vanishes (|amp| = {abs(amp):.3g})")
    return ComplexTime(1j * damp / amp, role, float(err / abs(amp)))


def tunnelling_time(V: PotentialSpec, region: RegionOfInterest, p: float, mass: float = 1.0,
                    h: float | None = None) -> ComplexTime:
    """``i d/dlam ln T(p, lam)`` at ``lam = 0``."""
    c = channel_derivatives(V, region, p, mass, h)
    return _log_time(c.T[0], c.dT[0], c.error, "tunn")


def reflection_time(V: PotentialSpec, region: RegionOfInterest, p: float, mass: float = 1.0,
                    h: float | None = None) -> ComplexTime:
    """``i d/dlam ln R(p, lam)`` at ``lam = 0``."""
    c = channel_derivatives(V, region, p, mass, h)
    return _log_time(c.R[0], c.dR[0], c.error, "refl")


def _dwell_density(c: ChannelDerivatives) -> np.ndarray:
    return 1j * (c.flux * np.conj(c.T) * c.dT + np.conj(c.R) * c.dR)


def _check_real(value: complex, what: str) -> float:
    if abs(value.imag) > DWELL_IMAG_TOL * max(abs(value.real), 1.0):
        raise NumericalDomainError(f"{what} has imaginary part {value.imag:.3g}; amplitudes inconsistent")
    return value.real


def dwell_time_monochromatic(V: PotentialSpec, region: RegionOfInterest, p: float, mass: float = 1.0,
                             h: float | None = None) -> float:
    """``i [T* dT + R* dR]`` (flux-weighted on the transmitted side)."""
    c = channel_derivatives(V, region, p, mass, h)
    return _check_real(complex(_dwell_density(c)[0]), "dwell time")


def swp_time_monochromatic_all(V: PotentialSpec, region: RegionOfInterest, p: float, mass: float = 1.0,
                               h: float | None = None) -> float:
    """``sqrt(|dT|^2 + |dR|^2)`` without post-selection."""
    c = channel_derivatives(V, region, p, mass, h)
    return float(np.sqrt(c.flux[0] * abs(c.dT[0]) ** 2 + abs(c.dR[0]) ** 2))


# -- wave packets -------------------------------------------------------------

@dataclass(frozen=True)
class MomentumDistribution:
    """Incident momentum amplitude ``A(p)`` on quadrature nodes.

    ``sum(weights * |amplitude|^2)`` approximates the normalisation integral.
    """

    p: np.ndarray
    amplitude: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.p <= 0):
            raise NumericalDomainError("momentum nodes must be positive")
        norm = float(np.sum(self.weights * np.abs(self.amplitude) ** 2))
        if abs(norm - 1.0) > 1e-8:
            raise NumericalDomainError(f"momentum distribution not normalised (norm {norm})")

    @classmethod
    def gaussian(cls, p0: float, sigma_p: float, n: int = 512, width: float = 6.0) -> "MomentumDistribution":
        """Gaussian ``|A|^2`` centred at ``p0``, Gauss-Legendre nodes on ``p0 +- width*sigma``."""
        lo = max(p0 - width * sigma_p, 1e-9 * p0)
        hi = p0 + width * sigma_p
        x, w = leggauss(n)
        p = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * w
        amp = np.exp(-((p - p0) ** 2) / (4 * sigma_p**2)).astype(complex)
        amp /= math.sqrt(np.sum(w * np.abs(amp) ** 2))
        return cls(p, amp, w)

    def integrate(self, values) -> complex:
        return np.sum(self.weights * np.abs(self.amplitude) ** 2 * values)


def _weighted(A: MomentumDistribution, V, region, mass, h):
    c = channel_derivatives(V, region, A.p, mass, h)
    return c, A.weights * np.abs(A.amplitude) ** 2


def swp_time_wavepacket(A: MomentumDistribution, V: PotentialSpec, region: RegionOfInterest,
                        sel: str = "all", mass: float = 1.0, h: float | None = None) -> float:
    """Weighted RMS of ``|d amp|`` over the selected outgoing channel."""
    c, w = _weighted(A, V, region, mass, h)
    num_t = np.sum(w * c.flux * np.abs(c.dT) ** 2)
    num_r = np.sum(w * np.abs(c.dR) ** 2)
    W_t = np.sum(w * c.flux * np.abs(c.T) ** 2)
    W_r = np.sum(w * np.abs(c.R) ** 2)
    if sel == "tunn":
        num, W = num_t, W_t
    elif sel == "refl":
        num, W = num_r, W_r
    elif sel == "all":
        num, W = num_t + num_r, W_t + W_r
    else:
        raise ValueError(f"unknown selection {sel!r}")
    if W < AMPLITUDE_FLOOR:
        raise PostSelectionError(f"probability of channel {sel!r} is {W:.3g}")
    return float(math.sqrt(num / W))


def dwell_time_wavepacket(A: MomentumDistribution, V: PotentialSpec, region: RegionOfInterest,
                          mass: float = 1.0, h: float | None = None) -> float:
    c, w = _weighted(A, V, region, mass, h)
    return _check_real(complex(np.sum(w * _dwell_density(c))), "dwell time")


def modified_swp_time_wavepacket(A: MomentumDistribution, V: PotentialSpec, region: RegionOfInterest,
                                 sel: str = "all", mass: float = 1.0, h: float | None = None) -> float:
    """Cube-root time ``[sum W Re(tau1 conj(tau2)) / W]^(1/3)`` of the beta^j clock.

    ``W Re(tau1 conj(tau2)) = Im(d amp * conj(d2 amp))`` per channel.
    """
    c, w = _weighted(A, V, region, mass, h)
    num_t = np.sum(w * c.flux * np.imag(c.dT * np.conj(c.d2T)))
    num_r = np.sum(w * np.imag(c.dR * np.conj(c.d2R)))
    W_t = np.sum(w * c.flux * np.abs(c.T) ** 2)
    W_r = np.sum(w * np.abs(c.R) ** 2)
    num, W = {"tunn": (num_t, W_t), "refl": (num_r, W_r), "all": (num_t + num_r, W_t + W_r)}[sel]
    if W < AMPLITUDE_FLOOR:
        raise PostSelectionError(f"probability of channel {sel!r} is {W:.3g}")
    return float(np.cbrt(num / W))


# -- two virtual paths --------------------------------------------------------

def _exact(x):
    if isinstance(x, complex):
        if x.imag:
            return None
        x = x.real
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def two_path_moment(A1, tau1, A2, tau2, n: int = 1):
    """``(A1 tau1^n + A2 tau2^n) / (A1 + A2)``, exactly for real inputs."""
    vals = [_exact(v) for v in (A1, tau1, A2, tau2)]
    if all(v is not None for v in vals):
        a1, t1, a2, t2 = vals
        den = a1 + a2
        if den == 0:
            raise PostSelectionError("amplitudes interfere destructively (A1 + A2 = 0)")
        return (a1 * t1**n + a2 * t2**n) / den
    den = complex(A1) + complex(A2)
    if den == 0:
        raise PostSelectionError("amplitudes interfere destructively (A1 + A2 = 0)")
    return (complex(A1) * tau1**n + complex(A2) * tau2**n) / den


def two_path_time(A1, tau1, A2, tau2) -> float:
    """Modulus of the complex time for two virtual paths of durations tau1, tau2."""
    m = two_path_moment(A1, tau1, A2, tau2, 1)
    return float(abs(m))


def ctime_csv(V: PotentialSpec, region: RegionOfInterest, p, mass: float = 1.0) -> str:
    c = channel_derivatives(V, region, p, mass)
    rows = []
    for i, pi in enumerate(c.p):
        tt = 1j * c.dT[i] / c.T[i] if abs(c.T[i]) > AMPLITUDE_FLOOR else complex("nan")
        tr = 1j * c.dR[i] / c.R[i] if abs(c.R[i]) > AMPLITUDE_FLOOR else complex("nan")
        dwell = np.real(1j * (c.flux[i] * np.conj(c.T[i]) * c.dT[i] + np.conj(c.R[i]) * c.dR[i]))
        swp = np.sqrt(c.flux[i] * abs(c.dT[i]) ** 2 + abs(c.dR[i]) ** 2)
        rows.append((pi, tt.real, tt.imag, tr.real, tr.imag, dwell, swp))
    return csv_text(["p", "Re_tau_tunn", "Im_tau_tunn", "Re_tau_refl", "Im_tau_refl", "tau_dwell", "T_swp_all"], rows)
