"""Traversal-time amplitude distribution by Fourier analysis over lambda.

The transition amplitude ``a(lam) = <psi_F|U(lam)|psi_I>`` is the Fourier
transform of the distribution of durations spent in the region,
``a(lam) = int A(tau) exp(-i lam tau) dtau``.  Sampling ``a`` on a uniform
lambda grid and inverting with a DFT gives ``A`` on a uniform tau grid with

    A_j = (dlam / 2 pi) sum_k w_k a_k exp(i lam_k tau_j),

where ``w`` is an optional window.  Because ``lam = 0`` is a grid node and
``w(0) = 1``, ``sum_j A_j dtau = a(0)`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalDomainError, PostSelectionError
from .evolve import Wavefunction, propagate_batch
from .model import PotentialSpec, RegionOfInterest
from .scatter import scattering_amplitudes
from .tables import csv_text, json_text

__all__ = [
    "AmplitudeDistribution",
    "lambda_grid",
    "default_lambda_max",
    "from_samples",
    "conditioned_amplitude",
    "conditioned_amplitudes",
    "stationary_amplitude",
    "moment",
    "accurate_measurement_probability",
    "leaked_fraction",
    "distribution_csv",
]

AMPLITUDE_FLOOR = 1e-12
BATCH = 64


def _window(kind: str, lam: np.ndarray, lam_max: float):
    """Window values and ``w''(0)``."""
    if kind in (None, "none"):
        return np.ones_like(lam), 0.0
    if kind == "hann":
        return 0.5 * (1 + np.cos(np.pi * lam / lam_max)), -0.5 * (np.pi / lam_max) ** 2
    raise NumericalDomainError(f"unknown window {kind!r}")


@dataclass
class AmplitudeDistribution:
    tau: np.ndarray
    amplitudes: np.ndarray
    lambda_max: float
    n_lambda: int
    window: str = "hann"
    lambdas: np.ndarray | None = None
    samples: np.ndarray | None = None
    duration: float | None = None
    window_curvature: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def lambda_range(self) -> float:
        return 2 * self.lambda_max

    @property
    def d_tau(self) -> float:
        return float(self.tau[1] - self.tau[0])

    def total(self) -> complex:
        return complex(np.sum(self.amplitudes) * self.d_tau)


def default_lambda_max(duration: float) -> float:
    """About ``40 / duration``, nudged up so that ``duration`` is a multiple of ``pi / lam_max``.

    Then both tau = 0 and tau = duration fall on tau-grid nodes.
    """
    return math.ceil(40.0 / math.pi) * math.pi / duration


def lambda_grid(lam_max: float, n_lambda: int) -> np.ndarray:
    """``lam_k = (k - n/2) dlam`` on ``[-lam_max, lam_max)``; contains 0."""
    if n_lambda < 256 or n_lambda & (n_lambda - 1):
        raise NumericalDomainError("n_lambda must be a power of two >= 256")
    if not lam_max > 0:
        raise NumericalDomainError("lambda_max must be positive")
    return (np.arange(n_lambda) - n_lambda // 2) * (2 * lam_max / n_lambda)


def from_samples(samples, lam_max: float, window: str = "hann", tau_center: float = 0.0,
                 duration: float | None = None) -> AmplitudeDistribution:
    """Invert lambda samples (on :func:`lambda_grid`) into ``A(tau)``.

    The tau grid is centred on ``tau_center`` (rounded to a multiple of the
    spacing ``pi / lam_max``).
    """
    a = np.asarray(samples, dtype=complex)
    n = a.size
    lam = lambda_grid(lam_max, n)
    dlam = 2 * lam_max / n
    dtau = 2 * np.pi / (n * dlam)
    w, curv = _window(window, lam, lam_max)
    j0 = int(round(tau_center / dtau))
    tau = (np.arange(n) - n // 2 + j0) * dtau
    # direct sum is O(n^2) but n <= a few thousand and keeps the phase bookkeeping obvious
    A = (dlam / (2 * np.pi)) * (np.exp(1j * np.outer(tau, lam)) @ (w * a))
    return AmplitudeDistribution(tau, A, lam_max, n, window or "none", lam, a, duration, curv)


def conditioned_amplitudes(psi_i: Wavefunction, finals: Sequence[Wavefunction], V: PotentialSpec,
                           region: RegionOfInterest, t1: float, t2: float, lam_max: float | None = None,
                           n_lambda: int = 1024, window: str = "hann", dt: float | None = None,
                           mass: float = 1.0, check_wrap: bool = True) -> list[AmplitudeDistribution]:
    """Distributions for several final states sharing one lambda sweep."""
    T = t2 - t1
    if not T > 0:
        raise NumericalDomainError("needs t2 > t1")
    if lam_max is None:
        lam_max = default_lambda_max(T)
    if np.pi / lam_max >= T / 8:
        raise NumericalDomainError(f"tau resolution pi/lam_max = {np.pi / lam_max:.3g} too coarse for duration {T}")
    lam = lambda_grid(lam_max, n_lambda)
    F = np.stack([f.values for f in finals])
    amps = np.empty((len(finals), lam.size), dtype=complex)
    for s in range(0, lam.size, BATCH):
        out = propagate_batch(psi_i, V, region, lam[s:s + BATCH], t1, t2, dt, psi_i.grid, mass, check_wrap)
        amps[:, s:s + BATCH] = np.conj(F) @ out.T * psi_i.grid.dx
    if np.all(np.abs(amps) <= AMPLITUDE_FLOOR):
        raise PostSelectionError("final state has no overlap for any lambda")
    return [from_samples(a, lam_max, window, T / 2, T) for a in amps]


def conditioned_amplitude(psi_i: Wavefunction, psi_f: Wavefunction, V: PotentialSpec, region: RegionOfInterest,
                          t1: float, t2: float, lam_max: float | None = None, n_lambda: int = 1024,
                          window: str = "hann", dt: float | None = None, mass: float = 1.0,
                          check_wrap: bool = True) -> AmplitudeDistribution:
    """``A(psi_F, psi_I, t2, t1 | tau)`` from time-dependent propagation."""
    return conditioned_amplitudes(psi_i, [psi_f], V, region, t1, t2, lam_max, n_lambda, window, dt,
                                  mass, check_wrap)[0]


def stationary_amplitude(V: PotentialSpec, region: RegionOfInterest, p: float, channel: str = "tunn",
                         lam_max: float = 20.0, n_lambda: int = 4096, window: str = "hann",
                         mass: float = 1.0, tau_center: float | None = None) -> AmplitudeDistribution:
    """Distribution behind the stationary amplitude ``T(p)`` or ``R(p)``."""
    lam = lambda_grid(lam_max, n_lambda)
    res = scattering_amplitudes(V, region, lam, p, mass)
    a = res.T if channel == "tunn" else res.R
    if channel not in ("tunn", "refl"):
        raise NumericalDomainError(f"unknown channel {channel!r}")
    if abs(a[n_lambda // 2]) <= AMPLITUDE_FLOOR:
        raise PostSelectionError(f"{channel} amplitude vanishes")
    center = (n_lambda // 4) * np.pi / lam_max if tau_center is None else tau_center
    return from_samples(a, lam_max, window, center)


def moment(dist: AmplitudeDistribution, n: int) -> complex:
    """``int tau^n A dtau / int A dtau`` with the window's curvature removed."""
    if n not in (0, 1, 2):
        raise NumericalDomainError("moments are available for n = 0, 1, 2")
    a0 = dist.total()
    if abs(a0) <= AMPLITUDE_FLOOR:
        raise PostSelectionError("distribution integrates to zero")
    if n == 0:
        return 1.0 + 0j
    raw = complex(np.sum(dist.tau**n * dist.amplitudes) * dist.d_tau)
    if n == 2:
        # windowing adds -w''(0) a(0) to the second moment
        raw += dist.window_curvature * a0
    return raw / a0


def accurate_measurement_probability(dist: AmplitudeDistribution) -> tuple[float, float]:
    """``(sum_j |A_j dtau|^2, |sum_j A_j dtau|^2)``: per-bin versus coherent probability."""
    bins = dist.amplitudes * dist.d_tau
    return float(np.sum(np.abs(bins) ** 2)), float(abs(np.sum(bins)) ** 2)


def leaked_fraction(dist: AmplitudeDistribution, duration: float | None = None) -> float:
    """Share of ``sum |A|^2`` outside ``[-dtau, duration + dtau]``."""
    T = dist.duration if duration is None else duration
    p = np.abs(dist.amplitudes) ** 2
    out = dist.tau < -dist.d_tau
    if T is not None:
        out |= dist.tau > T + dist.d_tau
    return float(np.sum(p[out]) / np.sum(p))


def distribution_csv(dist: AmplitudeDistribution) -> tuple[str, str]:
    body = csv_text(["tau", "Re_A", "Im_A", "abs_A"],
                    zip(dist.tau, dist.amplitudes.real, dist.amplitudes.imag, np.abs(dist.amplitudes)))
    meta = json_text({"lambda_max": dist.lambda_max, "n_lambda": dist.n_lambda, "window": dist.window,
                      "d_tau": dist.d_tau, "d_lambda": 2 * dist.lambda_max / dist.n_lambda,
                      "bin_convention": "P_acc = sum_j |A_j dtau|^2", "duration": dist.duration})
    return body, meta
