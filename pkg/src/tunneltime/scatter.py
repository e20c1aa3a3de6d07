"""Stationary 1D scattering on piecewise-constant potentials.

Amplitudes are obtained by composing per-interface and per-layer scattering
matrices with the Redheffer star product.  Transfer-matrix products grow like
cosh(kappa d) in opaque layers; the star product only ever multiplies by
e^{-kappa w}, so deep tunnelling stays finite.

Conventions (hbar = 1):

* unit incident wave e^{ipx} from the left, ``R`` is the coefficient of
  e^{-ipx} on the left and ``T`` the coefficient of e^{ik_R x} on the right;
  free motion gives ``T = 1``;
* wavenumbers are ``sqrt(2 mass (E - V))`` on the principal branch, so an
  evanescent layer has ``k = i kappa`` with ``kappa > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalDomainError
from .model import PotentialSpec, RegionOfInterest, composite_potential
from .tables import csv_text

__all__ = [
    "ScatteringResult",
    "scattering_amplitudes",
    "rectangular_barrier_oracle",
    "step_reflection_oracle",
    "scattering_csv",
]

DEGENERACY_TOL = 1e-14
DEGENERACY_SHIFT = 1e-12


@dataclass
class ScatteringResult:
    """Amplitudes for unit incidence from the left.

    ``p``, ``lam``, ``T`` and ``R`` share one broadcast shape (scalars for
    scalar input).  ``flags`` carries diagnostics such as ``degenerate_k``
    (a wavenumber was nudged off zero) and ``closed_right`` (the right
    asymptote is classically forbidden, so ``T`` is identically zero).
    """

    p: np.ndarray
    lam: np.ndarray
    T: np.ndarray
    R: np.ndarray
    k_right: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    @property
    def unitarity_defect(self) -> np.ndarray:
        """``|R|^2 + (Re k_R / p)|T|^2 - 1``; zero for real potentials."""
        kr = self.p if self.k_right is None else self.k_right
        flux = np.real(kr) / self.p
        return np.abs(self.R) ** 2 + flux * np.abs(self.T) ** 2 - 1.0


def _pieces(V: PotentialSpec, region: RegionOfInterest):
    """Contiguous pieces ``(x_lo, x_hi, base_height, in_region)``."""
    if not V.is_static:
        raise NumericalDomainError("stationary scattering needs a static potential")
    comp = composite_potential(V, region, 0.0)
    out = []
    edge = None
    for s in comp.segments:
        if edge is not None and s.x_lo > edge:
            out.append((edge, s.x_lo, 0.0, False))
        mid = _interior_point(s.x_lo, s.x_hi)
        inside = region.a <= mid <= region.b
        out.append((s.x_lo, s.x_hi, comp.height(s), inside))
        edge = s.x_hi
    return out


def _interior_point(lo, hi):
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - 1.0
    if math.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def _wavenumber(E2, height, lam_flag, lam, mass, flags):
    """Principal-branch sqrt(2 mass (E - V)) with the degeneracy nudge."""
    k2 = E2 - 2.0 * mass * (height + lam_flag * lam)
    scale = np.maximum(E2, 1.0)
    bad = np.abs(k2) <= DEGENERACY_TOL * scale
    if np.any(bad):
        flags["degenerate_k"] = True
        k2 = np.where(bad, DEGENERACY_SHIFT * scale, k2)
    return np.sqrt(k2 + 0j)


def _interface(kl, kr):
    s = kl + kr
    return (kl - kr) / s, 2 * kl / s, (kr - kl) / s, 2 * kr / s


def _star(S1, S2):
    r1, t1, r1p, t1p = S1
    r2, t2, r2p, t2p = S2
    inv = 1.0 / (1.0 - r1p * r2)
    return (r1 + t1p * r2 * t1 * inv,
            t2 * t1 * inv,
            r2p + t2 * r1p * t2p * inv,
            t1p * t2p * inv)


def _propagate_layer(S, k, width):
    r, t, rp, tp = S
    e = np.exp(1j * k * width)
    return r, t * e, rp * e * e, tp * e


def scattering_amplitudes(V: PotentialSpec, region: RegionOfInterest, lam, p, mass: float = 1.0) -> ScatteringResult:
    """Amplitudes ``T(p, lam)``, ``R(p, lam)`` for ``V + lam * Theta_region``.

    ``lam`` and ``p`` broadcast against each other, so a whole lambda stencil
    or momentum sweep costs one pass over the segments.
    """
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    p, lam = np.broadcast_arrays(p, lam)
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise NumericalDomainError("momentum must be positive and finite")
    if not mass > 0:
        raise NumericalDomainError("mass must be positive")
    pieces = _pieces(V, region)
    flags: dict = {}
    E2 = p * p
    if pieces and math.isinf(pieces[0][0]):
        lo_piece = pieces[0]
        if lo_piece[2] != 0.0 or lo_piece[3]:
            raise NumericalDomainError("left asymptote of the potential must be zero")
        pieces = pieces[1:]
    k_left = p.astype(complex)
    if not pieces:
        return ScatteringResult(p, lam, np.ones_like(k_left), np.zeros_like(k_left), k_left, flags)

    right_open = not math.isinf(pieces[-1][1])
    ks = [_wavenumber(E2, h, float(inside), lam, mass, flags) for _, _, h, inside in pieces]
    k_right = k_left if right_open else ks[-1]
    finite = pieces if right_open else pieces[:-1]
    inner = ks if right_open else ks[:-1]
    boundaries = [pc[0] for pc in pieces] + ([pieces[-1][1]] if right_open else [])

    S = _interface(k_left, inner[0]) if inner else _interface(k_left, k_right)
    for idx, (lo, hi, _, _) in enumerate(finite):
        S = _propagate_layer(S, inner[idx], hi - lo)
        k_next = inner[idx + 1] if idx + 1 < len(inner) else k_right
        S = _star(S, _interface(inner[idx], k_next))
    r, t, _, _ = S

    x0 = boundaries[0]
    xN = boundaries[-1]
    R = r * np.exp(2j * p * x0)
    with np.errstate(over="ignore", invalid="ignore"):
        T = t * np.exp(1j * (p * x0 - k_right * xN))
    closed = np.imag(k_right) > 0
    if np.any(closed):
        flags["closed_right"] = True
        T = np.where(closed, 0.0 + 0j, T)
    if T.ndim == 0:
        return ScatteringResult(p[()], lam[()], T[()], R[()], k_right[()], flags)
    return ScatteringResult(p, lam, T, R, k_right, flags)


def rectangular_barrier_oracle(V0: float, d: float, p, mass: float = 1.0) -> ScatteringResult:
    """Closed-form amplitudes of a barrier of height ``V0`` on ``[0, d]``.

    Uses ``q^2 = p^2 - 2 mass V0``; both branches are written through
    ``cos(qd)`` and ``sin(qd)/q`` (resp. their hyperbolic forms), which are
    continuous at ``q = 0``.  Opaque barriers are evaluated scaled by
    ``1/cosh(kappa d)`` so nothing overflows.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or not d > 0:
        raise NumericalDomainError("oracle needs p > 0 and d > 0")
    q2 = p * p - 2.0 * mass * V0
    above = q2 >= 0
    q = np.sqrt(np.abs(q2))
    qd = q * d
    # sinc(x/pi) = sin(x)/x, finite at q = 0
    c_osc = np.cos(np.where(above, qd, 0.0))
    s_osc = d * np.sinc(np.where(above, qd, 0.0) / np.pi)
    kd = np.where(above, 0.0, qd)
    sech = 2.0 * np.exp(-kd) / (1.0 + np.exp(-2.0 * kd))
    tanh = np.tanh(kd)
    # sinh(kd)/(kappa cosh(kd)), with the kappa -> 0 limit d
    s_hyp = np.where(kd > 1e-8, tanh / np.where(q > 0, q, 1.0), d)
    c = np.where(above, c_osc, 1.0)
    s = np.where(above, s_osc, s_hyp)
    scale = np.where(above, 1.0, sech)
    D = c - 1j * (p * p + q2) / (2.0 * p) * s
    T = np.exp(-1j * p * d) * scale / D
    R = 1j * (q2 - p * p) / (2.0 * p) * s / D
    lam = np.zeros_like(p)
    if np.ndim(T) == 0:
        return ScatteringResult(p[()], lam[()], T[()], R[()], None, {})
    return ScatteringResult(p, lam, T, R, None, {})


def step_reflection_oracle(V0: float, p: float, mass: float = 1.0) -> complex:
    """Total-reflection amplitude ``(p - i kappa)/(p + i kappa)`` of a step."""
    if not (p > 0 and p * p < 2.0 * mass * V0):
        raise NumericalDomainError("step oracle needs 0 < p^2 < 2 mass V0")
    kappa = math.sqrt(2.0 * mass * V0 - p * p)
    return complex(p, -kappa) / complex(p, kappa)


def scattering_csv(res: ScatteringResult) -> str:
    cols = np.broadcast_arrays(res.p, res.lam, np.real(res.T), np.imag(res.T),
                               np.real(res.R), np.imag(res.R), res.unitarity_defect)
    rows = zip(*(np.ravel(c) for c in cols))
    return csv_text(["p", "lambda", "ReT", "ImT", "ReR", "ImR", "unitarity_defect"], rows)
