"""Spin-j Salecker-Wigner-Peres clock coupled to a 1D particle.

The coupling ``omega * J_z * Theta_region`` is diagonal in the spin
projection ``m``, so the joint evolution is exact: the component with
projection ``m`` moves in ``V + m omega Theta_region`` and carries the weight
``gamma_m``.  All (m, omega) pairs with distinct ``m * omega`` share one
batched propagation.

Clock basis: ``beta^k_m = exp(-i m phi_k) / sqrt(2j+1)`` with
``phi_k = 2 pi k / (2j+1)``, ``k = 0..2j``; a reading ``k`` means the duration
``phi_k / omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import NumericalDomainError, PostSelectionError, SchemaError
from .evolve import Wavefunction, propagate_batch
from .model import PotentialSpec, RegionOfInterest, SpatialGrid
from .tables import csv_text

__all__ = [
    "spin_size",
    "gswp",
    "q_factor",
    "q_prime",
    "q_modified",
    "ClockBasis",
    "SpinState",
    "ClockConfig",
    "Postselector",
    "JointState",
    "evolve_coupled",
    "coupled_sweep",
    "readout",
    "default_omega_grid",
    "WeakLimitResult",
    "weak_limit_extract",
    "modified_clock_extract",
    "dwell_probe",
    "clock_csv",
]

PROB_FLOOR = 1e-12


def spin_size(j) -> Fraction:
    """Validate ``j`` as a positive integer or half-integer."""
    f = Fraction(j).limit_denominator(2)
    if f <= 0 or f.denominator not in (1, 2) or abs(float(f) - float(j)) > 1e-12:
        raise SchemaError(f"spin size must be a positive (half-)integer, got {j}")
    return f


def _m_values(j) -> np.ndarray:
    j = spin_size(j)
    return np.array([float(-j + i) for i in range(int(2 * j) + 1)])


def gswp(phi, j) -> complex:
    """``(2j+1)^-1 sum_m exp(i m phi)``, i.e. ``sin((2j+1)phi/2) / ((2j+1) sin(phi/2))``."""
    m = _m_values(j)
    phi = np.asarray(phi, dtype=float)
    val = np.exp(1j * np.multiply.outer(phi, m)).sum(axis=-1) / m.size
    return complex(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class ClockBasis:
    j: Fraction
    m: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)
    states: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        j = spin_size(self.j)
        object.__setattr__(self, "j", j)
        m = _m_values(j)
        n = m.size
        phi = 2 * np.pi * np.arange(n) / n
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "states", np.exp(-1j * np.outer(phi, m)) / math.sqrt(n))

    @property
    def dim(self) -> int:
        return self.m.size

    @property
    def jz(self) -> np.ndarray:
        return np.diag(self.m)

    def times(self, omega: float) -> np.ndarray:
        """Durations ``tau_k = phi_k / omega``."""
        return self.phi / omega

    def signed_angles(self) -> np.ndarray:
        """``phi_k - phi_j`` for integer ``j``: angles measured from the middle state."""
        if self.j.denominator != 1:
            raise NumericalDomainError("signed readout needs integer j")
        return self.phi - self.phi[int(self.j)]

    def matrix_element(self, k: int, op: np.ndarray, k2: int = 0) -> complex:
        return complex(np.vdot(self.states[k], op @ self.states[k2]))


@dataclass(frozen=True)
class SpinState:
    """Amplitudes ``gamma_m`` for ``m = -j..j``."""

    j: Fraction
    amplitudes: np.ndarray

    def __post_init__(self):
        j = spin_size(self.j)
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (int(2 * j) + 1,):
            raise SchemaError(f"spin state for j={j} needs {int(2 * j) + 1} amplitudes")
        if abs(np.vdot(a, a).real - 1.0) > 1e-12:
            raise SchemaError("spin state must have unit norm")
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def beta(cls, j, k: int = 0) -> "SpinState":
        return cls(j, ClockBasis(j).states[k])

    @classmethod
    def from_spec(cls, j, spec) -> "SpinState":
        """``"beta0"``, ``"betaj"`` or an explicit amplitude list (normalised here)."""
        if spec == "beta0":
            return cls.beta(j, 0)
        if spec == "betaj":
            jj = spin_size(j)
            if jj.denominator != 1:
                raise SchemaError("betaj needs integer j")
            return cls.beta(j, int(jj))
        if spec == "probe":
            b = ClockBasis(j).states
            return cls(j, (b[0] + b[1]) / math.sqrt(2))
        try:
            a = np.asarray([complex(v) if not isinstance(v, (list, tuple)) else complex(v[0], v[1]) for v in spec])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad spin state {spec!r}") from exc
        nrm = math.sqrt(float(np.vdot(a, a).real))
        if nrm == 0:
            raise SchemaError("spin state amplitudes are all zero")
        return cls(j, a / nrm)


def q_factor(j) -> float:
    """``sum_k phi_k |<beta^k|J_z|beta^0>|^2``."""
    b = ClockBasis(j)
    return float(sum(b.phi[k] * abs(b.matrix_element(k, b.jz)) ** 2 for k in range(b.dim)))


def q_prime(j, gamma: SpinState) -> float:
    """``2 Im sum_k phi_k <gamma|beta^k><beta^k|J_z|gamma>`` (dwell-probe gain)."""
    b = ClockBasis(j)
    g = gamma.amplitudes
    s = sum(b.phi[k] * np.vdot(g, b.states[k]) * np.vdot(b.states[k], b.jz @ g) for k in range(b.dim))
    return float(2 * np.imag(s))


def q_modified(j) -> float:
    """Gain of the beta^j clock read with signed angles.

    ``sum_l phi'_l Im(conj(a_l) b_l)`` with ``a_l = <beta^l|J_z|beta^j>`` and
    ``b_l = <beta^l|J_z^2|beta^j>``.
    """
    b = ClockBasis(j)
    ang = b.signed_angles()
    jj = int(b.j)
    jz = b.jz
    s = 0.0
    for k in range(b.dim):
        a = b.matrix_element(k, jz, jj)
        c = b.matrix_element(k, jz @ jz, jj)
        s += ang[k] * np.imag(np.conj(a) * c)
    return float(s)


@dataclass(frozen=True)
class ClockConfig:
    j: Fraction
    omega_L: float
    gamma_I: SpinState | None = None

    def __post_init__(self):
        j = spin_size(self.j)
        object.__setattr__(self, "j", j)
        if not self.omega_L >= 0:
            raise SchemaError("omega_L must be non-negative")
        g = self.gamma_I if self.gamma_I is not None else SpinState.beta(j, 0)
        if g.j != j:
            raise SchemaError("initial spin state has the wrong dimension")
        object.__setattr__(self, "gamma_I", g)


@dataclass(frozen=True)
class Postselector:
    """Projector on the particle's final state.

    kind: ``all``; ``transmitted`` / ``reflected`` (position half-lines
    beyond ``cut``); ``momentum+`` / ``momentum-`` (spectral half-lines);
    ``mask`` (explicit 0/1 grid mask); ``state`` and ``complement`` (rank-one
    projector on ``vector`` and its complement, used for bound/free).
    """

    kind: str = "all"
    cut: float = 0.0
    mask: np.ndarray | None = None
    vector: np.ndarray | None = None

    KINDS = ("all", "transmitted", "reflected", "momentum+", "momentum-", "mask", "state", "complement")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SchemaError(f"unknown post-selector {self.kind!r}")

    @classmethod
    def bound(cls, psi0: Wavefunction) -> "Postselector":
        return cls("state", vector=psi0.values / psi0.norm())

    @classmethod
    def free(cls, psi0: Wavefunction) -> "Postselector":
        return cls("complement", vector=psi0.values / psi0.norm())

    def apply(self, values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
        """Project rows of ``values`` (last axis is the grid)."""
        if self.kind == "all":
            return values
        if self.kind in ("transmitted", "reflected"):
            sel = grid.x > self.cut if self.kind == "transmitted" else grid.x < self.cut
            return values * sel
        if self.kind == "mask":
            return values * np.asarray(self.mask, dtype=float)
        if self.kind in ("momentum+", "momentum-"):
            k = grid.k
            sel = (k > 0) if self.kind == "momentum+" else (k < 0)
            return np.fft.ifft(np.fft.fft(values, axis=-1) * sel, axis=-1)
        v = self.vector
        proj = np.multiply.outer(values @ np.conj(v) * grid.dx, v)
        return proj if self.kind == "state" else values - proj

    def probability(self, values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
        return np.sum(np.abs(self.apply(values, grid)) ** 2, axis=-1) * grid.dx


@dataclass(frozen=True)
class JointState:
    """Components ``psi_m`` (rows, ``m = -j..j``) of the particle-spin state."""

    grid: SpatialGrid
    components: np.ndarray
    j: Fraction
    omega_L: float
    t: float = 0.0

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.components) ** 2) * self.grid.dx)

    def spin_projection(self, basis: ClockBasis) -> np.ndarray:
        """Particle states ``<beta^k|Psi>`` as rows."""
        return np.conj(basis.states) @ self.components


def coupled_sweep(psi_i: Wavefunction, j, gamma: SpinState, omegas, V: PotentialSpec,
                  region: RegionOfInterest | None, t1: float, t2: float, dt: float | None = None,
                  mass: float = 1.0, check_wrap: bool = True) -> list[JointState]:
    """:func:`evolve_coupled` for several couplings with shared propagations."""
    m = _m_values(j)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    lam_all = np.multiply.outer(omegas, m)
    lams, inverse = np.unique(np.round(lam_all, 15), return_inverse=True)
    out = propagate_batch(psi_i, V, region, lams, t1, t2, dt, psi_i.grid, mass, check_wrap)
    inverse = inverse.reshape(lam_all.shape)
    res = []
    for i, w in enumerate(omegas):
        comps = gamma.amplitudes[:, None] * out[inverse[i]]
        res.append(JointState(psi_i.grid, comps, spin_size(j), float(w), t2))
    return res


def evolve_coupled(psi_i: Wavefunction, cfg: ClockConfig, V: PotentialSpec, region: RegionOfInterest | None,
                   t1: float, t2: float, dt: float | None = None, mass: float = 1.0,
                   check_wrap: bool = True) -> JointState:
    """Exact joint evolution of particle and clock spin."""
    return coupled_sweep(psi_i, cfg.j, cfg.gamma_I, [cfg.omega_L], V, region, t1, t2, dt, mass, check_wrap)[0]


def readout(joint: JointState, sel: Postselector, basis: ClockBasis, signed: bool = False):
    """Pointer probabilities ``P(k)`` under post-selection and the mean reading.

    With ``signed=True`` the angles are measured from ``beta^j`` (modified
    clock).  Returns ``(P, T_Omega, W)`` where ``W`` is the unnormalised
    post-selection probability.
    """
    rows = joint.spin_projection(basis)
    pk = sel.probability(rows, joint.grid)
    W = float(np.sum(pk))
    if W <= PROB_FLOOR:
        raise PostSelectionError(f"post-selected probability {W:.3g} is empty")
    P = pk / W
    if joint.omega_L == 0:
        return P, 0.0, W
    ang = basis.signed_angles() if signed else basis.phi
    return P, float(np.dot(ang, P) / joint.omega_L), W


def default_omega_grid(j, duration: float, n: int = 6, max_rotation: float = 0.2) -> np.ndarray:
    """Geometric grid halving from ``max_rotation / (j * duration)``."""
    w_max = max_rotation / (float(spin_size(j)) * duration)
    return w_max / 2.0 ** np.arange(n)


@dataclass
class WeakLimitResult:
    value: float
    error: float
    coefficient: float
    omegas: np.ndarray
    readings: np.ndarray
    linear_ratio: float | None = None
    metadata: dict = field(default_factory=dict)


def _richardson_zero(omegas, f):
    """Extrapolate ``f(omega)`` to 0 from the three smallest of a halving grid."""
    order = np.argsort(omegas)
    w = np.asarray(omegas)[order]
    f = np.asarray(f)[order]
    if w.size < 3:
        raise NumericalDomainError("omega grid needs at least three points")
    if not np.allclose(w[1:3] / w[:2], 2.0, rtol=1e-9):
        raise NumericalDomainError("omega grid must halve between its smallest values")
    c01 = 2 * f[0] - f[1]
    c12 = 2 * f[1] - f[2]
    return c01, abs(c01 - c12) / 3


def _check_grid(omegas):
    w = np.sort(np.asarray(omegas, dtype=float))
    if w[0] <= 0:
        raise NumericalDomainError("omega grid must be positive")
    if w[-1] / w[0] < 10 * (1 - 1e-12):
        raise NumericalDomainError("omega grid must span at least one decade")
    return w


def weak_limit_extract(runner: Callable, j, omega_grid) -> WeakLimitResult:
    """SWP time from the weak-coupling slope of the clock reading.

    ``runner(omegas)`` returns the mean readings ``T_Omega``.  The slope
    ``T_Omega / omega`` is extrapolated to zero coupling and
    ``T_SWP = sqrt(slope / Q(j))``.
    """
    w = _check_grid(omega_grid)
    T = np.asarray(runner(w), dtype=float)
    slope, err = _richardson_zero(w, T / w)
    if slope <= 0:
        raise NumericalDomainError(f"negative weak-limit slope {slope:.3g}; coupling not weak or selection empty")
    q = q_factor(j)
    value = math.sqrt(slope / q)
    return WeakLimitResult(value, err / (2 * q * value), slope, w, T,
                           metadata={"omega_max": float(w[-1]), "Q": q})


def _linear_ratio(w, T):
    """``|a| / (|b| omega_max)`` from a least-squares fit ``a w + b w^2 + c w^3``."""
    A = np.vstack([w, w**2, w**3]).T
    coef, *_ = np.linalg.lstsq(A / T.max(), T / T.max(), rcond=None)
    a, b, _ = coef
    return float(abs(a) / (abs(b) * w.max()))


def modified_clock_extract(runner: Callable, j, omega_grid) -> WeakLimitResult:
    """Cube-root time of the beta^j clock read with signed angles.

    The reading starts at order ``omega^2``; ``T'/omega^2`` is extrapolated
    to zero coupling and divided by the gain :func:`q_modified`.
    """
    jj = spin_size(j)
    if jj.denominator != 1:
        raise NumericalDomainError("modified clock needs integer j")
    w = _check_grid(omega_grid)
    T = np.asarray(runner(w), dtype=float)
    coef, err = _richardson_zero(w, T / w**2)
    q = q_modified(j)
    value = float(np.cbrt(coef / q))
    err_v = err / (3 * abs(q) * max(value * value, 1e-300))
    return WeakLimitResult(value, err_v, coef, w, T, linear_ratio=_linear_ratio(w, T),
                           metadata={"omega_max": float(w[-1]), "Q_modified": q})


def dwell_probe(psi_i: Wavefunction, V: PotentialSpec, region: RegionOfInterest | None, gamma: SpinState,
                basis: ClockBasis, omega_grid, t1: float, t2: float, dt: float | None = None,
                mass: float = 1.0, check_wrap: bool = True) -> WeakLimitResult:
    """Dwell time from the first-order shift of the pointer distribution.

    ``delta T = sum_k tau_k (P(k) - |<beta^k|gamma>|^2)`` tends to
    ``Q'(j, gamma) * tau_dwell``; no post-selection is applied.
    """
    qp = q_prime(basis.j, gamma)
    if abs(qp) < 1e-10:
        raise NumericalDomainError("initial spin state has no dwell-probe gain (Q' = 0)")
    w = _check_grid(omega_grid)
    joints = coupled_sweep(psi_i, basis.j, gamma, w, V, region, t1, t2, dt, mass, check_wrap)
    p0 = np.abs(np.conj(basis.states) @ gamma.amplitudes) ** 2
    shifts = []
    for jt in joints:
        P, _, _ = readout(jt, Postselector("all"), basis)
        shifts.append(float(np.dot(basis.phi, P - p0) / jt.omega_L))
    shifts = np.array(shifts)
    c, err = _richardson_zero(w, shifts)
    return WeakLimitResult(c / qp, err / abs(qp), c, w, shifts, metadata={"Q_prime": qp})


def clock_csv(omegas, probabilities, readings) -> str:
    rows = []
    for w, P, T in zip(omegas, probabilities, readings):
        for k, pk in enumerate(P):
            rows.append((w, k, pk, T))
    return csv_text(["omega_L", "k", "P_k", "T_Omega"], rows)
