import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tunneltime.errors import NumericalDomainError
from tunneltime.model import PotentialSpec, RegionOfInterest, Segment, piecewise, potential_step, rectangular_barrier
from tunneltime.scatter import (
    rectangular_barrier_oracle,
    scattering_amplitudes,
    scattering_csv,
    step_reflection_oracle,
)


def transfer_matrix_oracle(segments, p, mass=1.0):
    """Plain 2x2 transfer-matrix product, fine for moderate kappa d.

    Coefficients (A, B) of ``A e^{ikx} + B e^{-ikx}`` are matched across
    each interface; returns (T, R) for unit incidence from the left with T
    referred to the same x as the incident wave.
    """
    def M(k, x):
        return np.array([[np.exp(1j * k * x), np.exp(-1j * k * x)],
                         [1j * k * np.exp(1j * k * x), -1j * k * np.exp(-1j * k * x)]])

    ks = [np.sqrt(complex(p * p - 2 * mass * h)) for _, _, h in segments]
    edges = [segments[0][0]] + [b for _, b, _ in segments]
    # walk from the right: outgoing e^{ipx} only
    coef = np.array([1.0 + 0j, 0.0])
    k_right = p
    for i in range(len(segments) - 1, -1, -1):
        x = edges[i + 1]
        coef = np.linalg.solve(M(ks[i], x), M(k_right, x) @ coef)
        k_right = ks[i]
    x0 = edges[0]
    coef = np.linalg.solve(M(p, x0), M(k_right, x0) @ coef)
    A, B = coef
    return 1.0 / A, B / A


def test_free_convention():
    res = scattering_amplitudes(PotentialSpec(), RegionOfInterest(0, 2), 0.0, 1.0)
    assert res.T == 1 and res.R == 0


def test_free_segment_inside_region():
    res = scattering_amplitudes(PotentialSpec(), RegionOfInterest(0, 2), 0.0, 1.0)
    assert abs(res.T - 1) < 1e-15 and abs(res.R) < 1e-15


@pytest.mark.parametrize("p", [0.3, 1.0, 1.414213562373095, 1.7, 4.0])
def test_barrier_matches_closed_form(p):
    res = scattering_amplitudes(rectangular_barrier(1.0, 2.0), RegionOfInterest(0, 2), 0.0, p)
    ora = rectangular_barrier_oracle(1.0, 2.0, p)
    assert abs(res.T - ora.T) < 1e-10
    assert abs(res.R - ora.R) < 1e-10


@given(st.floats(-2, 2), st.floats(0.05, 5), st.floats(0.05, 4), st.floats(0.5, 2))
def test_single_segment_oracle_equality(V0, d, p, mass):
    res = scattering_amplitudes(rectangular_barrier(V0, d), RegionOfInterest(0, d), 0.0, p, mass)
    ora = rectangular_barrier_oracle(V0, d, p, mass)
    assert abs(res.T - ora.T) < 1e-10
    assert abs(res.R - ora.R) < 1e-10


def test_lambda_enters_as_height_shift():
    lam = 0.3
    res = scattering_amplitudes(rectangular_barrier(1.0, 2.0), RegionOfInterest(0, 2), lam, 1.0)
    ora = rectangular_barrier_oracle(1.0 + lam, 2.0, 1.0)
    assert abs(res.T - ora.T) < 1e-12 and abs(res.R - ora.R) < 1e-12


def test_oracle_is_unitary():
    ora = rectangular_barrier_oracle(1.0, 2.0, 1.0)
    assert abs(abs(ora.T) ** 2 + abs(ora.R) ** 2 - 1) < 1e-14


def test_oracle_free_limit():
    ora = rectangular_barrier_oracle(0.0, 2.0, 1.0)
    assert abs(ora.T - 1) < 1e-15 and abs(ora.R) < 1e-15


def test_oracle_continuous_at_barrier_top():
    p_top = math.sqrt(2.0)
    eps = 1e-7
    lo = rectangular_barrier_oracle(1.0, 2.0, p_top - eps)
    at = rectangular_barrier_oracle(1.0, 2.0, p_top)
    hi = rectangular_barrier_oracle(1.0, 2.0, p_top + eps)
    assert abs(lo.T - at.T) < 1e-6 and abs(hi.T - at.T) < 1e-6


def test_oracle_agrees_with_dense_slicing():
    n = 10_000
    edges = np.linspace(0.0, 2.0, n + 1)
    V = PotentialSpec(tuple(Segment(float(a), float(b), 1.0) for a, b in zip(edges[:-1], edges[1:])))
    res = scattering_amplitudes(V, RegionOfInterest(0, 2), 0.0, 1.0)
    ora = rectangular_barrier_oracle(1.0, 2.0, 1.0)
    assert abs(res.T - ora.T) < 1e-8 and abs(res.R - ora.R) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_random_barriers_match_transfer_matrix(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    widths = rng.uniform(0.1, 1.0, n)
    edges = np.concatenate([[0.0], np.cumsum(widths)])
    segs = [(float(a), float(b), float(h)) for a, b, h in zip(edges[:-1], edges[1:], rng.uniform(-2, 2, n))]
    for p in rng.uniform(0.1, 3.0, 5):
        res = scattering_amplitudes(piecewise(segs), RegionOfInterest(0, edges[-1]), 0.0, p)
        T, R = transfer_matrix_oracle(segs, p)
        assert abs(res.T - T) < 1e-10 and abs(res.R - R) < 1e-10


def test_opaque_barrier_scale():
    res = scattering_amplitudes(rectangular_barrier(1.0, 20.0), RegionOfInterest(0, 20), 0.0, 1.0)
    ora = rectangular_barrier_oracle(1.0, 20.0, 1.0)
    assert np.isfinite(res.T) and np.isfinite(res.R)
    assert abs(res.T - ora.T) < 1e-10 * abs(ora.T) + 1e-18
    # p = kappa = 1 kills the sinh term: |T| = 2 p kappa / (2 p kappa cosh(kappa d))
    assert abs(res.T) == pytest.approx(1 / math.cosh(20.0), rel=1e-9)


@pytest.mark.parametrize("kd", [10, 30, 50, 200])
def test_deep_tunnelling_is_stable(kd):
    res = scattering_amplitudes(rectangular_barrier(1.0, float(kd)), RegionOfInterest(0, kd), 0.0,
                                np.linspace(0.1, 1.3, 7))
    assert np.all(np.isfinite(res.T)) and np.all(np.isfinite(res.R))
    assert np.max(np.abs(res.unitarity_defect)) < 1e-10


def test_step_reflection_matches_oracle():
    res = scattering_amplitudes(potential_step(1.0), RegionOfInterest(0, math.inf), 0.0, 1.0)
    assert abs(res.R - (-1j)) < 1e-14
    assert res.T == 0 and res.flags.get("closed_right")
    assert abs(step_reflection_oracle(1.0, 1.0) - (-1j)) < 1e-15


@given(st.floats(0.01, 1.4), st.floats(1.0, 3.0))
def test_step_oracle_is_total_reflection(p, V0):
    assert abs(abs(step_reflection_oracle(V0, p)) - 1) < 1e-14


def test_step_oracle_hard_wall_limit():
    assert abs(step_reflection_oracle(1.0, 1e-9) - (-1)) < 1e-8


@pytest.mark.parametrize("p", [math.sqrt(2.0), 2.0])
def test_step_oracle_contract(p):
    with pytest.raises(NumericalDomainError):
        step_reflection_oracle(1.0, p)


barrier_st = st.lists(st.tuples(st.floats(0.05, 2.0), st.floats(-2.0, 2.0)), min_size=1, max_size=8)


@given(barrier_st, st.floats(0.02, 6.0), st.floats(-1.0, 1.0))
def test_unitarity_property(wh, p, lam):
    edges = np.concatenate([[0.0], np.cumsum([w for w, _ in wh])])
    V = piecewise([(float(a), float(b), h) for a, b, (_, h) in zip(edges[:-1], edges[1:], wh)])
    res = scattering_amplitudes(V, RegionOfInterest(0, edges[-1]), lam, p)
    assert abs(res.unitarity_defect) < 1e-10


@given(barrier_st, st.floats(0.05, 4.0))
def test_reciprocity_left_right(wh, p):
    # transmission is the same from either side for any real potential
    edges = np.concatenate([[0.0], np.cumsum([w for w, _ in wh])])
    V = piecewise([(float(a), float(b), h) for a, b, (_, h) in zip(edges[:-1], edges[1:], wh)])
    region = RegionOfInterest(0, edges[-1])
    left = scattering_amplitudes(V, region, 0.0, p)
    right = scattering_amplitudes(V.mirrored(), region.mirrored(), 0.0, p)
    assert abs(left.T - right.T) < 1e-12


def test_symmetric_reflection_phases_agree():
    V = piecewise([(0, 1, 1.0), (1, 2, -0.5), (2, 3, 1.0)])
    left = scattering_amplitudes(V, RegionOfInterest(0, 3), 0.0, 0.9)
    right = scattering_amplitudes(V.mirrored(), RegionOfInterest(-3, 0), 0.0, 0.9)
    # mirrored about x = 0, so reflection phases differ by e^{2ip*3}
    assert abs(left.T - right.T) < 1e-12
    assert abs(left.R - right.R * np.exp(2j * 0.9 * 3)) < 1e-12


def test_slicing_invariance():
    whole = scattering_amplitudes(rectangular_barrier(0.7, 3.0), RegionOfInterest(0, 3), 0.1, 1.1)
    sliced = scattering_amplitudes(piecewise([(0, 1, 0.7), (1, 2.5, 0.7), (2.5, 3, 0.7)]),
                                   RegionOfInterest(0, 3), 0.1, 1.1)
    assert abs(whole.T - sliced.T) < 1e-13 and abs(whole.R - sliced.R) < 1e-13


def test_broadcast_lambda_and_momentum():
    lam = np.linspace(-0.1, 0.1, 5)[:, None]
    p = np.linspace(0.5, 2.0, 4)[None, :]
    res = scattering_amplitudes(rectangular_barrier(1.0, 2.0), RegionOfInterest(0, 2), lam, p)
    assert res.T.shape == (5, 4)
    for i in range(5):
        for k in range(4):
            one = scattering_amplitudes(rectangular_barrier(1.0, 2.0), RegionOfInterest(0, 2), lam[i, 0], p[0, k])
            assert abs(res.T[i, k] - one.T) < 1e-15


def test_degenerate_wavenumber_is_flagged():
    # p^2 = 2 m V exactly: the segment wavenumber is nudged and flagged
    res = scattering_amplitudes(rectangular_barrier(0.5, 2.0), RegionOfInterest(0, 2), 0.0, 1.0)
    assert res.flags.get("degenerate_k")
    ora = rectangular_barrier_oracle(0.5, 2.0, 1.0)
    assert abs(res.T - ora.T) < 1e-6 and abs(res.unitarity_defect) < 1e-10


@pytest.mark.parametrize("p", [0.0, -1.0, math.nan])
def test_invalid_momentum(p):
    with pytest.raises(NumericalDomainError):
        scattering_amplitudes(rectangular_barrier(1.0, 2.0), RegionOfInterest(0, 2), 0.0, p)


def test_time_dependent_potential_rejected():
    from tunneltime.model import Profile
    V = PotentialSpec((Segment(0, 2, 1.0, "b"),), {"b": Profile((0.0, 1.0), (1.0, 0.0))})
    with pytest.raises(NumericalDomainError):
        scattering_amplitudes(V, RegionOfInterest(0, 2), 0.0, 1.0)


def test_csv_header_and_row():
    res = scattering_amplitudes(rectangular_barrier(1.0, 2.0), RegionOfInterest(0, 2), 0.0, [1.0, 2.0])
    lines = scattering_csv(res).strip().splitlines()
    assert lines[0] == "p,lambda,ReT,ImT,ReR,ImR,unitarity_defect"
    assert len(lines) == 3
    assert abs(float(lines[1].split(",")[-1])) < 1e-10
