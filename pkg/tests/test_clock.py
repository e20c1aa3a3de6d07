import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from tunneltime import clock, evolve
from tunneltime.clock import ClockBasis, ClockConfig, Postselector, SpinState
from tunneltime.errors import NumericalDomainError, PostSelectionError, SchemaError
from tunneltime.model import PotentialSpec, RegionOfInterest, SpatialGrid, rectangular_barrier

FREE = PotentialSpec()
SPINS = [0.5, 1, 1.5, 2, 3]


# -- spin algebra ------------------------------------------------------------------

def test_gswp_values():
    assert clock.gswp(0.0, 1) == pytest.approx(1.0)
    assert abs(clock.gswp(2 * np.pi / 3, 1)) < 1e-15
    assert clock.gswp(np.pi / 2, 0.5) == pytest.approx(1 / math.sqrt(2))


@given(st.sampled_from(SPINS), st.floats(-10, 10))
def test_gswp_closed_form(j, phi):
    n = 2 * j + 1
    s = math.sin(phi / 2)
    if abs(s) > 1e-3:
        assert abs(clock.gswp(phi, j) - math.sin(n * phi / 2) / (n * s)) < 1e-10


@pytest.mark.parametrize("j,q", [(0.5, np.pi / 4), (1, 2 * np.pi / 3)])
def test_q_factor(j, q):
    assert clock.q_factor(j) == pytest.approx(q, rel=1e-12)


def test_q_modified_value():
    assert clock.q_modified(1) == pytest.approx(0.80613, abs=5e-6)


@pytest.mark.parametrize("j", SPINS)
def test_basis_is_orthonormal(j):
    b = ClockBasis(j)
    assert np.max(np.abs(b.states @ b.states.conj().T - np.eye(b.dim))) < 1e-12


@pytest.mark.parametrize("j", SPINS)
def test_beta0_has_zero_mean_jz(j):
    b = ClockBasis(j)
    assert abs(b.matrix_element(0, b.jz, 0)) < 1e-12


def test_q_prime_of_probe_state():
    # (beta^0 + beta^1)/sqrt 2 for j = 1/2: a direct sum by hand
    b = ClockBasis(0.5)
    g = SpinState.from_spec(0.5, "probe")
    ref = 0.0
    for k in range(2):
        ref += b.phi[k] * np.vdot(g.amplitudes, b.states[k]) * np.vdot(b.states[k], b.jz @ g.amplitudes)
    assert clock.q_prime(0.5, g) == pytest.approx(2 * ref.imag)
    assert abs(clock.q_prime(0.5, g)) > 0.1
    assert abs(clock.q_prime(0.5, SpinState.beta(0.5))) < 1e-14


@pytest.mark.parametrize("j", [0, -1, 0.3, 1.25])
def test_bad_spin_size(j):
    with pytest.raises(SchemaError):
        clock.spin_size(j)


@pytest.mark.parametrize("spec", [[1, 0], [0, 0, 0], "nonsense", ["a", "b", "c"]])
def test_bad_spin_state(spec):
    with pytest.raises(SchemaError):
        SpinState.from_spec(1, spec)


def test_spin_state_is_normalised():
    g = SpinState.from_spec(1, [1, [0, 1], 1])
    assert abs(np.vdot(g.amplitudes, g.amplitudes) - 1) < 1e-15


def test_betaj_needs_integer_spin():
    with pytest.raises(SchemaError):
        SpinState.from_spec(0.5, "betaj")
    with pytest.raises(NumericalDomainError):
        ClockBasis(0.5).signed_angles()


@pytest.mark.parametrize("kw", [dict(j=1, omega_L=-0.1), dict(j=1, omega_L=0.1, gamma_I=SpinState.beta(0.5))])
def test_bad_clock_config(kw):
    with pytest.raises(SchemaError):
        ClockConfig(**kw)


def test_unknown_postselector():
    with pytest.raises(SchemaError):
        Postselector("sideways")


# -- joint evolution ---------------------------------------------------------------

@pytest.fixture(scope="module")
def small():
    grid = SpatialGrid(-20.0, 20.0, 256)
    psi = evolve.gaussian_packet(grid, -4.0, 1.5, 1.0)
    return grid, psi, rectangular_barrier(1.0, 1.0), RegionOfInterest(0.0, 1.0)


def test_zero_coupling_leaves_pointer(small):
    grid, psi, V, O = small
    jt = clock.evolve_coupled(psi, ClockConfig(1, 0.0), V, O, 0.0, 3.0, 0.01)
    P, T, W = clock.readout(jt, Postselector("all"), ClockBasis(1))
    assert P[0] == pytest.approx(1.0, abs=1e-12) and T == 0.0 and W == pytest.approx(1.0)


def test_matches_monolithic_tensor_product(small):
    # exact exponential of the 2N x 2N Hamiltonian with the same spectral kinetic term
    grid, psi, V, O = small
    w, T = 0.7, 2.0
    n = grid.n_points
    K = np.fft.ifft(np.fft.fft(np.eye(n), axis=0) * (0.5 * grid.k**2)[:, None], axis=0)
    theta = grid.mask(O).astype(float)
    Vx = V(grid.x)
    blocks = [K + np.diag(Vx + m * w * theta) for m in (-0.5, 0.5)]
    H = scipy.linalg.block_diag(*blocks)
    gamma = SpinState.beta(0.5)
    start = np.concatenate([g * psi.values for g in gamma.amplitudes])
    exact = (scipy.linalg.expm(-1j * T * H) @ start).reshape(2, n)
    jt = clock.evolve_coupled(psi, ClockConfig(0.5, w, gamma), V, O, 0.0, T, 0.0025)
    assert np.max(np.abs(jt.components - exact)) < 1e-4


def test_whole_grid_rotates_pointer_rigidly(small):
    grid, psi, V, O = small
    j, T = 1, 3.0
    basis = ClockBasis(j)
    w = basis.phi[1] / T
    jt = clock.evolve_coupled(psi, ClockConfig(j, w), V, RegionOfInterest.whole(grid), 0.0, T, 0.01)
    P, reading, _ = clock.readout(jt, Postselector("all"), basis)
    assert P[1] == pytest.approx(1.0, abs=1e-10)
    assert reading == pytest.approx(T, rel=1e-10)


@pytest.mark.parametrize("kind", ["all", "transmitted", "reflected", "momentum+"])
def test_pointer_probabilities_sum_to_one(small, kind):
    grid, psi, V, O = small
    jt = clock.evolve_coupled(psi, ClockConfig(1.5, 0.3), V, O, 0.0, 4.0, 0.01)
    P, _, W = clock.readout(jt, Postselector(kind, cut=0.5), ClockBasis(1.5))
    assert abs(P.sum() - 1) < 1e-12 and np.all(P >= 0) and 0 < W <= 1 + 1e-12


def test_empty_selection_raises(small):
    grid, psi, V, O = small
    jt = clock.evolve_coupled(psi, ClockConfig(1, 0.1), V, O, 0.0, 1.0, 0.01)
    with pytest.raises(PostSelectionError):
        clock.readout(jt, Postselector("mask", mask=np.zeros(grid.n_points)), ClockBasis(1))


def test_sweep_equals_single_runs(small):
    grid, psi, V, O = small
    ws = [0.1, 0.2]
    sweep = clock.coupled_sweep(psi, 1, SpinState.beta(1), ws, V, O, 0.0, 2.0, 0.01)
    for w, jt in zip(ws, sweep):
        one = clock.evolve_coupled(psi, ClockConfig(1, w), V, O, 0.0, 2.0, 0.01)
        assert np.max(np.abs(one.components - jt.components)) < 1e-13


@given(st.integers(0, 2**32 - 1), st.sampled_from(["all", "transmitted", "reflected", "momentum+", "momentum-",
                                                   "mask", "state", "complement"]))
def test_postselector_is_a_projector(seed, kind):
    grid = SpatialGrid(-5.0, 5.0, 256)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(2, 256)) + 1j * rng.normal(size=(2, 256))
    u = rng.normal(size=256) + 1j * rng.normal(size=256)
    u /= np.sqrt(np.sum(np.abs(u) ** 2) * grid.dx)
    sel = Postselector(kind, cut=0.3, mask=rng.integers(0, 2, 256), vector=u)
    once = sel.apply(v, grid)
    assert np.max(np.abs(sel.apply(once, grid) - once)) < 1e-9 * np.max(np.abs(v))


def test_bound_and_free_selectors_partition(small):
    grid, psi, V, O = small
    v = evolve.propagate(psi, V, O, 0.0, 0.0, 1.0, 0.01).values
    pb = Postselector.bound(psi).probability(v, grid)
    pf = Postselector.free(psi).probability(v, grid)
    assert pb + pf == pytest.approx(1.0, abs=1e-10)


# -- weak-limit extraction -----------------------------------------------------------

GRID6 = 0.1 / 2.0 ** np.arange(6)


@pytest.mark.parametrize("j", [0.5, 1, 2])
def test_weak_limit_recovers_synthetic_time(j):
    tau, c = 1.7, 0.9
    q = clock.q_factor(j)
    res = clock.weak_limit_extract(lambda w: q * tau**2 * w + c * w**2, j, GRID6)
    assert res.value == pytest.approx(tau, rel=1e-12)
    assert res.error < 1e-10


def test_modified_extract_recovers_synthetic_time():
    tau = 1.3
    q = clock.q_modified(1)
    res = clock.modified_clock_extract(lambda w: q * tau**3 * w**2 + 0.4 * w**3, 1, GRID6)
    assert res.value == pytest.approx(tau, rel=1e-12)
    assert res.linear_ratio < 1e-6


def test_modified_extract_flags_linear_term():
    q = clock.q_modified(1)
    res = clock.modified_clock_extract(lambda w: 0.5 * w + q * w**2, 1, GRID6)
    assert res.linear_ratio > 1


def test_modified_extract_needs_integer_spin():
    with pytest.raises(NumericalDomainError):
        clock.modified_clock_extract(lambda w: w**2, 0.5, GRID6)


@pytest.mark.parametrize("grid", [[0.1, 0.05, 0.025], [0.1, 0.05, 0.02, 0.01], [0.0, 0.1, 0.05, 0.025]])
def test_bad_omega_grid(grid):
    with pytest.raises(NumericalDomainError):
        clock.weak_limit_extract(lambda w: w, 1, grid)


def test_negative_slope_raises():
    with pytest.raises(NumericalDomainError):
        clock.weak_limit_extract(lambda w: -w, 1, GRID6)


def test_default_omega_grid():
    g = clock.default_omega_grid(2, 10.0)
    assert g[0] == pytest.approx(0.2 / 20) and g.size == 6
    assert np.allclose(g[:-1] / g[1:], 2.0)


# -- physical runs ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def barrier_clock():
    grid = SpatialGrid(-40.0, 40.0, 512)
    psi = evolve.gaussian_packet(grid, -12.0, 1.5, 2.0)
    return grid, psi, rectangular_barrier(1.0, 2.0), RegionOfInterest(0.0, 2.0), 12.0, 0.01


def test_free_running_clock_matches_operator_form(barrier_clock):
    grid, psi, V, O, T, dt = barrier_clock
    j = 1
    basis = ClockBasis(j)

    def runner(ws):
        joints = clock.coupled_sweep(psi, j, SpinState.beta(j), ws, V, O, 0.0, T, dt)
        return [clock.readout(jt, Postselector("all"), basis)[1] for jt in joints]

    res = clock.weak_limit_extract(runner, j, clock.default_omega_grid(j, T))
    ref = evolve.swp_all_operator_form(psi, V, O, 0.0, T, dt)
    assert res.value == pytest.approx(ref, rel=1e-3)


def test_dwell_probe_matches_stopwatch(barrier_clock):
    grid, psi, V, O, T, dt = barrier_clock
    g = SpinState.from_spec(0.5, "probe")
    res = clock.dwell_probe(psi, V, O, g, ClockBasis(0.5), clock.default_omega_grid(0.5, T), 0.0, T, dt)
    sw = evolve.dwell_time_stopwatch(psi, V, O, 0.0, T, dt)
    assert res.value == pytest.approx(sw, rel=1e-2)


def test_dwell_probe_remote_region(barrier_clock):
    grid, psi, V, O, T, dt = barrier_clock
    g = SpinState.from_spec(0.5, "probe")
    res = clock.dwell_probe(psi, FREE, RegionOfInterest(30.0, 32.0), g, ClockBasis(0.5),
                            clock.default_omega_grid(0.5, 5.0), 0.0, 5.0, dt)
    assert abs(res.value) < 1e-6


def test_dwell_probe_rejects_gainless_state(barrier_clock):
    grid, psi, V, O, T, dt = barrier_clock
    with pytest.raises(NumericalDomainError):
        clock.dwell_probe(psi, V, O, SpinState.beta(0.5), ClockBasis(0.5), GRID6, 0.0, 1.0, dt)


def test_clock_csv():
    text = clock.clock_csv([0.1], [np.array([0.9, 0.1])], [0.5])
    lines = text.strip().splitlines()
    assert lines[0] == "omega_L,k,P_k,T_Omega" and len(lines) == 3
