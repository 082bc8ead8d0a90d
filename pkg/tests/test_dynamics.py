import numpy as np
import pytest

from bnf.normal_form import expected_action_coefficient, full_bnf_degree4, weak_bnf
from dynamics.approx import ApproxSolution, phase_grid, residual, residual_sweep
from dynamics.field import (
    autograd_field,
    bnf_field,
    bnf_frequencies,
    compile_field,
    hamiltonian_value,
    rhs_bnf,
    rhs_full,
)
from dynamics.floquet import floquet_spectrum, floquet_sweep
from dynamics.integrate import integrate, linear_flow, measured_frequencies, unwrap_phase
from dynamics.state import SpectralState, Trajectory, read_frames, write_frames
from hamiltonian.polynomial import HamPolynomial, Monomial
from hamiltonian.zakharov import build_zakharov, momentum_hamiltonian
from spectrum.sites import TangentialSet
from spectrum.twist import freq_amp
from util import NumericalError


def action_table_hamiltonian(cutoff):
    """H^(2) plus every quartic action monomial with its closed-form coefficient"""
    modes = [j for j in range(-cutoff, cutoff + 1) if j]
    coeffs = {}
    for i, a in enumerate(modes):
        for b in modes[i:]:
            monomial = Monomial(((a, 1), (a, -1), (b, 1), (b, -1)))
            coeffs[monomial] = expected_action_coefficient(monomial)
    return build_zakharov(cutoff, 2) + HamPolynomial(coeffs)


def test_state_validation():
    with pytest.raises(ValueError):
        SpectralState(2, np.ones(5))
    with pytest.raises(ValueError):
        SpectralState(2, np.zeros(4))
    with pytest.raises(ValueError):
        SpectralState.from_modes(2, {3: 1.0})
    s = SpectralState.from_modes(3, {2: 0.5j, -1: 0.1})
    assert s[2] == 0.5j
    assert s[0] == 0
    assert s[7] == 0
    assert s.actions()[3 + 2] == pytest.approx(0.25)


def test_binary_frames(tmp_path):
    z = np.zeros((3, 5), dtype=complex)
    z[:, 0] = [1, 1j, -1]
    z[:, 4] = 0.25
    traj = Trajectory(2, np.array([0.0, 0.5, 1.0]), z, {"method": "rk45"})
    write_frames(tmp_path / "traj.bin", traj)
    back = read_frames(tmp_path / "traj.bin")
    np.testing.assert_array_equal(back.z, z)
    np.testing.assert_array_equal(back.t, traj.t)
    assert back.info == {"method": "rk45"}
    raw = (tmp_path / "traj.bin").read_bytes()
    header_length = int.from_bytes(raw[:8], "little")
    assert len(raw) == 8 + header_length + 3 * (8 + 5 * 16)


def test_trajectory_csv(tmp_path):
    traj = Trajectory(1, np.array([0.0, 1.0]), np.array([[1j, 0, 2], [1, 0, 2j]]))
    traj.write_csv(tmp_path / "traj.csv")
    lines = (tmp_path / "traj.csv").read_bytes().split(b"\r\n")
    assert lines[0] == b"t,mode,re,im"
    assert lines[1] == b"0.0,-1,0.0,1.0"
    assert len([line for line in lines if line]) == 5


def test_compiled_field_rejects_high_degree():
    H = HamPolynomial({Monomial(((1, 1),) * 3 + ((1, -1),) * 3): 1.0})
    with pytest.raises(ValueError):
        compile_field(H)


@pytest.mark.parametrize("cutoff", [4, 6])
def test_full_field_matches_autograd(rng, cutoff):
    H = build_zakharov(cutoff)
    for _ in range(20):
        s = SpectralState.random(cutoff, rng)
        expected = autograd_field(H, s)
        np.testing.assert_allclose(rhs_full(H, s), expected, rtol=1e-10, atol=1e-14)


def test_full_field_matches_finite_differences(rng):
    H = build_zakharov(5)
    s = SpectralState.random(5, rng)
    field = rhs_full(H, s)
    h = 1e-6
    for j in (-3, 1, 4):
        k = j + 5
        dx = np.zeros_like(s.z)
        dx[k] = h
        gx = (hamiltonian_value(H, s.z + dx) - hamiltonian_value(H, s.z - dx)) / (2 * h)
        gy = (hamiltonian_value(H, s.z + 1j * dx) - hamiltonian_value(H, s.z - 1j * dx)) / (2 * h)
        assert field[k] == pytest.approx(-0.5j * (gx + 1j * gy), rel=1e-6, abs=1e-12)


def test_energy_is_real_and_momentum_conserved_by_field(rng):
    H = build_zakharov(6)
    M = compile_field(momentum_hamiltonian(6))
    s = SpectralState.random(6, rng)
    dz = rhs_full(H, s)
    # dM/dt = 2 Re sum dM/dz dz
    dM = 2 * np.real(np.sum(np.conj(-np.arange(-6, 7) * s.z) * dz))
    assert abs(dM) < 1e-13
    assert isinstance(M.energy(s.z), float)


def test_bnf_field_matches_action_table(rng):
    cutoff = 8
    H = action_table_hamiltonian(cutoff)
    for _ in range(1000):
        s = SpectralState.random(cutoff, rng, radius=0.1)
        expected = rhs_full(H, s)
        got = rhs_bnf(s)
        assert np.max(np.abs(got - expected)) <= 1e-9 * np.max(np.abs(expected))


@pytest.mark.slow
def test_bnf_field_matches_computed_normal_form(rng):
    report = full_bnf_degree4(16)
    H = build_zakharov(8, 2) + report.normalized[4].restrict(8)
    for _ in range(100):
        s = SpectralState.random(8, rng, radius=0.1)
        expected = rhs_full(H, s)
        assert np.max(np.abs(rhs_bnf(s) - expected)) <= 1e-9 * np.max(np.abs(expected))


def test_bnf_frequencies_on_a_single_mode():
    z = np.zeros(9, dtype=complex)
    z[4 + 3] = 0.1
    freq = bnf_frequencies(z, 4)
    assert freq[4 + 3] == pytest.approx(np.sqrt(3) + 27 * 0.01 / (2 * np.pi))
    assert freq[4 - 3] == pytest.approx(np.sqrt(3) - 27 * 0.01 / np.pi)
    assert freq[4 + 1] == pytest.approx(1 + 3 * 0.01 / np.pi)


def test_linear_flow_is_exact(rng):
    s0 = SpectralState.random(6, rng)
    H2 = build_zakharov(6, 2)
    traj = integrate(compile_field(H2), s0, 10.0, 1e-11, samples=11)
    np.testing.assert_allclose(traj.final().z, linear_flow(s0, 10.0).z, atol=1e-8)


def test_integrator_arguments(rng):
    s0 = SpectralState.random(3, rng)
    with pytest.raises(ValueError):
        integrate(bnf_field(3), s0, 1.0, 1e-3)
    with pytest.raises(KeyError):
        integrate(bnf_field(3), s0, 1.0, 1e-10, method="euler")
    with pytest.raises(ValueError):
        integrate(bnf_field(3), s0, -1.0, 1e-10)


def test_midpoint_divergence_is_reported():
    s0 = SpectralState.from_modes(2, {1: 1.0})

    def explosive(t, z):
        return 1e3 * z**3

    with pytest.raises(NumericalError):
        integrate(explosive, s0, 1.0, 1e-10, method="midpoint", samples=3, dt=0.5)


@pytest.mark.parametrize("method", ["rk45", "midpoint"])
def test_bnf_flow_conserves_actions(rng, method):
    s0 = SpectralState.random(8, rng, radius=0.1)
    T = 100.0 if method == "rk45" else 10.0
    traj = integrate(bnf_field(8), s0, T, 1e-10, method=method, samples=21)
    drift = np.max(np.abs(np.abs(traj.z) ** 2 - np.abs(s0.z) ** 2))
    assert drift <= 1e-7


def test_full_flow_conserves_energy_and_momentum(rng):
    H = compile_field(build_zakharov(5))
    M = compile_field(momentum_hamiltonian(5))
    s0 = SpectralState.random(5, rng, radius=0.05)
    traj = integrate(H, s0, 20.0, 1e-11, samples=11)
    energies = [H.energy(z) for z in traj.z]
    momenta = [M.energy(z) for z in traj.z]
    assert np.ptp(energies) <= 1e-8
    assert np.ptp(momenta) <= 1e-8


def test_frequency_shift_matches_twist():
    S = TangentialSet.from_iterable((2, 3))
    zeta = np.array([1.0, 1.0])
    eps = 0.05
    approx = ApproxSolution(S, zeta, eps)
    traj = integrate(bnf_field(8), approx.state(np.zeros(2), 8), 100.0, 1e-10, samples=401)
    measured = measured_frequencies(traj, list(S.sites))
    predicted = freq_amp(S, zeta, eps)
    for i, j in enumerate(S.sites):
        estimate = measured[j]
        assert not estimate.skipped
        assert abs(estimate.frequency - predicted[i]) <= 10 * eps**4 + 3 * estimate.stderr
        assert estimate.guard_violations == 0


def test_vanishing_mode_is_skipped():
    z = np.array([[0, 0, np.exp(-1j * t)] for t in range(5)])
    traj = Trajectory(1, np.arange(5.0), z)
    out = measured_frequencies(traj, [-1, 1])
    assert out[-1].skipped and out[-1].notice
    assert out[1].frequency == pytest.approx(1.0)


def test_unwrap_phase_counts_coarse_steps():
    z = np.exp(-1j * np.array([0.0, 0.5, 1.0, 3.0]))
    phase, violations = unwrap_phase(z)
    assert violations == 1
    np.testing.assert_allclose(phase[:3], [0.0, -0.5, -1.0])


def test_approx_solution_is_traveling():
    approx = ApproxSolution((3, 2), [1.0, 2.0], 0.1)
    phis = phase_grid(2, 3)
    defect = approx.traveling_defect(phis, np.linspace(0, 2 * np.pi, 5), [0.3, 1.1])
    assert defect < 1e-14
    x, eta, psi = approx.physical(np.zeros(2), 64)
    assert len(x) == len(eta) == len(psi) == 64
    with pytest.raises(ValueError):
        ApproxSolution((3, 2), [1.0], 0.1)
    with pytest.raises(ValueError):
        approx.state(np.zeros(2), 2)


def test_residual_vanishes_for_linear_dynamics():
    S = TangentialSet((3, 2))
    H2 = build_zakharov(6, 2)
    assert residual(H2, ApproxSolution(S, [1.0, 1.0], 0.1, omega=S.omega_bar)) < 1e-15
    H = build_zakharov(6, 3)
    assert residual(H, ApproxSolution(S, [1.0, 1.0], 0.0)) == 0.0


def test_residual_sweep_is_quadratic_in_eps():
    S = TangentialSet((3, 2))
    sweep = residual_sweep(build_zakharov(8, 3), S, [1.0, 1.0], [0.04, 0.02, 0.01], points=4)
    assert sweep.monotone
    assert sweep.slope == pytest.approx(2.0, abs=0.1)
    assert len(sweep.dyadic_slopes) == 2
    with pytest.raises(KeyError):
        residual_sweep(build_zakharov(8, 3), S, [1.0, 1.0], [0.01], omega_mode="exact")


def test_floquet_at_zero_amplitude_is_diagonal():
    S = TangentialSet((3, 2))
    H = build_zakharov(10)
    result = floquet_spectrum(H, ApproxSolution(S, [1.0, 1.0], 0.0), 2, 8)
    assert result.dimension == 2 * 14 * 13
    assert result.max_residual < 1e-12
    assert result.conjugate_defect < 1e-12
    assert result.interior.any()


def test_floquet_limits():
    S = TangentialSet((3, 2))
    H = build_zakharov(8)
    approx = ApproxSolution(S, [1.0, 1.0], 0.05)
    with pytest.raises(ValueError, match="cap"):
        floquet_spectrum(H, approx, 3, 8, max_dimension=100)
    with pytest.raises(ValueError):
        floquet_spectrum(H, approx, 2, 9)
    with pytest.raises(ValueError):
        floquet_spectrum(H, approx, 2, 3)


def test_floquet_real_structure():
    S = TangentialSet((3, 2))
    H = weak_bnf(S, 8 + 2 * 3).extra["transformed"]
    result = floquet_spectrum(H, ApproxSolution(S, [1.0, 1.0], 0.05), 2, 8)
    assert result.conjugate_defect < 1e-9
    assert result.blocks > 1
    rows = list(result.csv_rows())
    assert len(rows) == result.dimension


@pytest.mark.slow
def test_floquet_corrections_scale():
    S = TangentialSet((3, 2))
    H = weak_bnf(S, 10 + 2 * 3).extra["transformed"]
    sweep = floquet_sweep(
        H, lambda eps: ApproxSolution(S, [1.0, 1.0], eps), [0.02, 0.04, 0.08], 3, 10
    )
    assert 3.5 <= sweep.slope <= 4.5, sweep.max_residual
    assert sweep.max_residual[0] < sweep.max_residual[-1]
