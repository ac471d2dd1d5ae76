import math

import numpy as np
import pytest

from qutritsim.core import CouplingMatrix, DetuningSchedule, TanglemeterMatrix, ValidationError
from qutritsim.media import coupling_from_geometry, sample_geometry
from qutritsim.oracle import (
    EvolutionStats,
    RwaHamiltonian,
    StateVector,
    basis_digits,
    basis_index,
    build_state_from_W,
    collective_coupling,
    compare_report,
    dense_hamiltonian,
    evolve_exact,
    extract_W_estimate,
    measure_populations,
    middle_index,
)

MINUS, MIDDLE, PLUS = 0, 1, 2


def basis_state(digits):
    n = len(digits)
    a = np.zeros(3**n, dtype=complex)
    a[basis_index(digits)] = 1.0
    return StateVector(n, a)


def test_basis_roundtrip_and_middle():
    for idx in range(27):
        assert basis_index(basis_digits(idx, 3)) == idx
    assert basis_digits(middle_index(4), 4) == (MIDDLE,) * 4
    with pytest.raises(ValidationError):
        basis_digits(27, 3)


def test_zero_tanglemeter_is_ground_state():
    psi = build_state_from_W(TanglemeterMatrix(np.zeros((3, 3))))
    np.testing.assert_array_equal(psi.amplitudes, StateVector.ground(3).amplitudes)


def test_two_site_tanglemeter_amplitudes():
    a, b = 0.3 - 0.1j, -0.2j
    psi = build_state_from_W(TanglemeterMatrix(np.array([[0, a], [b, 0]])))
    assert psi.amplitudes[middle_index(2)] == 1
    assert psi.amplitudes[basis_index((PLUS, MINUS))] == a
    assert psi.amplitudes[basis_index((MINUS, PLUS))] == b
    assert np.count_nonzero(psi.amplitudes) == 3


def test_diagonal_tanglemeter_drops_out():
    psi = build_state_from_W(TanglemeterMatrix(np.diag([0.5, 0.2, 0.1])))
    np.testing.assert_array_equal(psi.amplitudes, StateVector.ground(3).amplitudes)


def test_extract_recovers_tanglemeter():
    rng = np.random.default_rng(2)
    w = 0.1 * (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    np.fill_diagonal(w, 0)
    np.testing.assert_allclose(extract_W_estimate(build_state_from_W(TanglemeterMatrix(w))), w, atol=1e-15)


def test_hamiltonian_on_ground_creates_pairs():
    v = coupling_from_geometry(sample_geometry(3, 1))
    out = RwaHamiltonian(v, 0.7, 1.0).apply(StateVector.ground(3).amplitudes)
    want = np.zeros(27, dtype=complex)
    for i in range(3):
        for j in range(3):
            if i != j:
                d = [MIDDLE] * 3
                d[i], d[j] = PLUS, MINUS
                want[basis_index(d)] = v.values[i, j]
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_pair_factor_scales_coupling():
    v = collective_coupling(3, 0.9)
    g = StateVector.ground(3).amplitudes
    np.testing.assert_allclose(RwaHamiltonian(v, 0.0, 0.5).apply(g), 0.5 * RwaHamiltonian(v, 0.0, 1.0).apply(g))


def test_dense_matches_matrix_free_and_is_hermitian():
    v = coupling_from_geometry(sample_geometry(3, 4))
    h = dense_hamiltonian(v, 0.4)
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=27) + 1j * rng.normal(size=27)
    np.testing.assert_allclose(h @ psi, RwaHamiltonian(v, 0.4, 1.0).apply(psi), atol=1e-10)


def test_uncoupled_evolution_is_a_phase():
    n, alpha, t = 3, 0.8, 1.7
    digits = (PLUS, MIDDLE, MINUS)
    out = evolve_exact(basis_state(digits), CouplingMatrix(np.zeros((n, n))), DetuningSchedule.constant(alpha, t), t)
    assert out.amplitudes[basis_index(digits)] == pytest.approx(np.exp(-1j * alpha * 2 * t), abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1])
def test_dense_and_krylov_agree_and_conserve_norm(seed):
    v = coupling_from_geometry(sample_geometry(4, seed)).scaled(0.05)
    sched = DetuningSchedule.switch(1.0, 0.3, 0.8, 1.5)
    stats = EvolutionStats()
    k = evolve_exact(StateVector.ground(4), v, sched, 1.5, 1e-11, stats=stats)
    d = evolve_exact(StateVector.ground(4), v, sched, 1.5, method="dense")
    np.testing.assert_allclose(k.amplitudes, d.amplitudes, atol=1e-9)
    assert stats.norm_drift < 1e-10


def test_measure_populations():
    assert measure_populations(StateVector.ground(3)) == (0.0, 3.0, 0.0)
    assert measure_populations(basis_state((PLUS, MINUS))) == (1.0, 0.0, 1.0)


def test_weak_coupling_agrees_with_closed_form():
    v = coupling_from_geometry(sample_geometry(4, 3))
    rep = compare_report(v, 1.0, [0.05], alpha=1.0)
    assert rep.rows[0].rel_error < 0.01
    assert rep.rows[0].w_error < 0.05


def test_schedule_agrees_with_exact_evolution():
    v = coupling_from_geometry(sample_geometry(4, 5))
    sched = DetuningSchedule.switch(1.0, 0.4, 0.9, 1.5)
    rep = compare_report(v, 1.5, [0.1, 0.05], schedule=sched)
    assert rep.rows[-1].rel_error < 0.02
    assert rep.min_order > 1


def test_collective_resonance_gains():
    n, nv = 4, 0.4
    rep = compare_report(collective_coupling(n, nv), 1.0, [1.0], alpha=-nv, normalize=False)
    assert rep.rows[0].n1_exact > 0.5 * math.sinh(nv) ** 2


def test_compare_report_guards():
    v = collective_coupling(4, 0.1)
    with pytest.raises(ValidationError):
        compare_report(v, 1.0, [0.1])
    with pytest.raises(ValidationError):
        compare_report(collective_coupling(9, 0.1), 1.0, [0.1], alpha=1.0)


def test_state_size_checks():
    with pytest.raises(ValidationError):
        StateVector(2, np.zeros(8))
    with pytest.raises(ValidationError):
        StateVector.ground(13)
