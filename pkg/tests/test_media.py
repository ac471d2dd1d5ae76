import math

import numpy as np
import pytest

from qutritsim.core import CouplingMatrix, PhysicalConfig, ValidationError
from qutritsim.media import (
    GeometrySample,
    coupling_from_geometry,
    eigen_decompose,
    eigenvalue_density,
    heuristic_fit_density,
    sample_geometry,
    scaled_energy_unit,
)


def pair(offset):
    return GeometrySample(np.array([[0.0, 0.0, 0.0], offset]), seed=0)


def test_axial_pair_attracts():
    v = coupling_from_geometry(pair([0.0, 0.0, 0.5])).values
    assert v[0, 1] == pytest.approx(-1 / 0.5**3)


def test_side_by_side_pair_repels():
    v = coupling_from_geometry(pair([0.5, 0.0, 0.0])).values
    assert v[0, 1] == pytest.approx(1 / 0.5**3)


def test_coupling_vanishes_at_magic_angle():
    # cos^2 theta = 1/2
    v = coupling_from_geometry(pair([0.3, 0.0, 0.3])).values
    assert v[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_coupling_respects_mu_and_coefficient():
    cfg = PhysicalConfig(mu=2.0, angular_coefficient=3.0)
    v = coupling_from_geometry(pair([0.0, 0.0, 1.0]), cfg).values
    assert v[0, 1] == pytest.approx(4.0 * (1 - 3.0))


def test_coupling_symmetric_zero_diagonal():
    v = coupling_from_geometry(sample_geometry(12, 3)).values
    np.testing.assert_array_equal(v, v.T)
    assert np.all(np.diag(v) == 0)


def test_two_site_spectrum():
    sd = eigen_decompose(CouplingMatrix(np.array([[0.0, 0.7], [0.7, 0.0]])))
    np.testing.assert_allclose(sd.eigenvalues, [-0.7, 0.7])


def test_all_to_all_spectrum():
    n, c = 6, 0.25
    v = np.full((n, n), c)
    np.fill_diagonal(v, 0.0)
    sd = eigen_decompose(CouplingMatrix(v))
    np.testing.assert_allclose(sd.eigenvalues, [-c] * (n - 1) + [(n - 1) * c], atol=1e-14)
    np.testing.assert_allclose(sd.eigenvectors.T @ sd.eigenvectors, np.eye(n), atol=1e-13)


def test_min_separation_enforced():
    g = sample_geometry(200, 1, r_min=0.05)
    d = np.linalg.norm(g.positions[:, None] - g.positions[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 0.05


def test_geometry_depends_only_on_seed_and_index():
    a = sample_geometry(10, 5, index=3).positions
    b = sample_geometry(10, 5, index=3).positions
    c = sample_geometry(10, 5, index=4).positions
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_density_independent_of_threads():
    h1 = eigenvalue_density(40, 9, bins=31, seed=2, threads=1)
    h3 = eigenvalue_density(40, 9, bins=31, seed=2, threads=3)
    np.testing.assert_array_equal(h1.counts, h3.counts)
    assert h1.moments == h3.moments


def test_density_mass_and_trace():
    n = 30
    h = eigenvalue_density(n, 5, bins=50, value_range=(-1e9, 1e9))
    assert h.counts.sum() + h.outside == pytest.approx(n)
    assert float(np.sum(h.density * h.widths)) == pytest.approx(n)
    assert h.max_trace_defect < 1e-12


def test_odd_bin_grid_has_exact_zero_centre():
    h = eigenvalue_density(10, 1, bins=201)
    assert 0.0 in h.centers


def test_density_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        eigenvalue_density(10, 0)
    with pytest.raises(ValidationError):
        eigenvalue_density(10, 1, value_range=(1.0, 1.0))


def test_fit_value_at_quarter():
    assert heuristic_fit_density(0.25, 300) == pytest.approx(300 * math.exp(-math.sqrt(math.pi / 2)))


def test_fit_is_even_and_decays():
    v = np.array([0.5, 1.0, 5.0, 50.0])
    np.testing.assert_allclose(heuristic_fit_density(v, 10), heuristic_fit_density(-v, 10))
    g = heuristic_fit_density(np.array([1.0, 5.0, 50.0, 500.0]), 10)
    assert np.all(np.diff(g) < 0)


def test_fit_mass_is_about_four_fifths_of_n():
    # substitute V = e^x / 4 to integrate over the log-scale
    x = np.linspace(-40, 40, 40001)
    v = np.exp(x) / 4
    mass = 2 * np.trapezoid(heuristic_fit_density(v, 1) * v, x)
    assert mass == pytest.approx(math.sqrt(math.pi) * math.pi / 2 * math.exp(-math.sqrt(math.pi / 2)), rel=1e-6)
    assert 0.75 < mass < 0.85


def test_fit_rejects_zero_and_unknown_grouping():
    with pytest.raises(ValidationError):
        heuristic_fit_density(0.0, 10)
    with pytest.raises(ValidationError):
        heuristic_fit_density(1.0, 10, grouping="other")


def test_scaled_unit():
    assert scaled_energy_unit(100) == pytest.approx(1000.0)
