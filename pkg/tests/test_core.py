import logging

import numpy as np
import pytest

from qutritsim.core import (
    CouplingMatrix,
    DetuningSchedule,
    SpectralDecomposition,
    TanglemeterMatrix,
    ValidationError,
    make_schedule,
    validate_coupling,
)


def test_schedule_is_right_continuous_at_boundaries():
    s = make_schedule([(1.0, 2.0), (0.5, -1.0), (2.0, 3.0)])
    assert s.alpha_at(0.0) == 2.0
    assert s.alpha_at(0.999) == 2.0
    assert s.alpha_at(1.0) == -1.0
    assert s.alpha_at(1.5) == 3.0
    assert s.total_duration == pytest.approx(3.5)


def test_schedule_integral_closed_form():
    s = make_schedule([(1.0, 2.0), (0.5, -1.0), (2.0, 3.0)])
    assert s.integral(3.5) == pytest.approx(2.0 - 0.5 + 6.0)
    assert s.integral(1.25) == pytest.approx(2.0 - 0.25)
    assert s.integral(0.0) == 0.0


def test_pieces_truncate_last_segment():
    s = make_schedule([(1.0, 2.0), (2.0, 3.0)])
    assert s.pieces(1.5) == [(1.0, 2.0), (0.5, 3.0)]
    assert s.pieces(1.0) == [(1.0, 2.0)]


@pytest.mark.parametrize("segs", [[], [(0.0, 1.0)], [(-1.0, 1.0)], [(1.0, float("nan"))], [(float("inf"), 1.0)]])
def test_schedule_rejects_bad_segments(segs):
    with pytest.raises(ValidationError):
        make_schedule(segs)


def test_schedule_rejects_times_outside():
    s = DetuningSchedule.constant(1.0, 2.0)
    with pytest.raises(ValidationError):
        s.alpha_at(-0.1)
    with pytest.raises(ValidationError):
        s.pieces(2.5)


def test_switch_drops_empty_segments_and_merges():
    assert DetuningSchedule.switch(0.7, 0.0, 0.0, 3.0).segments == ((3.0, 0.7),)
    s = DetuningSchedule.switch(0.7, 1.0, 2.0, 5.0)
    assert s.segments == ((1.0, 0.7), (1.0, 0.0), (3.0, 0.7))
    assert DetuningSchedule.switch(0.0, 1.0, 2.0, 5.0).segments == ((5.0, 0.0),)
    with pytest.raises(ValidationError):
        DetuningSchedule.switch(1.0, 2.0, 1.0, 5.0)


def test_validate_coupling_errors():
    with pytest.raises(ValidationError):
        validate_coupling(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        validate_coupling([[0.0, np.nan], [np.nan, 0.0]])
    with pytest.raises(ValidationError):
        validate_coupling([[0.0, 1.0], [2.0, 0.0]])


def test_validate_coupling_lenient_symmetrizes(caplog):
    with caplog.at_level(logging.WARNING):
        v = validate_coupling([[0.0, 1.0], [2.0, 0.0]], strict=False)
    np.testing.assert_array_equal(v.values, [[0.0, 1.5], [1.5, 0.0]])
    assert "symmetrizing" in caplog.text


def test_validate_coupling_zeroes_diagonal(caplog):
    with caplog.at_level(logging.WARNING):
        v = validate_coupling([[3.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(v.values, [[0.0, 1.0], [1.0, 0.0]])
    assert "diagonal" in caplog.text


def test_validate_coupling_is_idempotent():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    once = validate_coupling(a, strict=False)
    twice = validate_coupling(once.values)
    np.testing.assert_array_equal(once.values, twice.values)


def test_value_types_are_read_only():
    v = CouplingMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        v.values[0, 1] = 5.0
    assert v.scaled(2.0).values[0, 1] == 2.0


def test_spectral_reconstruction_and_w_trace():
    vals = np.array([-1.0, 2.0])
    vecs = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    sd = SpectralDecomposition(vals, vecs)
    np.testing.assert_allclose(sd.reconstruct(), vecs @ np.diag(vals) @ vecs.T)
    w = TanglemeterMatrix(np.array([[0.0, 0.1j], [0.2, 0.0]]))
    assert w.w_trace == pytest.approx(0.05)
    with pytest.raises(ValidationError):
        TanglemeterMatrix(np.zeros((2, 3)))
