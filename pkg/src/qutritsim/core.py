"""Domain types shared across the package.

Units: hbar = 1, so time and energy are reciprocal dimensionless numbers.
All types are immutable after construction; array fields are frozen copies.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


class QutritError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(QutritError, ValueError):
    """Input failed a structural or numerical precondition."""


class DivergenceError(QutritError, ArithmeticError):
    """A closed form or integrator produced a non-finite amplitude."""

    def __init__(self, message: str, location: float | None = None):
        super().__init__(message)
        self.location = location


class SingularPopulationError(QutritError, ArithmeticError):
    """Spectral radius of W W^+ reached 1; the population formula has no value there."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PhysicalConfig:
    """Dipole model parameters.

    The pair coupling is ``mu**2 * (1 - angular_coefficient * cos(theta)**2) / r**3``
    with theta measured from the z axis. Positions are sampled in the unit cube.
    """

    mu: float = 1.0
    angular_coefficient: float = 2.0
    density_region: str = "unit_cube"

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValidationError(f"mu must be positive and finite, got {self.mu}")
        if not math.isfinite(self.angular_coefficient):
            raise ValidationError("angular_coefficient must be finite")
        if self.density_region != "unit_cube":
            raise ValidationError(f"unsupported density_region {self.density_region!r}")


@dataclass(frozen=True)
class CouplingMatrix:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=float)))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float) -> "CouplingMatrix":
        return CouplingMatrix(self.values * factor)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvector columns of a coupling."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(np.asarray(self.eigenvalues, dtype=float)))
        object.__setattr__(self, "eigenvectors", _frozen(np.asarray(self.eigenvectors, dtype=float)))

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        c = self.eigenvectors
        return (c * self.eigenvalues) @ c.T


@dataclass(frozen=True)
class TanglemeterMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError(f"tanglemeter must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DivergenceError("tanglemeter has non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def w_trace(self) -> float:
        """Tr W W^+, the smallness diagnostic."""
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True)
class DetuningSchedule:
    """Piecewise-constant, right-continuous detuning alpha(t) starting at t = 0."""

    segments: tuple[tuple[float, float], ...]
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple((float(d), float(a)) for d, a in self.segments)
        if not segs:
            raise ValidationError("schedule needs at least one segment")
        for d, a in segs:
            if not (d > 0 and math.isfinite(d)):
                raise ValidationError(f"segment durations must be positive and finite, got {d}")
            if not math.isfinite(a):
                raise ValidationError(f"segment alpha must be finite, got {a}")
        starts = [0.0]
        for d, _ in segs[:-1]:
            starts.append(starts[-1] + d)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_starts", tuple(starts))

    @property
    def total_duration(self) -> float:
        return math.fsum(d for d, _ in self.segments)

    def _check_time(self, t: float) -> None:
        if t < 0 or t > self.total_duration * (1 + 1e-12):
            raise ValidationError(
                f"time {t} outside schedule [0, {self.total_duration}]"
            )

    def alpha_at(self, t: float) -> float:
        self._check_time(t)
        k = bisect.bisect_right(self._starts, t) - 1
        return self.segments[k][1]

    def pieces(self, t: float) -> list[tuple[float, float]]:
        """(duration, alpha) pieces covering [0, t]; the last one may be truncated."""
        self._check_time(t)
        out = []
        for start, (d, a) in zip(self._starts, self.segments):
            if start >= t:
                break
            out.append((min(d, t - start), a))
        return out

    def integral(self, t: float) -> float:
        """Closed-form integral of alpha over [0, t]."""
        return math.fsum(d * a for d, a in self.pieces(t))

    @classmethod
    def constant(cls, alpha: float, duration: float) -> "DetuningSchedule":
        return cls(((duration, alpha),))

    @classmethod
    def switch(cls, alpha: float, t1: float, t2: float, total: float) -> "DetuningSchedule":
        """alpha on [0, t1), zero on [t1, t2), alpha again up to ``total``."""
        if not 0 <= t1 <= t2 <= total:
            raise ValidationError(f"need 0 <= t1 <= t2 <= total, got {t1}, {t2}, {total}")
        segs = [(t1, alpha), (t2 - t1, 0.0), (total - t2, alpha)]
        segs = [(d, a) for d, a in segs if d > 0]
        if not segs:
            raise ValidationError("switch schedule has zero total duration")
        merged = [segs[0]]
        for d, a in segs[1:]:
            if a == merged[-1][1]:
                merged[-1] = (merged[-1][0] + d, a)
            else:
                merged.append((d, a))
        return cls(tuple(merged))


def make_schedule(segments: Sequence[tuple[float, float]]) -> DetuningSchedule:
    return DetuningSchedule(tuple(segments))


def validate_coupling(
    raw, *, strict: bool = True, atol: float = 1e-12
) -> CouplingMatrix:
    """Check and canonicalize a raw coupling array.

    In strict mode an asymmetry beyond ``atol`` (relative to the largest entry)
    is an error; otherwise the array is symmetrized. A nonzero diagonal is
    zeroed with a warning in both modes.
    """
    a = np.array(raw, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"coupling must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("coupling contains NaN or Inf")
    scale = max(float(np.max(np.abs(a))), 1.0) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > atol * scale:
        if strict:
            raise ValidationError(f"coupling is not symmetric (max defect {asym:g})")
        log.warning("symmetrizing coupling with asymmetry %g", asym)
    a = 0.5 * (a + a.T)
    if np.any(np.diag(a) != 0):
        log.warning("zeroing nonzero coupling diagonal")
        np.fill_diagonal(a, 0.0)
    return CouplingMatrix(a)
