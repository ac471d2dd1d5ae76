"""Closed-form dynamics at constant detuning.

Every mode V_m of the coupling evolves independently. With
q = alpha * (alpha + 2 V) and z = sqrt(q), the mode amplitude is

    w = V / (i z cot(z t) - V - alpha)
      = V s / (i c - (V + alpha) s),    c = cos(z t),  s = sin(z t) / z

and c, s are even in z, so the branch of the square root never matters.
The second form has no removable singularities and gives
|w|^2 / (1 - |w|^2) = V^2 s^2 exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qutritsim.core import (
    DivergenceError,
    SingularPopulationError,
    SpectralDecomposition,
    TanglemeterMatrix,
    ValidationError,
)

SERIES_THRESHOLD = 1e-4
VALIDITY_FRACTION = 0.1


@dataclass(frozen=True)
class KernelParams:
    alpha: float
    t: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValidationError("alpha must be finite")
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ValidationError(f"t must be finite and >= 0, got {self.t}")


@dataclass(frozen=True)
class PopulationResult:
    n1: float
    norm: float
    w_trace: float
    n_qutrits: int

    @property
    def valid(self) -> bool:
        """False once Tr W W^+ is no longer small compared with N."""
        return self.w_trace < VALIDITY_FRACTION * self.n_qutrits


def even_parts(q, t: float, branch: int = 1):
    """Return (cos(z t), sin(z t)/z) for z = branch * sqrt(q), as real arrays."""
    q = np.asarray(q, dtype=float)
    z = branch * np.sqrt(q.astype(complex))
    zt = z * t
    small = np.abs(zt) < SERIES_THRESHOLD
    x = q * t * t
    c_ser = 1 - x / 2 + x * x / 24
    s_ser = t * (1 - x / 6 + x * x / 120)
    safe_z = np.where(small, 1.0, z)
    c = np.where(small, c_ser, np.cos(zt).real)
    s = np.where(small, s_ser, (np.sin(safe_z * t) / safe_z).real)
    return c, s


def kernel_w(V, alpha: float, t: float, *, branch: int = 1):
    """Mode amplitude w(V, alpha, t); vectorized over V."""
    V = np.asarray(V, dtype=float)
    c, s = even_parts(alpha * (alpha + 2 * V), t, branch)
    w = V * s / (1j * c - (V + alpha) * s)
    if not np.all(np.isfinite(w)):
        raise DivergenceError(f"kernel diverged at t = {t}", location=t)
    return w if w.ndim else complex(w)


def tanglemeter_matrix(sd: SpectralDecomposition, p: KernelParams) -> TanglemeterMatrix:
    w = kernel_w(sd.eigenvalues, p.alpha, p.t)
    c = sd.eigenvectors
    return TanglemeterMatrix((c * w) @ c.T)


def norm_and_population(W: TanglemeterMatrix) -> PopulationResult:
    """Norm exp(Tr W W^+) and upper-level population Tr[W W^+ / (1 - W W^+)]."""
    w = W.values
    lam = np.linalg.eigvalsh(w @ w.conj().T)
    lam = np.clip(lam, 0.0, None)
    if lam.size and lam.max() >= 1.0:
        raise SingularPopulationError(
            f"spectral radius of W W^+ is {lam.max():.6g} >= 1"
        )
    w_trace = W.w_trace
    return PopulationResult(
        n1=float(np.sum(lam / (1.0 - lam))),
        norm=math.exp(w_trace),
        w_trace=w_trace,
        n_qutrits=W.n,
    )


def mode_populations(V, alpha: float, t: float, *, branch: int = 1) -> np.ndarray:
    """Per-mode population V^2 sin^2(z t) / z^2."""
    V = np.asarray(V, dtype=float)
    _, s = even_parts(alpha * (alpha + 2 * V), t, branch)
    return V * V * s * s


def population_analytic(sd: SpectralDecomposition, p: KernelParams, *, branch: int = 1) -> float:
    return float(math.fsum(mode_populations(sd.eigenvalues, p.alpha, p.t, branch=branch)))


def population_collective(nv: float, alpha: float, t: float) -> float:
    """Upper-level population for all-to-all coupling with collective strength NV.

    Written directly from the collective closed form (not via the mode
    machinery) so the two can cross-check each other.
    """
    q = alpha * (2 * nv + alpha)
    if abs(q) * t * t < 1e-8:
        x = q * t * t
        return nv * nv * t * t * (1 - x / 3 + 2 * x * x / 45)
    z = np.emath.sqrt(q)
    val = nv * nv * np.sin(t * z) ** 2 / z**2
    return float(np.real(val))


def collective_valid(n1: float, n_qutrits: int, fraction: float = VALIDITY_FRACTION) -> bool:
    """Small-deviation regime check: n1 well below N."""
    return n1 < fraction * n_qutrits


def sweep_population(
    first_axis: Sequence[float],
    alpha_values: Sequence[float],
    t: float | None = None,
    *,
    kernel: str = "collective",
    spectra: Sequence[np.ndarray] | None = None,
):
    """Tabulate n1 over a grid.

    ``kernel="collective"``: ``first_axis`` holds v = NV values at fixed ``t``;
    columns (v, alpha, n1).

    ``kernel="ensemble"``: ``first_axis`` holds times and ``spectra`` the
    sampled eigenvalue arrays, all in one consistent energy unit; n1 is the
    sample mean of the mode sum; columns (t, alpha, n1).
    """
    xs = np.asarray(first_axis, dtype=float)
    alphas = np.asarray(alpha_values, dtype=float)
    if xs.size > 1 and np.any(np.diff(xs) <= 0) or alphas.size > 1 and np.any(np.diff(alphas) <= 0):
        raise ValidationError("grid axes must be strictly increasing")
    rows = []
    if kernel == "collective":
        if t is None:
            raise ValidationError("collective sweep needs t")
        for v in xs:
            for a in alphas:
                rows.append((v, a, population_collective(v, a, t)))
        return ("v", "alpha", "n1"), np.array(rows).reshape(-1, 3)
    if kernel == "ensemble":
        if not spectra:
            raise ValidationError("ensemble sweep needs sampled spectra")
        ev = np.stack([np.asarray(s, dtype=float) for s in spectra])
        for tt in xs:
            for a in alphas:
                n1 = mode_populations(ev, a, tt).sum(axis=1).mean()
                rows.append((tt, a, n1))
        return ("t", "alpha", "n1"), np.array(rows).reshape(-1, 3)
    raise ValidationError(f"unknown kernel {kernel!r}")
