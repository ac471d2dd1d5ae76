"""Mode dynamics under a piecewise-constant detuning schedule.

Each mode amplitude obeys the Riccati equation

    dw/dt = -i [V (1 + w)^2 + 2 alpha(t) w],    w(0) = 0,

whose constant-alpha solution is the closed-form kernel in ``analytic``.
It linearizes with w = p / q into a traceless 2x2 system, so a constant
segment acts on w as a Mobius map and a schedule is their composition.
The adaptive ODE route is kept as an independent check on that composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from qutritsim.analytic import PopulationResult, even_parts
from qutritsim.core import (
    DetuningSchedule,
    DivergenceError,
    QutritError,
    SingularPopulationError,
    SpectralDecomposition,
    ValidationError,
    _frozen,
)
from qutritsim.media import EigenvalueHistogram

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class ModeTrajectory:
    V: float
    times: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(np.asarray(self.times, float)))
        object.__setattr__(self, "w", _frozen(np.asarray(self.w, complex)))


def riccati_rhs(w, V, alpha):
    return -1j * (V * (1 + w) ** 2 + 2 * alpha * w)


def mobius_coefficients(V, alpha: float, dt: float):
    """Entries (a, b, c, d) of exp(M dt) with M = -i [[V+alpha, V], [-V, -(V+alpha)]]."""
    V = np.asarray(V, dtype=float)
    cz, sz = even_parts(alpha * (alpha + 2 * V), dt)
    a = cz - 1j * (V + alpha) * sz
    b = -1j * V * sz
    c = 1j * V * sz
    d = cz + 1j * (V + alpha) * sz
    return a, b, c, d


def mode_propagator(V: float, alpha: float, dt: float) -> np.ndarray:
    a, b, c, d = mobius_coefficients(V, alpha, dt)
    return np.array([[a, b], [c, d]], dtype=complex)


def apply_mobius(w, coeffs):
    a, b, c, d = coeffs
    return (a * w + b) / (c * w + d)


def _check(x, t: float):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"mode propagator overflowed at t = {t:g}", location=t)


def mode_propagate(V, sched: DetuningSchedule, t: float):
    """Composed propagator entries (A, B, C, D) over [0, t]; vectorized over V.

    The product keeps the form [[A, B], [conj(B), conj(A)]] with
    |A|^2 - |B|^2 = 1, so starting from w = 0 the amplitude is B / D and the
    mode population |w|^2 / (1 - |w|^2) equals |B|^2 without cancellation.
    """
    shape = np.shape(V)
    A = np.ones(shape, dtype=complex)
    B = np.zeros(shape, dtype=complex)
    C = np.zeros(shape, dtype=complex)
    D = np.ones(shape, dtype=complex)
    elapsed = 0.0
    for dt, alpha in sched.pieces(t):
        a, b, c, d = mobius_coefficients(V, alpha, dt)
        A, B, C, D = a * A + b * C, a * B + b * D, c * A + d * C, c * B + d * D
        elapsed += dt
        _check(B, elapsed)
        _check(D, elapsed)
    return A, B, C, D


def _evolve_mobius(V, sched: DetuningSchedule, t: float):
    _, B, _, D = mode_propagate(V, sched, t)
    return B / D


def mode_population_schedule(V, sched: DetuningSchedule, t: float):
    """Per-mode upper-level population under ``sched`` at time ``t``."""
    _, B, _, _ = mode_propagate(V, sched, t)
    return np.abs(B) ** 2


def _evolve_ode(V: float, sched: DetuningSchedule, t: float, tol: float) -> complex:
    w = 0j
    start = 0.0
    for dt, alpha in sched.pieces(t):
        sol = solve_ivp(
            lambda _, y: riccati_rhs(y, V, alpha),
            (start, start + dt),
            np.array([w], dtype=complex),
            method="DOP853",
            rtol=tol * 1e-1,
            atol=tol * 1e-2,
        )
        if not sol.success:
            raise DivergenceError(f"integrator failed on [{start}, {start + dt}]: {sol.message}", start)
        w = complex(sol.y[0, -1])
        start += dt
        _check(w, start)
        if abs(w) >= 1:
            raise DivergenceError(f"mode amplitude left the unit disk at t = {start:g}", start)
    return w


def mode_evolve(
    V,
    sched: DetuningSchedule,
    t: float,
    tol: float = DEFAULT_TOL,
    *,
    method: str = "mobius",
):
    """Mode amplitude at time ``t``.

    ``method`` is ``"mobius"`` (exact composition; vectorized over V),
    ``"ode"`` (adaptive Runge-Kutta on the Riccati equation; scalar V) or
    ``"both"``, which runs the two and raises if they differ by more than
    ``10 * tol``.
    """
    if method == "mobius":
        w = _evolve_mobius(V, sched, t)
        return w if np.ndim(w) else complex(w)
    if method == "ode":
        return _evolve_ode(float(V), sched, t, tol)
    if method == "both":
        wm = complex(_evolve_mobius(float(V), sched, t))
        wo = _evolve_ode(float(V), sched, t, tol)
        if abs(wm - wo) > 10 * tol:
            raise QutritError(f"integrator and Mobius paths disagree by {abs(wm - wo):.3g}")
        return wm
    raise ValidationError(f"unknown method {method!r}")


def mode_trajectory(V: float, sched: DetuningSchedule, times) -> ModeTrajectory:
    times = np.asarray(times, dtype=float)
    return ModeTrajectory(V, times, [mode_evolve(V, sched, float(tt)) for tt in times])


def mode_population(w) -> np.ndarray:
    a2 = np.abs(w) ** 2
    if np.any(a2 >= 1):
        raise SingularPopulationError("mode amplitude reached the unit circle")
    return a2 / (1 - a2)


def population_schedule(
    sd: SpectralDecomposition,
    sched: DetuningSchedule,
    t: float,
    tol: float = DEFAULT_TOL,
    *,
    method: str = "mobius",
) -> PopulationResult:
    if method == "mobius":
        _, B, _, D = mode_propagate(sd.eigenvalues, sched, t)
        w = B / D
        pops = np.abs(B) ** 2
    else:
        w = np.array([mode_evolve(v, sched, t, tol, method=method) for v in sd.eigenvalues])
        pops = mode_population(w)
    w_trace = float(math.fsum(np.abs(w) ** 2))
    return PopulationResult(
        n1=float(math.fsum(pops)),
        norm=math.exp(w_trace),
        w_trace=w_trace,
        n_qutrits=sd.n,
    )


class Asymptotic(NamedTuple):
    value: float
    flags: dict


def asymptotic_small_dt(
    V: float, alpha: float, t: float, delta_t: float, *, threshold: float = 0.1
) -> Asymptotic:
    """Short-switch asymptote (V^2/alpha^2) sin^2[(V + alpha)(t - delta_t)].

    Flags report whether |V/alpha| and |alpha delta_t| are at most ``threshold``.
    """
    if alpha == 0:
        raise ValidationError("short-switch asymptote needs alpha != 0")
    value = V * V / (alpha * alpha) * math.sin((V + alpha) * (t - delta_t)) ** 2
    flags = {
        "weak_coupling": abs(V / alpha) <= threshold,
        "short_switch": abs(alpha * delta_t) <= threshold,
    }
    return Asymptotic(value, flags)


class LargeDt(NamedTuple):
    raw: float
    averaged: float


def asymptotic_large_dt(V: float, alpha: float, t: float, t1: float, t2: float) -> LargeDt:
    """Long-switch asymptote, raw and with the fast cos(alpha (t1 + t2)) bracket averaged out."""
    if t < t2:
        raise ValidationError(f"need t >= t2, got t={t}, t2={t2}")
    dt = t2 - t1
    base = V * V * dt * dt
    slow = 1 - math.cos(V * (t - t2))
    return LargeDt(
        raw=base * (1 + 2 * slow * (1 + math.cos(alpha * (t1 + t2)))),
        averaged=base * (1 + 2 * slow),
    )


def beat_ratio(nv: float, alpha: float, t1: float, t2: float, t: float) -> float:
    """n1 with alpha switched off on [t1, t2) divided by n1 with no switch."""
    if not 0 <= t1 <= t2 <= t:
        raise ValidationError(f"need 0 <= t1 <= t2 <= t, got {t1}, {t2}, {t}")
    if t == 0:
        raise ValidationError("ratio undefined at t = 0")
    num = mode_population_schedule(nv, DetuningSchedule.switch(alpha, t1, t2, t), t)
    den = mode_population_schedule(nv, DetuningSchedule.constant(alpha, t), t)
    if den == 0:
        raise ValidationError("vanishing reference population; ratio undefined")
    return float(num / den)


def beat_map(nv: float, alpha: float, t1_values, dt_values, t_offset: float):
    """Rows (t1, t2 - t1, ratio) with observation time t = t2 + t_offset."""
    rows = []
    for t1 in t1_values:
        for dt in dt_values:
            t2 = t1 + dt
            rows.append((t1, dt, beat_ratio(nv, alpha, t1, t2, t2 + t_offset)))
    return ("t1", "dt", "ratio"), np.array(rows, dtype=float).reshape(-1, 3)


def oscillation_average(f: Callable[[float], float], t: float, alpha: float, samples: int = 64) -> float:
    """Mean of f over one fast period 2 pi / |alpha| centred on t (midpoint rule)."""
    if alpha == 0:
        return float(f(t))
    period = 2 * math.pi / abs(alpha)
    offs = (np.arange(samples) + 0.5) / samples - 0.5
    return float(np.mean([f(t + period * o) for o in offs]))


def average_over_density(
    observable: Callable[[np.ndarray], np.ndarray],
    density,
    *,
    grid=None,
    normalize: bool = False,
) -> float:
    """Integrate observable(V) against an eigenvalue density.

    ``density`` is either an ``EigenvalueHistogram`` (bin sums, exact in the
    total mass) or a callable g(V) integrated with the trapezoid rule on
    ``grid``. With ``normalize`` the result is divided by the total mass.
    """
    if isinstance(density, EigenvalueHistogram):
        if density.counts.sum() <= 0:
            raise ValidationError("empty histogram")
        vals = np.asarray(observable(density.centers), dtype=float)
        total = float(np.dot(vals, density.counts))
        mass = float(density.counts.sum())
    else:
        if grid is None:
            raise ValidationError("a callable density needs an integration grid")
        grid = np.asarray(grid, dtype=float)
        g = np.asarray(density(grid), dtype=float)
        total = float(np.trapezoid(np.asarray(observable(grid), float) * g, grid))
        mass = float(np.trapezoid(g, grid))
        if mass <= 0:
            raise ValidationError("density has no mass on the grid")
    return total / mass if normalize else total


def density_curve(
    density: EigenvalueHistogram,
    alpha: float,
    t1: float,
    t2: float,
    taus,
    *,
    averaged: bool = False,
    samples: int = 32,
) -> np.ndarray:
    """Density-weighted n1 at t = t2 + tau for the switch schedule, per tau.

    Modes are the histogram bin centres weighted by their mean counts. With
    ``averaged`` each point is also averaged over one fast period 2 pi/|alpha|.
    """
    taus = np.asarray(taus, dtype=float)
    period = 2 * math.pi / abs(alpha) if alpha else 0.0
    horizon = t2 + float(taus.max()) + period
    sched = DetuningSchedule.switch(alpha, t1, t2, horizon)
    mask = density.counts > 0
    vs = density.centers[mask]
    weights = density.counts[mask]

    def n1_at(t):
        return float(np.dot(mode_population_schedule(vs, sched, t), weights))

    out = []
    for tau in taus:
        if averaged and alpha:
            lo = max(t2, t2 + tau - period / 2)
            offs = (np.arange(samples) + 0.5) / samples
            out.append(np.mean([n1_at(lo + period * o) for o in offs]))
        else:
            out.append(n1_at(t2 + tau))
    return np.array(out)
