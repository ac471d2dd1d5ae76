"""Brute-force evolution on the full 3**N product space.

Basis: site i carries level -1, 0, +1 stored as digit 0, 1, 2, and the basis
index is sum_i digit_i * 3**i (site 0 least significant). The Hamiltonian is
taken in the frame rotating at the fast level splitting, where both outer
levels sit ``alpha`` above the middle one:

    H = alpha * (number of sites off the middle level)
        + sum_{i != j} V_ji (u_j^+ + t_j^-)(u_i^- + t_i^+)

The double sum runs over ordered pairs; ``pair_factor`` rescales it for the
once-per-pair convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from qutritsim.analytic import KernelParams, population_analytic, tanglemeter_matrix
from qutritsim.core import (
    CouplingMatrix,
    DetuningSchedule,
    QutritError,
    TanglemeterMatrix,
    ValidationError,
    _frozen,
)
from qutritsim.media import eigen_decompose
from qutritsim.schedule import population_schedule

N_DEFAULT_CAP = 8
N_HARD_CAP = 12
N_DENSE_CAP = 6

MINUS, MIDDLE, PLUS = 0, 1, 2


@dataclass(frozen=True)
class StateVector:
    n_qutrits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_n(self.n_qutrits)
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (3**self.n_qutrits,):
            raise ValidationError(f"expected {3 ** self.n_qutrits} amplitudes, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("state has non-finite amplitudes")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def ground(cls, n: int) -> "StateVector":
        a = np.zeros(3**n, dtype=complex)
        a[middle_index(n)] = 1.0
        return cls(n, a)


def _check_n(n: int) -> None:
    if not 1 <= n <= N_HARD_CAP:
        raise ValidationError(f"oracle supports 1 <= N <= {N_HARD_CAP}, got {n}")


def basis_index(digits) -> int:
    return sum(int(d) * 3**i for i, d in enumerate(digits))


def basis_digits(index: int, n: int) -> tuple[int, ...]:
    out = []
    for _ in range(n):
        index, d = divmod(index, 3)
        out.append(d)
    if index:
        raise ValidationError("index out of range for N sites")
    return tuple(out)


def middle_index(n: int) -> int:
    return (3**n - 1) // 2


@lru_cache(maxsize=16)
def _level_counts(n: int) -> np.ndarray:
    """(3, 3**n) array: number of sites at digit 0, 1, 2 for each basis index."""
    idx = np.arange(3**n)
    counts = np.zeros((3, 3**n), dtype=np.int64)
    for _ in range(n):
        idx, d = np.divmod(idx, 3)
        for level in range(3):
            counts[level] += d == level
    counts.setflags(write=False)
    return counts


def _site_view(psi: np.ndarray, n: int, site: int) -> np.ndarray:
    return psi.reshape(3 ** (n - 1 - site), 3, 3**site)


def _lower_down(psi, n, site):
    """(u^- + t^+) on ``site``: -1 -> 0 and 0 -> +1."""
    src = _site_view(psi, n, site)
    out = np.zeros_like(src)
    out[:, MIDDLE] = src[:, MINUS]
    out[:, PLUS] = src[:, MIDDLE]
    return out.reshape(-1)


def _raise_up(psi, n, site):
    """(u^+ + t^-) on ``site``: 0 -> -1 and +1 -> 0."""
    src = _site_view(psi, n, site)
    out = np.zeros_like(src)
    out[:, MINUS] = src[:, MIDDLE]
    out[:, MIDDLE] = src[:, PLUS]
    return out.reshape(-1)


def _t_plus(psi, n, site):
    src = _site_view(psi, n, site)
    out = np.zeros_like(src)
    out[:, PLUS] = src[:, MIDDLE]
    return out.reshape(-1)


def _u_plus(psi, n, site):
    src = _site_view(psi, n, site)
    out = np.zeros_like(src)
    out[:, MINUS] = src[:, MIDDLE]
    return out.reshape(-1)


class RwaHamiltonian:
    """Matrix-free rotating-frame Hamiltonian for fixed coupling and detuning."""

    def __init__(self, V: CouplingMatrix, alpha: float, pair_factor: float = 1.0):
        _check_n(V.n)
        self.n = V.n
        self.V = V.values * pair_factor
        self.alpha = float(alpha)
        counts = _level_counts(self.n)
        self._excited = (counts[MINUS] + counts[PLUS]).astype(float)

    @property
    def dim(self) -> int:
        return 3**self.n

    def apply(self, psi: np.ndarray) -> np.ndarray:
        n = self.n
        out = self.alpha * self._excited * psi
        if n < 2:
            return out
        phi = np.stack([_lower_down(psi, n, i) for i in range(n)])
        chi = self.V @ phi  # chi_j = sum_i V_ji phi_i; zero diagonal excludes i == j
        for j in range(n):
            out += _raise_up(chi[j], n, j)
        return out


def build_rwa_hamiltonian_apply(
    psi: StateVector, V: CouplingMatrix, alpha: float, *, pair_factor: float = 1.0
) -> StateVector:
    if V.n != psi.n_qutrits:
        raise ValidationError(f"coupling is {V.n}x{V.n} but state has {psi.n_qutrits} sites")
    return StateVector(psi.n_qutrits, RwaHamiltonian(V, alpha, pair_factor).apply(psi.amplitudes))


def dense_hamiltonian(V: CouplingMatrix, alpha: float, pair_factor: float = 1.0) -> np.ndarray:
    """Explicit Kronecker-product construction, independent of ``RwaHamiltonian``."""
    n = V.n
    if n > N_DENSE_CAP:
        raise ValidationError(f"dense path limited to N <= {N_DENSE_CAP}")
    eye = np.eye(3)
    raise_op = np.zeros((3, 3))
    raise_op[MINUS, MIDDLE] = 1.0
    raise_op[MIDDLE, PLUS] = 1.0
    lower_op = raise_op.T
    excited = np.diag([1.0, 0.0, 1.0])

    def embed(ops: dict[int, np.ndarray]) -> np.ndarray:
        m = np.eye(1)
        for site in reversed(range(n)):
            m = np.kron(m, ops.get(site, eye))
        return m

    h = np.zeros((3**n, 3**n), dtype=complex)
    for i in range(n):
        h += alpha * embed({i: excited})
    for i in range(n):
        for j in range(n):
            if i != j and V.values[j, i] != 0:
                h += pair_factor * V.values[j, i] * embed({j: raise_op, i: lower_op})
    return h


@dataclass
class EvolutionStats:
    steps: int = 0
    rejected: int = 0
    max_krylov: int = 0
    norm_drift: float = 0.0


def _krylov_step(apply, psi: np.ndarray, h: float, m_max: int):
    """exp(-i h H) psi by Lanczos with full reorthogonalization; returns (result, error estimate, m)."""
    beta0 = np.linalg.norm(psi)
    if beta0 == 0:
        return psi.copy(), 0.0, 0
    basis = [psi / beta0]
    alphas, betas = [], []
    for k in range(m_max):
        w = apply(basis[k])
        a = np.vdot(basis[k], w).real
        w = w - a * basis[k] - (betas[-1] * basis[k - 1] if k else 0)
        for b in basis:
            w -= np.vdot(b, w) * b
        alphas.append(a)
        beta = np.linalg.norm(w)
        if beta < 1e-14 * max(1.0, abs(a)) or k == m_max - 1:
            break
        betas.append(beta)
        basis.append(w / beta)
    m = len(alphas)
    t = np.diag(alphas) + np.diag(betas[: m - 1], 1) + np.diag(betas[: m - 1], -1)
    evals, evecs = np.linalg.eigh(t)
    coeff = evecs @ (np.exp(-1j * h * evals) * evecs[0].conj())
    result = beta0 * sum(c * b for c, b in zip(coeff, basis[:m]))
    lucky = m < m_max
    err = 0.0 if lucky else beta0 * beta * abs(coeff[-1])
    return result, err, m


def evolve_exact(
    psi0: StateVector,
    V: CouplingMatrix,
    sched: DetuningSchedule,
    t: float,
    tol: float = 1e-10,
    *,
    method: str = "krylov",
    pair_factor: float = 1.0,
    krylov_dim: int = 30,
    stats: EvolutionStats | None = None,
) -> StateVector:
    """Evolve ``psi0`` to time ``t`` under the rotating-frame Hamiltonian.

    ``method="krylov"`` is matrix-free with adaptive step control so the
    accumulated local error stays below ``tol``; ``method="dense"`` uses the
    full matrix exponential and is limited to N <= 6.
    """
    if V.n != psi0.n_qutrits:
        raise ValidationError("coupling and state sizes differ")
    stats = stats if stats is not None else EvolutionStats()
    psi = psi0.amplitudes.copy()
    norm0 = np.linalg.norm(psi)
    pieces = sched.pieces(t) if t > 0 else []
    if method == "dense":
        for dt, alpha in pieces:
            psi = scipy.linalg.expm(-1j * dt * dense_hamiltonian(V, alpha, pair_factor)) @ psi
            stats.steps += 1
    elif method == "krylov":
        for dt, alpha in pieces:
            ham = RwaHamiltonian(V, alpha, pair_factor)
            done = 0.0
            h = dt
            while done < dt * (1 - 1e-14):
                h = min(h, dt - done)
                new, err, m = _krylov_step(ham.apply, psi, h, krylov_dim)
                stats.max_krylov = max(stats.max_krylov, m)
                if err > tol * h / max(t, 1e-300) * max(norm0, 1e-300) and h > 1e-12 * dt:
                    h *= 0.5
                    stats.rejected += 1
                    continue
                if err > tol * max(norm0, 1.0):
                    raise QutritError(f"Krylov step failed to meet tolerance (error {err:.3g})")
                psi = new
                done += h
                stats.steps += 1
                h *= 1.5
    else:
        raise ValidationError(f"unknown method {method!r}")
    if norm0 > 0:
        stats.norm_drift = abs(np.linalg.norm(psi) - norm0) / norm0
    return StateVector(psi0.n_qutrits, psi)


def build_state_from_W(W: TanglemeterMatrix) -> StateVector:
    """exp(sum_{i != j} W_ij u_j^+ t_i^+) |O>, expanded until the series terminates.

    Diagonal entries drop out: u_i^+ t_i^+ annihilates a middle-level site.
    """
    n = W.n
    _check_n(n)
    w = np.array(W.values)
    np.fill_diagonal(w, 0.0)
    term = StateVector.ground(n).amplitudes.copy()
    total = term.copy()
    for k in range(1, n // 2 + 1):
        phi = np.stack([_t_plus(term, n, i) for i in range(n)])
        chi = w.T @ phi  # chi_j = sum_i W_ij t_i^+ term
        term = sum(_u_plus(chi[j], n, j) for j in range(n)) / k
        if not np.any(term):
            break
        total += term
    return StateVector(n, total)


def measure_populations(psi: StateVector) -> tuple[float, float, float]:
    """Mean number of sites at +1, 0 and -1 in the normalized state."""
    p = np.abs(psi.amplitudes) ** 2
    total = p.sum()
    if total == 0:
        raise ValidationError("zero-norm state")
    counts = _level_counts(psi.n_qutrits)
    return (
        float(counts[PLUS] @ p / total),
        float(counts[MIDDLE] @ p / total),
        float(counts[MINUS] @ p / total),
    )


def extract_W_estimate(psi: StateVector, *, rtol: float = 1e-300) -> np.ndarray:
    """W_ij = <site i at +1, site j at -1 | psi> / <O | psi> for i != j."""
    n = psi.n_qutrits
    a = psi.amplitudes
    i0 = middle_index(n)
    amp0 = a[i0]
    if abs(amp0) <= rtol * max(np.abs(a).max(), 1e-300) or amp0 == 0:
        raise ValidationError("all-middle amplitude vanishes; W undefined")
    w = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            if i != j:
                w[i, j] = a[i0 + 3**i - 3**j] / amp0
    return w


@dataclass
class ScaleRow:
    scale: float
    n1_exact: float
    n1_analytic: float
    rel_error: float
    norm_exact: float
    norm_formula: float
    w_error: float


@dataclass
class OracleReport:
    params: dict
    rows: list[ScaleRow] = field(default_factory=list)
    orders: list[float] = field(default_factory=list)
    W_extracted: np.ndarray | None = None
    W_analytic: np.ndarray | None = None

    @property
    def min_order(self) -> float:
        return min(self.orders) if self.orders else math.nan

    def to_dict(self) -> dict:
        def cm(m):
            return None if m is None else {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}

        return {
            "params": self.params,
            "rows": [vars(r) for r in self.rows],
            "orders": self.orders,
            "W_extracted": cm(self.W_extracted),
            "W_analytic": cm(self.W_analytic),
        }


def collective_coupling(n: int, nv: float) -> CouplingMatrix:
    """All-to-all coupling V_ij = nv / n off the diagonal."""
    v = np.full((n, n), nv / n)
    np.fill_diagonal(v, 0.0)
    return CouplingMatrix(v)


def compare_report(
    base: CouplingMatrix,
    t: float,
    scales,
    *,
    alpha: float | None = None,
    schedule: DetuningSchedule | None = None,
    normalize: bool = True,
    tol: float = 1e-10,
    pair_factor: float = 1.0,
    method: str = "krylov",
) -> OracleReport:
    """Exact versus closed-form n1 at each coupling scale.

    With ``normalize`` the coupling at scale s is ``s * base / max|V_m|`` so
    s is the strongest mode coupling; otherwise it is ``s * base``. The
    empirical order between consecutive scales is
    log(err_k / err_{k+1}) / log(s_k / s_{k+1}).
    """
    if (alpha is None) == (schedule is None):
        raise ValidationError("give exactly one of alpha or schedule")
    if base.n > N_DEFAULT_CAP:
        raise ValidationError(f"routine comparisons are limited to N <= {N_DEFAULT_CAP}")
    sched = schedule if schedule is not None else DetuningSchedule.constant(alpha, max(t, 1e-300))
    radius = float(np.max(np.abs(np.linalg.eigvalsh(base.values)))) if base.n > 1 else 0.0
    report = OracleReport(
        params={
            "n": base.n,
            "t": t,
            "alpha": alpha,
            "schedule": [list(s) for s in sched.segments],
            "scales": list(map(float, scales)),
            "normalize": normalize,
            "pair_factor": pair_factor,
            "tol": tol,
            "method": method,
        }
    )
    for s in scales:
        factor = s / radius if normalize and radius > 0 else s
        v = base.scaled(factor)
        sd = eigen_decompose(v)
        psi = evolve_exact(StateVector.ground(base.n), v, sched, t, tol, method=method, pair_factor=pair_factor)
        n1_exact = measure_populations(psi)[0]
        if schedule is None:
            w_an = tanglemeter_matrix(sd, KernelParams(alpha, t)).values
            n1_an = population_analytic(sd, KernelParams(alpha, t))
        else:
            w_an = None
            n1_an = population_schedule(sd, sched, t).n1
        w_ex = extract_W_estimate(psi)
        amp0 = abs(psi.amplitudes[middle_index(base.n)])
        norm_exact = (psi.norm / amp0) ** 2
        if w_an is not None:
            off = ~np.eye(base.n, dtype=bool)
            scale_w = max(np.abs(w_an[off]).max(), 1e-300)
            w_err = float(np.abs(w_ex - w_an)[off].max() / scale_w)
            norm_formula = math.exp(float(np.sum(np.abs(w_an) ** 2)))
        else:
            w_err = math.nan
            norm_formula = math.nan
        if n1_an == 0:
            rel = 0.0 if n1_exact == 0 else math.inf
        else:
            rel = abs(n1_exact - n1_an) / abs(n1_an)
        report.rows.append(ScaleRow(float(s), n1_exact, n1_an, rel, norm_exact, norm_formula, w_err))
        report.W_extracted, report.W_analytic = w_ex, w_an
    for a, b in zip(report.rows, report.rows[1:]):
        if a.rel_error > 0 and b.rel_error > 0 and a.scale != b.scale:
            report.orders.append(math.log(a.rel_error / b.rel_error) / math.log(a.scale / b.scale))
        else:
            report.orders.append(math.inf if a.rel_error == b.rel_error == 0 else math.nan)
    return report
