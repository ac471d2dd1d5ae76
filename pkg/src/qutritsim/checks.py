"""Self-check suite: every cross-module invariant with its measured defect."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from qutritsim.analytic import (
    KernelParams,
    kernel_w,
    norm_and_population,
    population_analytic,
    population_collective,
    tanglemeter_matrix,
)
from qutritsim.core import (
    DetuningSchedule,
    SpectralDecomposition,
    TanglemeterMatrix,
    make_schedule,
    validate_coupling,
)
from qutritsim.media import coupling_from_geometry, eigen_decompose, eigenvalue_density, sample_geometry
from qutritsim.oracle import (
    RwaHamiltonian,
    StateVector,
    basis_digits,
    basis_index,
    build_state_from_W,
    compare_report,
    evolve_exact,
    EvolutionStats,
)
from qutritsim.schedule import apply_mobius, mobius_coefficients, mode_evolve, riccati_rhs


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    comparison: str = "<="

    def as_dict(self) -> dict:
        return asdict(self)


def _le(name, measured, tol):
    return CheckResult(name, bool(measured <= tol), float(measured), float(tol), "<=")


def _ge(name, measured, tol):
    return CheckResult(name, bool(measured >= tol), float(measured), float(tol), ">=")


def random_symmetric(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) * scale
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return a


def _kernel_grid():
    vs = np.array([-2.0, -0.7, -0.1, 0.0, 0.05, 0.3, 1.5])
    alphas = [-1.3, -0.3, 0.0, 0.2, 1.0]
    ts = [0.0, 1e-6, 0.37, 2.0, 5.5]
    return vs, alphas, ts


def check_branch_invariance(kernel: Callable = kernel_w) -> CheckResult:
    vs, alphas, ts = _kernel_grid()
    worst = 0.0
    for a in alphas:
        for t in ts:
            d = np.abs(np.asarray(kernel(vs, a, t, branch=1)) - np.asarray(kernel(vs, a, t, branch=-1)))
            worst = max(worst, float(d.max()))
    return _le("branch_invariance", worst, 1e-12)


def check_identity(n_cases: int = 20, n: int = 10, seed: int = 11) -> CheckResult:
    # Wigner scaling keeps |w_m| away from 1; near the unit circle the
    # matrix route loses about eps * n1 in relative accuracy.
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        sd = eigen_decompose(validate_coupling(random_symmetric(rng, n, 0.5 / math.sqrt(n))))
        p = KernelParams(float(rng.uniform(-2, 2)), float(rng.uniform(0, 3)))
        a = population_analytic(sd, p)
        b = norm_and_population(tanglemeter_matrix(sd, p)).n1
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    return _le("population_identity", worst, 1e-10)


def check_rank1(n: int = 7) -> CheckResult:
    """Uniform-mode term of the mode sum against the collective closed form.

    Covers the exact rank-1 matrix V 11^T (spectrum NV, 0, ..., 0) and the
    zero-diagonal matrix, whose uniform mode carries (N - 1) V.
    """
    worst = 0.0
    uniform = np.full((n, 1), 1 / math.sqrt(n))
    for v in [0.05, 0.2, -0.3]:
        vals, vecs = np.linalg.eigh(np.full((n, n), v))
        rank1 = SpectralDecomposition(vals, vecs)
        zero_diag = eigen_decompose(validate_coupling(np.full((n, n), v) - v * np.eye(n)))
        for a in [-n * v, 0.4, -1.0]:
            for t in [0.5, 3.0]:
                p = KernelParams(a, t)
                ref = population_collective(n * v, a, t)
                got = population_analytic(rank1, p)
                worst = max(worst, abs(got - ref) / ref)
                mode = population_analytic(SpectralDecomposition([(n - 1) * v], uniform), p)
                ref = population_collective((n - 1) * v, a, t)
                worst = max(worst, abs(mode - ref) / ref)
                k = int(np.argmax(np.abs(zero_diag.eigenvalues)))
                single = population_analytic(
                    SpectralDecomposition(zero_diag.eigenvalues[k : k + 1], zero_diag.eigenvectors[:, k : k + 1]), p
                )
                worst = max(worst, abs(single - ref) / ref)
    return _le("rank1_consistency", worst, 1e-12)


def check_hermitian_psd(seed: int = 12) -> CheckResult:
    rng = np.random.default_rng(seed)
    sd = eigen_decompose(validate_coupling(random_symmetric(rng, 8)))
    w = tanglemeter_matrix(sd, KernelParams(0.7, 1.3)).values
    g = w @ w.conj().T
    herm = np.abs(g - g.conj().T).max()
    neg = max(0.0, -float(np.linalg.eigvalsh(g).min()))
    normal = np.abs(w @ w.conj().T - w.conj().T @ w).max()
    return _le("ww_hermitian_psd", max(herm, neg, normal, np.abs(w - w.T).max()), 1e-12)


def check_periodicity() -> CheckResult:
    worst = 0.0
    for v, a in [(0.3, 1.0), (-0.2, -1.5), (1.0, 0.5)]:
        z = math.sqrt(a * (a + 2 * v))
        period = math.pi / z
        for t in [0.1, 0.77, 2.0]:
            worst = max(worst, abs(kernel_w(v, a, t + period) - kernel_w(v, a, t)))
        for k in (1, 2, 3):
            worst = max(worst, abs(kernel_w(v, a, k * period)))
    return _le("kernel_periodicity", worst, 1e-12)


def check_riccati_residual() -> CheckResult:
    h = 1e-4
    worst = 0.0
    for v in [-0.8, -0.2, 0.1, 0.6]:
        for a in [-1.0, 0.0, 0.5, 2.0]:
            for t in [0.3, 1.1, 2.4]:
                # 4th-order central difference
                d = (
                    -kernel_w(v, a, t + 2 * h) + 8 * kernel_w(v, a, t + h)
                    - 8 * kernel_w(v, a, t - h) + kernel_w(v, a, t - 2 * h)
                ) / (12 * h)
                worst = max(worst, abs(d - riccati_rhs(kernel_w(v, a, t), v, a)))
    return _le("riccati_residual", worst, 1e-8)


def check_segment_consistency() -> CheckResult:
    worst = 0.0
    for v, a in [(0.3, -0.3), (0.05, 1.0), (-0.4, 0.2)]:
        one = mode_evolve(v, DetuningSchedule.constant(a, 4.0), 4.0)
        two = mode_evolve(v, make_schedule([(1.3, a), (2.7, a)]), 4.0)
        w = apply_mobius(apply_mobius(0j, mobius_coefficients(v, a, 1.3)), mobius_coefficients(v, a, 2.7))
        worst = max(worst, abs(one - two), abs(one - w), abs(one - kernel_w(v, a, 4.0)))
    return _le("segment_consistency", worst, 1e-10)


def check_integrator(tol: float = 1e-9) -> CheckResult:
    worst = 0.0
    for v, a in [(0.3, -0.3), (0.05, 1.0), (-0.4, 0.2)]:
        sched = DetuningSchedule.constant(a, 3.0)
        worst = max(worst, abs(mode_evolve(v, sched, 3.0, tol, method="ode") - kernel_w(v, a, 3.0)))
    return _le("integrator_vs_closed_form", worst, 10 * tol)


def check_spectrum(seed: int = 5) -> list[CheckResult]:
    v = coupling_from_geometry(sample_geometry(60, seed))
    sd = eigen_decompose(v)
    norm = np.linalg.norm(v.values)
    return [
        _le("trace_identity", abs(math.fsum(sd.eigenvalues)) / norm, 1e-10),
        _le("reconstruction", np.linalg.norm(sd.reconstruct() - v.values) / norm, 1e-9),
        _le(
            "orthogonality",
            np.abs(sd.eigenvectors.T @ sd.eigenvectors - np.eye(sd.n)).max(),
            1e-10,
        ),
    ]


def check_density_determinism() -> CheckResult:
    a = eigenvalue_density(20, 6, 11, 3, threads=1)
    b = eigenvalue_density(20, 6, 11, 3, threads=3)
    same = np.array_equal(a.counts, b.counts) and a.moments == b.moments
    return _le("density_thread_determinism", 0.0 if same else 1.0, 0.0)


def check_schedule_integral() -> CheckResult:
    s = make_schedule([(0.5, 1.0), (1.25, -2.0), (0.75, 0.3)])
    worst = max(
        abs(s.integral(2.5) - (0.5 - 2.5 + 0.225)),
        abs(s.integral(1.0) - (0.5 - 1.0)),
    )
    return _le("schedule_integral", worst, 1e-15)


def check_coupling_idempotent(seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(6, 6))
    once = validate_coupling(raw, strict=False)
    twice = validate_coupling(once.values, strict=True)
    return _le("validate_idempotent", np.abs(once.values - twice.values).max(), 0.0)


def check_oracle(seed: int = 9) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    v = coupling_from_geometry(sample_geometry(4, seed)).scaled(0.01)
    ham = RwaHamiltonian(v, 0.8)
    x = rng.normal(size=81) + 1j * rng.normal(size=81)
    y = rng.normal(size=81) + 1j * rng.normal(size=81)
    herm = abs(np.vdot(x, ham.apply(y)) - np.vdot(ham.apply(x), y)) / (
        np.linalg.norm(x) * np.linalg.norm(ham.apply(y))
    )
    sched = make_schedule([(0.4, 0.8), (0.3, 0.0), (0.5, 0.8)])
    stats = EvolutionStats()
    kry = evolve_exact(StateVector.ground(4), v, sched, 1.2, stats=stats)
    den = evolve_exact(StateVector.ground(4), v, sched, 1.2, method="dense")
    roundtrip = all(basis_index(basis_digits(k, 5)) == k for k in range(3**5))
    return [
        _le("oracle_hermiticity", herm, 1e-12),
        _le("oracle_unitarity", stats.norm_drift, 1e-9),
        _le("oracle_dense_vs_krylov", np.abs(kry.amplitudes - den.amplitudes).max(), 1e-9),
        _le("basis_roundtrip", 0.0 if roundtrip else 1.0, 0.0),
    ]


def norm_defect_order(seed: int = 21, s: float = 0.05) -> float:
    """Empirical order of |<psi_W|psi_W> - exp(Tr W W^+)| in ||W||_F at N = 3."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    np.fill_diagonal(w, 0.0)
    w /= np.linalg.norm(w)

    def defect(scale):
        wm = TanglemeterMatrix(w * scale)
        exact = build_state_from_W(wm).norm ** 2
        return abs(exact - math.exp(wm.w_trace))

    return math.log(defect(s) / defect(s / 2)) / math.log(2)


def check_norm_order() -> CheckResult:
    return _ge("norm_formula_order", norm_defect_order(), 4.0)


def check_oracle_convergence() -> CheckResult:
    v = coupling_from_geometry(sample_geometry(4, 2))
    rep = compare_report(v, 1.0, [0.2, 0.1, 0.05], alpha=1.0)
    return _ge("oracle_convergence_order", rep.min_order, 1.0)


def validate_suite(kernel: Callable = kernel_w) -> list[CheckResult]:
    """Run every invariant; ``kernel`` may be swapped to test the suite itself."""
    out = [
        check_branch_invariance(kernel),
        check_identity(),
        check_rank1(),
        check_hermitian_psd(),
        check_periodicity(),
        check_riccati_residual(),
        check_segment_consistency(),
        check_integrator(),
        *check_spectrum(),
        check_density_determinism(),
        check_schedule_integral(),
        check_coupling_idempotent(),
        *check_oracle(),
        check_norm_order(),
        check_oracle_convergence(),
    ]
    return out
