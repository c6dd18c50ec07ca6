"""
Almost-adiabatic quantum dynamics and its geometric-phase reconstruction.

Units are hbar = 1. A run propagates U(t), tracks an eigenprojector band P0(t),
builds the generalized wave operator Omega(t) = Omega(P(t), P0(t)) with
P(t) = U(t) P0(0) U(t)^dag and rebuilds the evolved state from the effective
energies and the two geometric generators A and eta.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import eig, eigh, expm, polar
from scipy.optimize import linear_sum_assignment

from utils.common import frobenius_gap
from utils.connection import StiefelConnection
from utils.crossed_module import CrossedModule
from utils.errors import EffectiveDegeneracy, GapClosure, NoCompatibleSubspace, NotLinkable
from utils.grassmann import (
    DEFAULT_LINK_MARGIN,
    Chart,
    Projector,
    best_chart,
    fs_distance,
    projector_from_frame,
)
from utils.holonomy import lift_elementary, ordered_exponentials
from utils.report_tools import fit_slope, refinement_rows
from utils.two_space import DEFAULT_CONDITION_BOUND, PseudoSurface, Skeleton, elementary_wave_operator

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_GAP_MIN = 1e-3
DEFAULT_DEGENERACY_TOL = 1e-8
HERMITICITY_TOL = 1e-12
MAX_SUBSETS = 5000
TIE_TOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


# -- Hamiltonian models -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    n: int
    evaluator: Callable[[float], np.ndarray]
    name: str = "custom"
    smoothness_grid: int = 0

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.evaluator(float(t)), dtype=complex)

    def hermiticity_defect(self, times: Sequence[float]) -> float:
        return max(float(np.linalg.norm(h - h.conj().T)) for h in (self(t) for t in times))

    def check_hermitian(self, times: Sequence[float], tol: float = HERMITICITY_TOL):
        defect = self.hermiticity_defect(times)
        if defect > tol:
            raise ValueError(f"Hamiltonian {self.name} is not Hermitian: defect {defect:.3e}")


def _hermitian(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.conj().T)


def constant_model(h: np.ndarray, name: str = "constant") -> HamiltonianModel:
    h = np.asarray(h, dtype=complex)
    return HamiltonianModel(h.shape[0], lambda t: h, name)


def rabi_model(detuning: float, rabi_frequency: float) -> HamiltonianModel:
    """(detuning / 2) sigma_z + (rabi_frequency / 2) sigma_x."""
    h = 0.5 * detuning * PAULI_Z + 0.5 * rabi_frequency * PAULI_X
    return constant_model(h, "rabi")


def rabi_transition_probability(detuning: float, rabi_frequency: float, t: float) -> float:
    """Closed-form |<1|U(t)|0>|^2 for the constant two-level model."""
    generalized = np.hypot(detuning, rabi_frequency)
    if generalized == 0.0:
        return 0.0
    return float((rabi_frequency / generalized) ** 2 * np.sin(0.5 * generalized * t) ** 2)


def rotating_model(h0: np.ndarray, generator: np.ndarray, angle: Callable[[float], float]) -> HamiltonianModel:
    """H(t) = R(t) H0 R(t)^dag with R(t) = exp(-i angle(t) K)."""
    h0 = np.asarray(h0, dtype=complex)
    k = _hermitian(np.asarray(generator, dtype=complex))

    def evaluate(t):
        r = expm(-1j * angle(t) * k)
        return r @ h0 @ r.conj().T

    return HamiltonianModel(h0.shape[0], evaluate, "rotating")


def rotation(generator: np.ndarray, angle: float) -> np.ndarray:
    return expm(-1j * angle * _hermitian(np.asarray(generator, dtype=complex)))


def avoided_crossing_model(sweep: float = 2.0, coupling: float = 0.5, center: float = 0.5,
                           width: float = 0.2) -> HamiltonianModel:
    """Two levels swept through an avoided crossing: (v(t)/2) sigma_z + coupling sigma_x, v = sweep tanh."""
    def evaluate(t):
        v = sweep * np.tanh((t - center) / width)
        return 0.5 * v * PAULI_Z + coupling * PAULI_X

    return HamiltonianModel(2, evaluate, "avoided_crossing")


def crossing_model(center: float = 0.5) -> HamiltonianModel:
    """Exact level crossing diag(t - c, c - t)."""
    return HamiltonianModel(2, lambda t: (t - center) * PAULI_Z, "crossing")


def table_model(times: Sequence[float], matrices: Sequence[np.ndarray]) -> HamiltonianModel:
    """Cubic interpolation of tabulated Hamiltonians, Hermitian part kept."""
    stack = np.asarray(matrices, dtype=complex)
    real = CubicSpline(np.asarray(times, dtype=float), stack.real, axis=0)
    imag = CubicSpline(np.asarray(times, dtype=float), stack.imag, axis=0)
    return HamiltonianModel(stack.shape[1], lambda t: _hermitian(real(t) + 1j * imag(t)), "table", len(times))


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = _hermitian(z)
    return scale * h / np.linalg.norm(h, 2)


def random_smooth_model(levels: Sequence[float], seed: int = 0, amplitude: float = 0.3,
                        frequencies: Sequence[float] = (1.3, 0.7)) -> HamiltonianModel:
    """diag(levels) + sum_k sin(w_k t + phi_k) V_k with seeded Hermitian V_k of spectral norm `amplitude`."""
    rng = np.random.default_rng(seed)
    n = len(levels)
    h0 = np.diag(np.asarray(levels, dtype=complex))
    drives = [(w, rng.uniform(0.0, 2 * np.pi), random_hermitian(n, rng, amplitude)) for w in frequencies]

    def evaluate(t):
        h = h0.copy()
        for w, phase, v in drives:
            h = h + np.sin(w * t + phase) * v
        return h

    return HamiltonianModel(n, evaluate, "random_smooth")


def flagship_model(seed: int = 0) -> HamiltonianModel:
    """Six levels, the lowest two forming a band well separated from the rest."""
    model = random_smooth_model([0.0, 0.3, 2.0, 3.0, 4.0, 5.0], seed, amplitude=0.3, frequencies=(1.3,))
    return HamiltonianModel(model.n, model.evaluator, "flagship")


def commuting_model(levels: Sequence[float], modulation: float = 0.2) -> HamiltonianModel:
    """Diagonal H(t); the eigenbasis never moves."""
    base = np.asarray(levels, dtype=float)
    weights = np.linspace(1.0, 0.0, len(base))
    return HamiltonianModel(len(base), lambda t: np.diag(base + modulation * np.sin(t) * weights).astype(complex),
                            "commuting")


# -- propagation and tracking -----------------------------------------------------

def _step_exponential(h: np.ndarray, dt: float) -> np.ndarray:
    values, vectors = eigh(_hermitian(h))
    return (vectors * np.exp(-1j * values * dt)) @ vectors.conj().T


def propagate_U(model: HamiltonianModel, T: float, N: int) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoint exponential stepping U_{k+1} = exp(-i H(t_{k+1/2}) dt) U_k."""
    times = np.linspace(0.0, T, N + 1)
    dt = T / N
    U = np.empty((N + 1, model.n, model.n), dtype=complex)
    U[0] = np.eye(model.n)
    for k in range(N):
        U[k + 1] = _step_exponential(model(times[k] + 0.5 * dt), dt) @ U[k]
    return times, U


def _band_gap(values: np.ndarray, selected: Sequence[int]) -> float:
    chosen = values[list(selected)]
    others = np.delete(values, list(selected))
    if others.size == 0:
        return np.inf
    return float(np.min(np.abs(chosen[:, None] - others[None, :])))


def track_eigenprojector(model: HamiltonianModel, band: Sequence[int], times: Sequence[float],
                         gap_min: float = DEFAULT_GAP_MIN) -> Tuple[np.ndarray, np.ndarray]:
    """
    Frames and projectors of a spectral band followed by maximal overlap.

    `band` indexes eigenvalues in ascending order at the first time. Frames are
    polar-aligned to their predecessor.
    """
    band = sorted(int(b) for b in band)
    frames, projectors = [], []
    previous = None
    for t in times:
        values, vectors = eigh(_hermitian(model(t)))
        if previous is None:
            selected = band
        else:
            weights = np.sum(np.abs(previous.conj().T @ vectors) ** 2, axis=0)
            selected = sorted(np.argsort(-weights, kind="stable")[:len(band)].tolist())
        gap = _band_gap(values, selected)
        if gap < gap_min:
            raise GapClosure(f"band gap {gap:.3e} below {gap_min:.1e} at t={t:.6f}", t=float(t), gap=gap)
        frame = vectors[:, selected]
        if previous is not None:
            alignment, _ = polar(frame.conj().T @ previous)
            frame = frame @ alignment
        previous = frame
        frames.append(frame)
        projectors.append(frame @ frame.conj().T)
    return np.array(projectors), np.array(frames)


@dataclass(frozen=True, eq=False)
class DynamicsTrace:
    times: np.ndarray
    H: np.ndarray
    U: np.ndarray
    P: np.ndarray
    P0: np.ndarray
    frames: np.ndarray
    Omega: np.ndarray
    m: int
    pinched: bool = False

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def N(self) -> int:
        return len(self.times) - 1

    def projector(self, k: int) -> Projector:
        return Projector(self.P[k], self.m)

    def reference(self, k: int) -> Projector:
        return Projector(self.P0[k], self.m)


def generalized_wave_operator(trace: DynamicsTrace, margin: float = DEFAULT_LINK_MARGIN,
                              condition_bound: float = DEFAULT_CONDITION_BOUND, squared: bool = True) -> np.ndarray:
    """Omega(t) = P(t) (P0(t) P(t) P0(t))^-1 along the trace."""
    return _wave_operator_path(trace.times, trace.P, trace.frames, trace.m, margin, condition_bound, squared)


def _wave_operator_path(times, P, frames, m, margin, condition_bound, squared) -> np.ndarray:
    omegas = np.empty_like(P)
    for k, t in enumerate(times):
        target = Projector(P[k], m)
        source = projector_from_frame(frames[k])
        try:
            omegas[k] = elementary_wave_operator(target, source, margin, condition_bound, squared)
        except NotLinkable as exc:
            raise NotLinkable(f"almost-adiabatic condition fails at t={t:.6f}: {exc}", t=float(t),
                              distance=exc.distance) from exc
    return omegas


def simulate(model: HamiltonianModel, T: float, N: int, band: Sequence[int],
             gap_min: float = DEFAULT_GAP_MIN, pinched: bool = False, margin: float = DEFAULT_LINK_MARGIN,
             condition_bound: float = DEFAULT_CONDITION_BOUND, squared: bool = True) -> DynamicsTrace:
    """Propagate, track the band and build the wave-operator path. `pinched` freezes P0 at P0(0)."""
    times, U = propagate_U(model, T, N)
    H = np.array([model(t) for t in times])
    P0, frames = track_eigenprojector(model, band, times[:1] if pinched else times, gap_min)
    if pinched:
        P0 = np.repeat(P0, len(times), axis=0)
        frames = np.repeat(frames, len(times), axis=0)
    start = frames[0]
    P = np.array([u @ start @ start.conj().T @ u.conj().T for u in U])
    omega = _wave_operator_path(times, P, frames, len(band), margin, condition_bound, squared)
    logger.info(f"Simulated {model.name} (n={model.n}, m={len(band)}) over T={T} with N={N}")
    return DynamicsTrace(times, H, U, P, P0, frames, omega, len(band), pinched)


def fixed_reference_wave_operator(trace: DynamicsTrace) -> np.ndarray:
    """Omega(t) = U (P0 U P0)^-1 with P0 = P0(0)."""
    v = trace.frames[0]
    return np.array([u @ v @ np.linalg.inv(v.conj().T @ u @ v) @ v.conj().T for u in trace.U])


def _time_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.gradient(values, times, axis=0, edge_order=2)


def wave_operator_ode_residual(trace: DynamicsTrace, variant: str = "generalized",
                               omega: Optional[np.ndarray] = None) -> float:
    """
    max over interior points of ||i dOmega - [H, Omega] Omega - i Omega dOmega||.

    variant "fixed" drops the last term and uses U (P0 U P0)^-1.
    """
    if variant == "generalized":
        omega = trace.Omega if omega is None else omega
    elif variant == "fixed":
        omega = fixed_reference_wave_operator(trace) if omega is None else omega
    else:
        raise ValueError(f"unknown wave-operator variant {variant!r}")
    dt = trace.times[1] - trace.times[0]
    worst = 0.0
    for k in range(1, trace.N):
        d_omega = (omega[k + 1] - omega[k - 1]) / (2 * dt)
        h, o = trace.H[k], omega[k]
        residual = 1j * d_omega - (h @ o - o @ h) @ o
        if variant == "generalized":
            residual = residual - 1j * o @ d_omega
        worst = max(worst, float(np.linalg.norm(residual)))
    return worst


def pinched_comparison(model: HamiltonianModel, T: float, N: int, band: Sequence[int],
                       gap_min: float = DEFAULT_GAP_MIN) -> Dict[str, float]:
    """With P0 frozen the generalized wave operator coincides with U (P0 U P0)^-1."""
    trace = simulate(model, T, N, band, gap_min, pinched=True)
    fixed = fixed_reference_wave_operator(trace)
    return {
        "route_gap": max(frobenius_gap(a, b) for a, b in zip(trace.Omega, fixed)),
        "generalized_residual": wave_operator_ode_residual(trace, "generalized"),
        "fixed_residual": wave_operator_ode_residual(trace, "fixed"),
    }


# -- stationary Bloch wave operator --------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlochSolution:
    omega: np.ndarray
    projector: Projector
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    effective_hamiltonian: np.ndarray
    residual: float


def _candidate_subsets(vectors: np.ndarray, p0: Projector) -> List[Tuple[int, ...]]:
    n, m = vectors.shape[0], p0.rank
    if comb(n, m) <= MAX_SUBSETS:
        return list(combinations(range(n), m))
    weights = np.sum(np.abs(p0.frame.conj().T @ vectors) ** 2, axis=0)
    return [tuple(sorted(np.argsort(-weights, kind="stable")[:m].tolist()))]


def bloch_stationary(h: np.ndarray, p0: Projector, margin: float = DEFAULT_LINK_MARGIN,
                     squared: bool = True) -> BlochSolution:
    """
    Spectral subspace closest to Ran P0 and its wave operator Omega = P (P0 P P0)^-1.

    Equal distances go to the subspace with the larger eigenvalue sum.
    """
    h = _hermitian(np.asarray(h, dtype=complex))
    values, vectors = eigh(h)
    best, best_key = None, None
    for subset in _candidate_subsets(vectors, p0):
        candidate = projector_from_frame(vectors[:, list(subset)])
        distance = fs_distance(candidate, p0, squared)
        key = (round(distance / TIE_TOL), -float(np.sum(values[list(subset)])))
        if best_key is None or key < best_key:
            best, best_key = (subset, candidate, distance), key
    subset, p, distance = best
    if distance >= np.pi / 2 - margin:
        raise NoCompatibleSubspace(f"closest spectral subspace lies at Fubini-Study distance {distance:.6f}")
    omega = elementary_wave_operator(p, p0, margin, squared=squared)
    v = p0.frame
    h_eff = p0.matrix @ h @ omega
    reduced = v.conj().T @ h_eff @ v
    eff_values, eff_vectors = eig(reduced)
    order = np.argsort(eff_values.real)
    eff_values, eff_vectors = eff_values[order], eff_vectors[:, order]
    psi = omega @ v @ eff_vectors
    residual = float(np.linalg.norm((h @ omega - omega @ h) @ omega))
    logger.debug(f"Bloch wave operator: distance {distance:.4f}, residual {residual:.2e}")
    return BlochSolution(omega, p, eff_values, psi, h_eff, residual)


# -- geometric-phase generators ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseGenerators:
    E_eff: np.ndarray
    A: np.ndarray
    eta: np.ndarray
    Z0: np.ndarray
    eigenvalues: np.ndarray


def _normalize_columns(c: np.ndarray) -> np.ndarray:
    return c / np.linalg.norm(c, axis=0, keepdims=True)


def _effective_eigenframe(h_eff: np.ndarray, previous: Optional[np.ndarray], t: float, tol: float):
    values, vectors = eig(h_eff)
    vectors = _normalize_columns(vectors)
    if previous is None:
        order = np.argsort(values.real, kind="stable")
    else:
        overlap = np.abs(previous.conj().T @ vectors)
        _, order = linear_sum_assignment(-overlap)
    values, vectors = values[order], vectors[:, order]
    if previous is not None:
        phases = np.sum(previous.conj() * vectors, axis=0)
        vectors = vectors * np.exp(-1j * np.angle(phases))
    gaps = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(gaps, np.inf)
    if len(values) > 1 and np.min(gaps) < tol:
        raise EffectiveDegeneracy(f"effective eigenvalues collide ({np.min(gaps):.3e}) at t={t:.6f}", t=float(t))
    return values, vectors


def phase_generators(trace: DynamicsTrace, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> PhaseGenerators:
    """E_eff, A = Z0^+ dZ0 and eta = Z0^+ Omega^-1 dOmega Z0 on the trace grid."""
    eigenvalues, coefficients = [], []
    previous = None
    for k, t in enumerate(trace.times):
        v = trace.frames[k]
        h_eff = v.conj().T @ trace.P[k] @ trace.H[k] @ trace.Omega[k] @ v
        values, vectors = _effective_eigenframe(h_eff, previous, t, degeneracy_tol)
        previous = vectors
        eigenvalues.append(values)
        coefficients.append(vectors)
    eigenvalues = np.array(eigenvalues)
    z0 = np.einsum("tij,tjk->tik", trace.frames, np.array(coefficients))
    dz0 = _time_derivative(z0, trace.times)
    d_omega = _time_derivative(trace.Omega, trace.times)
    a, eta = [], []
    for k in range(len(trace.times)):
        z = z0[k]
        pinv = np.linalg.solve(z.conj().T @ z, z.conj().T)
        weak_inverse = trace.P0[k] @ trace.P[k]
        a.append(pinv @ dz0[k])
        eta.append(pinv @ weak_inverse @ d_omega[k] @ z)
    e_eff = np.array([np.diag(values) for values in eigenvalues])
    return PhaseGenerators(e_eff, np.array(a), np.array(eta), z0, eigenvalues)


def _half_step_table(values: np.ndarray, scale: float) -> np.ndarray:
    """Grid values extended to half steps by averaging, times the duration."""
    table = np.empty((2 * len(values) - 1,) + values.shape[1:], dtype=complex)
    table[0::2] = values
    table[1::2] = 0.5 * (values[:-1] + values[1:])
    return scale * table


def time_ordered_exponentials(trace: DynamicsTrace, generator: np.ndarray) -> np.ndarray:
    """M(t) with dM/dt = -G(t) M, M(0) = 1, by RK4 on the trace grid."""
    return ordered_exponentials(_half_step_table(generator, trace.T))


def reconstruct(trace: DynamicsTrace, generators: PhaseGenerators, a: int) -> np.ndarray:
    """psi(t) = sum_b [T exp(-i int E - int A - int eta)]_{ba} Omega(t) phi_0b(t)."""
    m = trace.m
    if not 0 <= a < m:
        raise ValueError(f"label {a} outside the band of size {m}")
    total = 1j * generators.E_eff + generators.A + generators.eta
    evolution = time_ordered_exponentials(trace, total)
    return np.array([trace.Omega[k] @ generators.Z0[k] @ evolution[k][:, a] for k in range(len(trace.times))])


def direct_state(trace: DynamicsTrace, generators: PhaseGenerators, a: int) -> np.ndarray:
    phi = generators.Z0[0][:, a]
    return np.array([u @ phi for u in trace.U])


def reconstruction_errors(trace: DynamicsTrace, generators: PhaseGenerators, a: int) -> np.ndarray:
    rebuilt = reconstruct(trace, generators, a)
    direct = direct_state(trace, generators, a)
    scale = np.linalg.norm(direct[0])
    return np.linalg.norm(rebuilt - direct, axis=1) / scale


def reconstruction_refinement(model: HamiltonianModel, T: float, levels: Sequence[int], band: Sequence[int],
                              a: int = 0, gap_min: float = DEFAULT_GAP_MIN) -> Dict:
    steps, errors = [], []
    for N in levels:
        trace = simulate(model, T, N, band, gap_min)
        errors.append(float(np.max(reconstruction_errors(trace, phase_generators(trace), a))))
        steps.append(T / N)
    order = fit_slope(steps, errors)
    return {"epsilons": steps, "residuals": errors, "order": order, "rows": refinement_rows(steps, errors, order)}


# -- cross checks ---------------------------------------------------------------------------

def berry_check(trace: DynamicsTrace, generators: PhaseGenerators) -> float:
    """For m = 1: overlap phases of consecutive effective states against the integral of A."""
    if trace.m != 1:
        raise ValueError("the Berry-connection check is defined for a single band")
    u = generators.Z0[:, :, 0]
    ratios = np.array([np.vdot(u[k], u[k + 1]) / np.vdot(u[k], u[k]) for k in range(trace.N)])
    discrete = 1j * np.sum(np.angle(ratios))
    a = generators.A[:, 0, 0]
    continuous = trapezoid(a, trace.times)
    return float(abs(discrete - continuous))


def trace_pseudosurface(trace: DynamicsTrace, samples: int = 256) -> PseudoSurface:
    """u -> (P(uT), P0(uT)) on every (N / samples)-th grid point."""
    if trace.N % samples:
        raise ValueError(f"trace grid N={trace.N} must be a multiple of the lift samples {samples}")
    stride = trace.N // samples
    return PseudoSurface(tuple(Skeleton((trace.projector(k), trace.reference(k)))
                               for k in range(0, trace.N + 1, stride)))


def holonomy_identification(trace: DynamicsTrace, generators: PhaseGenerators, chart: Optional[Chart] = None,
                            samples: int = 256, steps: int = 1024, module: Optional[CrossedModule] = None,
                            threads: int = 1) -> Dict:
    """
    Dynamics-side T exp(-int A - int eta) against the lift of u -> (P, P0).

    With Z0(t) = Z0^i(P0(t)) g(t), the dynamics side equals
    g(T)^-1 t(Hl^i) g(0), where t(Hl^i) is the target of the lifted arrow.
    """
    chart = chart or best_chart(trace.reference(0))
    module = module or CrossedModule(trace.m)
    connection = StiefelConnection(trace.P.shape[1], trace.m, module, eta_method="analytic")
    surface = trace_pseudosurface(trace, samples)
    lifted = lift_elementary(connection, surface, chart, steps, threads)
    dynamics = time_ordered_exponentials(trace, generators.A + generators.eta)[-1]
    index_rows = list(chart.index_set)
    g_start = generators.Z0[0][index_rows, :]
    g_end = generators.Z0[-1][index_rows, :]
    geometric = np.linalg.inv(g_end) @ lifted.arrow.target() @ g_start
    residual = frobenius_gap(dynamics, geometric)
    logger.info(f"Holonomy identification in chart {chart.label}: residual {residual:.2e}")
    return {
        "chart": chart.label,
        "residual": residual,
        "dynamics": dynamics,
        "geometry": geometric,
        "lift": lifted.to_dict(),
    }


def trace_rows(trace: DynamicsTrace, errors: Optional[np.ndarray] = None) -> List[Dict]:
    """Rows for the trace CSV."""
    rows = []
    eye = np.eye(trace.U.shape[1])
    for k, t in enumerate(trace.times):
        omega = trace.Omega[k]
        rows.append({
            "t": float(t),
            "unitarity": float(np.linalg.norm(trace.U[k].conj().T @ trace.U[k] - eye)),
            "fs_distance": fs_distance(trace.projector(k), trace.reference(k)),
            "idempotency": float(np.linalg.norm(omega @ omega - omega)),
            "reconstruction_error": float(errors[k]) if errors is not None else 0.0,
        })
    return rows
