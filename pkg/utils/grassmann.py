"""
Rank-m orthogonal projectors of C^n: Fubini-Study distance, linkability and the
standard coordinate charts U^I indexed by m-element row subsets I.

Chart coordinates of P in U^I are the rows outside I of the unique frame Z0 of
Ran P whose I-rows form the identity. Indices are zero-based.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import OutOfChart, RankDeficient

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_LINK_MARGIN = 1e-6
DEFAULT_RANK_TOL = 1e-10
DEFAULT_CHART_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Projector:
    """Hermitian idempotent of rank m."""

    matrix: np.ndarray
    rank: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def frame(self) -> np.ndarray:
        """Orthonormal n x m frame of the range."""
        _, vecs = np.linalg.eigh(self.matrix)
        z = vecs[:, -self.rank:]
        q, _ = np.linalg.qr(z)
        return q

    def residuals(self) -> dict:
        p = self.matrix
        return {
            "idempotency": float(np.linalg.norm(p @ p - p)),
            "hermiticity": float(np.linalg.norm(p - p.conj().T)),
            "trace": float(abs(np.trace(p).real - self.rank)),
        }

    def __repr__(self):
        return f"Projector(n={self.n}, rank={self.rank})"


def projector_from_frame(z, rank_tol: float = DEFAULT_RANK_TOL) -> Projector:
    """pi(Z) = Z (Z^dag Z)^-1 Z^dag, computed through a thin QR."""
    z = np.asarray(z, dtype=complex)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    singular = np.linalg.svd(z, compute_uv=False)
    if singular[-1] < rank_tol * max(singular[0], 1e-300):
        raise RankDeficient(
            f"frame of shape {z.shape} is rank deficient (sigma_min/sigma_max = {singular[-1] / singular[0]:.2e})"
        )
    q, _ = np.linalg.qr(z)
    p = q @ q.conj().T
    p = 0.5 * (p + p.conj().T)
    proj = Projector(p, z.shape[1])
    # the QR frame is already orthonormal, keep it
    proj.__dict__["frame"] = q
    return proj


def principal_sines(p1: Projector, p2: Projector) -> np.ndarray:
    z1, z2 = p1.frame, p2.frame
    return np.clip(np.linalg.svd(z2 - z1 @ (z1.conj().T @ z2), compute_uv=False), 0.0, 1.0)


def principal_angles(p1: Projector, p2: Projector) -> np.ndarray:
    cosines = np.clip(np.linalg.svd(p1.frame.conj().T @ p2.frame, compute_uv=False), 0.0, 1.0)
    return np.sort(np.arccos(cosines))


def fs_distance(p1: Projector, p2: Projector, squared: bool = True) -> float:
    """arccos |det Z1^dag Z2|^2 (or without the square)."""
    if p1.rank != p2.rank:
        raise ValueError(f"projector ranks differ: {p1.rank} vs {p2.rank}")
    power = 2 if squared else 1
    overlap = abs(np.linalg.det(p1.frame.conj().T @ p2.frame)) ** power
    if overlap > 0.5:
        # 1 - overlap from the principal sines, accurate near coincidence
        sines = principal_sines(p1, p2)
        defect = -np.expm1(0.5 * power * np.sum(np.log1p(-sines ** 2)))
        return float(2.0 * np.arcsin(np.sqrt(np.clip(defect, 0.0, 1.0) / 2.0)))
    return float(np.arccos(np.clip(overlap, 0.0, 1.0)))


def linkable(p1: Projector, p2: Projector, margin: float = DEFAULT_LINK_MARGIN, squared: bool = True) -> bool:
    return fs_distance(p1, p2, squared) < np.pi / 2 - margin


@dataclass(frozen=True)
class Chart:
    """Chart U^I of the Grassmannian Gr(m, n)."""

    index_set: Tuple[int, ...]
    n: int

    def __post_init__(self):
        index_set = tuple(sorted(int(i) for i in self.index_set))
        if len(set(index_set)) != len(index_set) or not index_set:
            raise ValueError(f"invalid chart index set {self.index_set}")
        if index_set[0] < 0 or index_set[-1] >= self.n:
            raise ValueError(f"chart index set {index_set} out of range for n={self.n}")
        object.__setattr__(self, "index_set", index_set)

    @property
    def m(self) -> int:
        return len(self.index_set)

    @property
    def complement(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in self.index_set)

    @property
    def coord_shape(self) -> Tuple[int, int]:
        return (self.n - self.m, self.m)

    @property
    def coord_dim(self) -> int:
        """Real dimension of the chart."""
        return 2 * (self.n - self.m) * self.m

    @property
    def label(self) -> str:
        return "{" + ",".join(str(i) for i in self.index_set) + "}"

    def reference_projector(self) -> Projector:
        z = np.zeros((self.n, self.m), dtype=complex)
        for col, row in enumerate(self.index_set):
            z[row, col] = 1.0
        return projector_from_frame(z)


def all_charts(n: int, m: int) -> List[Chart]:
    return [Chart(idx, n) for idx in combinations(range(n), m)]


def chart_margin(chart: Chart, p: Projector) -> float:
    """Smallest singular value of the I-block of an orthonormal frame (cosine-like, in [0, 1])."""
    block = p.frame[list(chart.index_set), :]
    return float(np.linalg.svd(block, compute_uv=False)[-1])


def coordinate_matrix(chart: Chart, p: Projector, tol: float = DEFAULT_CHART_TOL) -> np.ndarray:
    """The frame Z0 of Ran P with identity rows on the chart's index set."""
    if chart.n != p.n or chart.m != p.rank:
        raise OutOfChart(f"chart {chart.label} of Gr({chart.m},{chart.n}) does not fit {p!r}", chart)
    z = p.frame
    block = z[list(chart.index_set), :]
    if np.linalg.svd(block, compute_uv=False)[-1] < tol:
        raise OutOfChart(f"projector not covered by chart {chart.label}", chart)
    z0 = z @ np.linalg.inv(block)
    z0[list(chart.index_set), :] = np.eye(chart.m)
    return z0


def charts_for(p: Projector, charts: Sequence[Chart], min_margin: float = 0.0) -> List[Chart]:
    """Charts of `charts` covering p (with block margin above `min_margin`)."""
    found = []
    for chart in charts:
        margin = chart_margin(chart, p)
        if margin > max(min_margin, DEFAULT_CHART_TOL):
            found.append(chart)
    return found


def best_chart(p: Projector, charts: Optional[Sequence[Chart]] = None) -> Chart:
    charts = charts if charts is not None else all_charts(p.n, p.rank)
    return max(charts, key=lambda c: chart_margin(c, p))


def coordinates(chart: Chart, p: Projector) -> np.ndarray:
    """Complex chart coordinates xi, shape (n - m, m)."""
    return coordinate_matrix(chart, p)[list(chart.complement), :]


def frame_from_coordinates(chart: Chart, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=complex).reshape(chart.coord_shape)
    z0 = np.zeros((chart.n, chart.m), dtype=complex)
    z0[list(chart.index_set), :] = np.eye(chart.m)
    z0[list(chart.complement), :] = xi
    return z0


def embed_displacement(chart: Chart, dxi) -> np.ndarray:
    """dZ0 for a coordinate displacement: dxi on the complement rows, zero on I."""
    dxi = np.asarray(dxi, dtype=complex).reshape(chart.coord_shape)
    dz = np.zeros((chart.n, chart.m), dtype=complex)
    dz[list(chart.complement), :] = dxi
    return dz


def projector_from_coordinates(chart: Chart, xi) -> Projector:
    return projector_from_frame(frame_from_coordinates(chart, xi))


def realify(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=complex)
    return np.concatenate([xi.real.ravel(), xi.imag.ravel()])


def complexify(vector, shape: Tuple[int, int]) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    half = vector.size // 2
    return (vector[:half] + 1j * vector[half:]).reshape(shape)


def real_coordinates(chart: Chart, p: Projector) -> np.ndarray:
    return realify(coordinates(chart, p))


def projector_from_real(chart: Chart, vector) -> Projector:
    return projector_from_coordinates(chart, complexify(vector, chart.coord_shape))


def random_frame(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def random_projector(n: int, m: int, seed=None) -> Projector:
    """Orthonormalized Gaussian frame, reproducible for a fixed seed."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    return projector_from_frame(random_frame(n, m, rng))


def random_projector_near(p: Projector, radius: float, seed=None) -> Projector:
    """A projector at Fubini-Study distance strictly below `radius` from p."""
    rng = np.random.default_rng(seed)
    z = p.frame
    x = random_frame(p.n, p.rank, rng)
    tangent = x - z @ (z.conj().T @ x)
    norm = np.linalg.norm(tangent)
    if norm == 0.0:
        return p
    scale = rng.uniform(0.1, 1.0) * 0.5 * radius / norm
    for _ in range(60):
        q = projector_from_frame(z + scale * tangent)
        if fs_distance(p, q) < radius:
            return q
        scale *= 0.5
    return p
