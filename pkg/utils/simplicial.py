"""
Discrete Cech calculus on triangulated two-parameter patches.

Forms live on the parameter plane (pull them back first). Triangles are regular
right-triangle subdivisions of a rectangle, positively oriented.
"""
import logging
from dataclasses import dataclass, field
from itertools import permutations
from math import factorial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.common import parallel_map
from utils.crossed_module import mat_exp, mat_log
from utils.errors import BranchFailure
from utils.forms import DEFAULT_FD_STEP, Form, curvature
from utils.report_tools import fit_slope, refinement_rows

# Configure logging
logger = logging.getLogger(__name__)

BCH_WARN_NORM = 0.5
DEFAULT_SAMPLE_POINTS = ((0.31, 0.42), (0.63, 0.27), (0.47, 0.74))
DEFAULT_CELLS = (0.1, 0.05, 0.025, 0.0125)
MAX_SPLIT_DEPTH = 3

_nodes, _weights = np.polynomial.legendre.leggauss(3)
EDGE_NODES = 0.5 * (_nodes + 1.0)
EDGE_WEIGHTS = 0.5 * _weights

# reference triangle {s, t >= 0, s + t <= 1}; weights sum to its area 1/2
_A1, _B1 = 0.0597158717, 0.4701420641
_A2, _B2 = 0.7974269853, 0.1012865073
TRIANGLE_RULES = {
    "barycentric3": (
        np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
        np.array([1 / 6, 1 / 6, 1 / 6]),
    ),
    "dunavant7": (
        np.array([
            [1 / 3, 1 / 3],
            [_B1, _B1], [_A1, _B1], [_B1, _A1],
            [_B2, _B2], [_A2, _B2], [_B2, _A2],
        ]),
        0.5 * np.array([0.225] + [0.1323941527] * 3 + [0.1259391805] * 3),
    ),
}


def de_rham(omega: Form, simplex: Sequence, rule: str = "barycentric3"):
    """Integral of a p-form (p <= 2) over the oriented parameter simplex."""
    points = [np.asarray(v, dtype=float) for v in simplex]
    if omega.degree != len(points) - 1:
        raise ValueError(f"{omega.degree}-form integrated over a {len(points) - 1}-simplex")
    if omega.degree == 0:
        return omega(points[0])
    if omega.degree == 1:
        a, b = points
        return sum(w * omega(a + t * (b - a), b - a) for t, w in zip(EDGE_NODES, EDGE_WEIGHTS))
    if omega.degree == 2:
        a, b, c = points
        nodes, weights = TRIANGLE_RULES[rule]
        e1, e2 = b - a, c - a
        return sum(w * omega(a + s * e1 + t * e2, e1, e2) for (s, t), w in zip(nodes, weights))
    raise ValueError("de Rham map implemented for degrees 0, 1 and 2")


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Right-triangle subdivision of a rectangle with square cells of side `cell`."""

    vertices: np.ndarray
    triangles: Tuple[Tuple[int, int, int], ...]
    cell: float
    shape: Tuple[int, int]
    origin: Tuple[float, float] = (0.0, 0.0)

    @classmethod
    def rectangle(cls, cell: float, bounds=((0.0, 1.0), (0.0, 1.0))) -> "Triangulation":
        (s0, s1), (u0, u1) = bounds
        nx = max(1, int(round((s1 - s0) / cell)))
        ny = max(1, int(round((u1 - u0) / cell)))
        hx, hy = (s1 - s0) / nx, (u1 - u0) / ny
        xs = s0 + hx * np.arange(nx + 1)
        ys = u0 + hy * np.arange(ny + 1)
        vertices = np.array([[x, y] for y in ys for x in xs])

        def vid(a, b):
            return b * (nx + 1) + a

        triangles = []
        for b in range(ny):
            for a in range(nx):
                triangles.append((vid(a, b), vid(a + 1, b), vid(a, b + 1)))
                triangles.append((vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1)))
        return cls(vertices, tuple(triangles), max(hx, hy), (nx, ny), (s0, u0))

    @property
    def epsilon(self) -> float:
        """Longest edge (the hypotenuse)."""
        return float(np.sqrt(2.0) * self.cell)

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        found = set()
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
                found.add((min(a, b), max(a, b)))
        return tuple(sorted(found))

    def simplices(self, degree: int) -> Tuple[Tuple[int, ...], ...]:
        if degree == 0:
            return tuple((k,) for k in range(len(self.vertices)))
        if degree == 1:
            return self.edges
        if degree == 2:
            return tuple(tuple(sorted(t)) for t in self.triangles)
        return ()

    def points(self, simplex: Sequence[int]) -> List[np.ndarray]:
        return [self.vertices[k] for k in simplex]

    def triangles_at(self, points: Sequence[Sequence[float]]) -> Tuple[Tuple[int, int, int], ...]:
        """The lower-left triangle of the cell holding each sample point."""
        nx, ny = self.shape
        found = []
        for px, py in points:
            a = min(max(int(np.floor((px - self.origin[0]) / self.cell)), 0), nx - 1)
            b = min(max(int(np.floor((py - self.origin[1]) / self.cell)), 0), ny - 1)
            found.append(self.triangles[2 * (b * nx + a)])
        return tuple(found)


def _sort_sign(simplex: Sequence[int]) -> Tuple[Tuple[int, ...], int]:
    order = sorted(range(len(simplex)), key=lambda k: simplex[k])
    sign = 1
    seen = list(order)
    for a in range(len(seen)):
        for b in range(a + 1, len(seen)):
            if seen[a] > seen[b]:
                sign = -sign
    return tuple(simplex[k] for k in order), sign


@dataclass
class Cochain:
    """Antisymmetric function on oriented simplices, stored on sorted vertex tuples."""

    degree: int
    values: Dict[Tuple[int, ...], np.ndarray]
    triangulation: Optional[Triangulation] = field(default=None, repr=False)

    def __call__(self, *simplex: int):
        if len(simplex) != self.degree + 1:
            raise ValueError(f"{self.degree}-cochain evaluated on {len(simplex)} vertices")
        if len(set(simplex)) < len(simplex):
            return 0.0 * next(iter(self.values.values()))
        key, sign = _sort_sign(simplex)
        value = self.values[key]
        return value if sign > 0 else -value

    @classmethod
    def from_function(cls, degree: int, fn: Callable, triangulation: Triangulation) -> "Cochain":
        values = {s: np.asarray(fn(*s)) for s in triangulation.simplices(degree)}
        return cls(degree, values, triangulation)

    @classmethod
    def from_form(cls, omega: Form, triangulation: Triangulation, rule: str = "barycentric3") -> "Cochain":
        """The de Rham image R(omega)."""
        return cls.from_function(
            omega.degree, lambda *s: de_rham(omega, triangulation.points(s), rule), triangulation)


def cobord(omega: Cochain) -> Cochain:
    """(delta omega)_{u0..u(p+1)} = sum_j (-1)^j omega(..., u_j omitted, ...)."""
    tri = omega.triangulation
    if tri is None:
        raise ValueError("cobord needs a cochain attached to a triangulation")

    def value(*simplex):
        total = 0.0
        for j in range(len(simplex)):
            face = simplex[:j] + simplex[j + 1:]
            total = total + (omega(*face) if j % 2 == 0 else -omega(*face))
        return total

    return Cochain.from_function(omega.degree + 1, value, tri)


def commutator(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim == 0 or b.ndim == 0:
        return 0.0 * a * b
    return a @ b - b @ a


def cup(omega: Cochain, eta: Cochain, bracket: Callable = commutator, normalization: str = "limit") -> Cochain:
    """
    Bracket cup product on shared-vertex splits.

    normalization "limit" divides by (p+q+1)!, which makes the de Rham images
    converge to the bracket wedge; "printed" divides by (p+1)!(q+1)!.
    """
    p, q = omega.degree, eta.degree
    if p + q > 2:
        raise ValueError("cup product implemented up to total degree 2")
    if normalization == "limit":
        scale = 1.0 / factorial(p + q + 1)
    elif normalization == "printed":
        scale = 1.0 / (factorial(p + 1) * factorial(q + 1))
    else:
        raise ValueError(f"unknown cup normalization {normalization!r}")

    def value(*simplex):
        total = 0.0
        for order in permutations(range(p + q + 1)):
            _, sign = _sort_sign(order)
            verts = [simplex[k] for k in order]
            total = total + sign * bracket(omega(*verts[:p + 1]), eta(*verts[p:]))
        return scale * total

    return Cochain.from_function(p + q, value, omega.triangulation or eta.triangulation)


def bch2(a, b):
    """Second-order Baker-Campbell-Hausdorff: a + b + [a, b] / 2."""
    a, b = np.asarray(a), np.asarray(b)
    if max(np.linalg.norm(a), np.linalg.norm(b)) > BCH_WARN_NORM:
        logger.warning(f"bch2 arguments of norm {max(np.linalg.norm(a), np.linalg.norm(b)):.3f} "
                       f"exceed {BCH_WARN_NORM}, truncation error is not small")
    return a + b + 0.5 * commutator(a, b)


def _split(triangle: Sequence[np.ndarray]) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    a, b, c = triangle
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    return [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]


def _with_auto_split(residual: Callable, triangle, depth: int = 0) -> float:
    try:
        return residual(triangle)
    except BranchFailure:
        if depth >= MAX_SPLIT_DEPTH:
            raise
        logger.warning(f"holonomy logarithm hit the branch cut, splitting triangle (depth {depth + 1})")
        return max(_with_auto_split(residual, piece, depth + 1) for piece in _split(triangle))


def cartan_triangle_residual(alpha: Form, beta: Form, triangle) -> float:
    """||log(e^{R12} e^{-R02} e^{R01}) - R(beta)_{012}||."""
    a, b, c = (np.asarray(v, dtype=float) for v in triangle)
    holonomy = mat_exp(de_rham(alpha, (b, c))) @ mat_exp(-de_rham(alpha, (a, c))) @ mat_exp(de_rham(alpha, (a, b)))
    return float(np.linalg.norm(mat_log(holonomy) - de_rham(beta, (a, b, c))))


def _level_triangles(tri: Triangulation, sample_points) -> Tuple[Tuple[int, int, int], ...]:
    return tri.triangles_at(sample_points) if sample_points is not None else tri.triangles


def _refinement(residual: Callable, cells: Sequence[float], bounds, sample_points, threads: int, label: str) -> Dict:
    if len(cells) < 3:
        raise ValueError("a convergence slope needs at least three refinement levels")
    epsilons, residuals = [], []
    for cell in cells:
        tri = Triangulation.rectangle(cell, bounds)
        triangles = [tri.points(t) for t in _level_triangles(tri, sample_points)]
        values = parallel_map(lambda t: _with_auto_split(residual, t), triangles, threads)
        epsilons.append(tri.epsilon)
        residuals.append(max(sorted(values)) if values else 0.0)
    order = fit_slope(epsilons, residuals) if max(residuals) > 0.0 else float("nan")
    logger.info(f"{label}: residuals {', '.join(f'{r:.2e}' for r in residuals)}, fitted order {order:.2f}")
    return {
        "epsilons": epsilons,
        "residuals": residuals,
        "order": order,
        "rows": refinement_rows(epsilons, residuals, order),
    }


def seeded_one_form(m: int, seed: int = 0, scale: float = 0.5) -> Form:
    """gl(m)-valued 1-form on the plane with affine, mutually non-commuting components."""
    rng = np.random.default_rng(seed)
    coefficients = [
        [scale * (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2 * m)
         for _ in range(3)]
        for _ in range(2)
    ]

    def evaluate(x, v):
        return sum(v[k] * (c0 + x[0] * c1 + x[1] * c2) for k, (c0, c1, c2) in enumerate(coefficients))

    return Form(1, evaluate)


def zero_one_form(m: int) -> Form:
    return Form(1, lambda x, v: np.zeros((m, m), dtype=complex))


def discrete_cartan_residual(alpha: Form, cells: Sequence[float] = DEFAULT_CELLS,
                             bounds=((0.0, 1.0), (0.0, 1.0)), sample_points=DEFAULT_SAMPLE_POINTS,
                             step: float = DEFAULT_FD_STEP, threads: int = 1) -> Dict:
    """Per-level max residual of the discrete Cartan structure equation and its fitted order."""
    beta = curvature(alpha, step)
    return _refinement(lambda t: cartan_triangle_residual(alpha, beta, t), cells, bounds, sample_points, threads,
                       "Discrete Cartan")


def curve_derivative(curve: Callable, s: float, h: float = 1e-6) -> np.ndarray:
    return (np.asarray(curve(s + h)) - np.asarray(curve(s - h))) / (2 * h)


def product_patch(y_curve: Callable, x_curve: Callable):
    """Phi(s, u) = (y(s), x(u)) and its Jacobian-vector product."""
    def phi(point):
        return np.concatenate([np.asarray(y_curve(point[0]), dtype=float), np.asarray(x_curve(point[1]), dtype=float)])

    def dphi(point, w):
        return np.concatenate([curve_derivative(y_curve, point[0]) * w[0], curve_derivative(x_curve, point[1]) * w[1]])

    return phi, dphi


def curving_triangle_residual(eta: Form, a: Form, eta_bar: Form, b_ns: Form, triangle) -> float:
    """
    Triangle (s0,u0), (s1,u1), (s0,u1) of the product patch.

    eta on the source edge u0 -> u2 is taken in the interaction frame of A, transported
    to the edge midpoint by half the A holonomy, so that e^{-eta'} e^{-A} agrees with
    the joint edge exponential of eta_bar up to third order.
    """
    p0, p1, p2 = (np.asarray(v, dtype=float) for v in triangle)
    a02 = de_rham(a, (p0, p2))
    half = mat_exp(-0.5 * a02)
    eta02 = half @ de_rham(eta, (p0, p2)) @ np.linalg.inv(half)
    holonomy = (
        mat_exp(de_rham(eta, (p1, p2)))
        @ mat_exp(-eta02)
        @ mat_exp(-a02)
        @ mat_exp(de_rham(eta_bar, (p0, p1)))
    )
    return float(np.linalg.norm(mat_log(holonomy) - de_rham(b_ns, (p0, p1, p2))))


def curving_product_check(connection, chart, y_curve: Callable, x_curve: Callable,
                          cells: Sequence[float] = DEFAULT_CELLS, sample_points=DEFAULT_SAMPLE_POINTS,
                          threads: int = 1) -> Dict:
    """
    Product formula of the nonspherical curving on the patch (s, u) -> (y(s), x(u)).

    Curves return real chart coordinates. Values are compared in the faithful
    representation of the crossed module.
    """
    cm = connection.module
    phi, dphi = product_patch(y_curve, x_curve)
    eta = connection.eta_rep_form(chart).pullback(phi, dphi, 2)
    a = connection.a_rep_form(chart).pullback(phi, dphi, 2)
    eta_bar = connection.eta_bar_form(chart).pullback(phi, dphi, 2)
    b_ns = connection.curving_ns_form(chart).mapped(lambda y: cm.rep_lie(y, cm.g_zero())).pullback(phi, dphi, 2)

    def residual(triangle):
        # (s0,u0), (s1,u1), (s0,u1) from the lower-left cell triangle (s0,u0), (s1,u0), (s0,u1)
        p0, p1, p2 = triangle
        return curving_triangle_residual(eta, a, eta_bar, b_ns, (p0, np.array([p1[0], p2[1]]), p2))

    return _refinement(residual, cells, ((0.0, 1.0), (0.0, 1.0)), sample_points, threads, "Curving product")
