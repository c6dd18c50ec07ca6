"""
Matrix-valued differential forms on real coordinate patches, as evaluators.

A p-form is a callable (point, v_1, ..., v_p) -> matrix, multilinear and
alternating in the vectors. Exterior derivatives use central differences along
constant vector fields.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class Form:
    degree: int
    evaluate: Callable

    def __call__(self, point, *vectors) -> np.ndarray:
        if len(vectors) != self.degree:
            raise ValueError(f"{self.degree}-form evaluated on {len(vectors)} vectors")
        return self.evaluate(np.asarray(point, dtype=float), *[np.asarray(v, dtype=float) for v in vectors])

    def __add__(self, other: "Form") -> "Form":
        _same_degree(self, other)
        return Form(self.degree, lambda x, *v: self.evaluate(x, *v) + other.evaluate(x, *v))

    def __sub__(self, other: "Form") -> "Form":
        _same_degree(self, other)
        return Form(self.degree, lambda x, *v: self.evaluate(x, *v) - other.evaluate(x, *v))

    def __neg__(self) -> "Form":
        return Form(self.degree, lambda x, *v: -self.evaluate(x, *v))

    def scaled(self, c) -> "Form":
        return Form(self.degree, lambda x, *v: c * self.evaluate(x, *v))

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Form":
        """Apply a linear map to the values."""
        return Form(self.degree, lambda x, *v: fn(self.evaluate(x, *v)))

    def pullback(self, phi: Callable, dphi: Callable, dim: int) -> "Form":
        """Pull back along phi: R^dim -> patch with Jacobian-vector product dphi(s, w)."""
        return Form(self.degree, lambda s, *w: self.evaluate(phi(s), *[dphi(s, wk) for wk in w]))


def _same_degree(a: Form, b: Form):
    if a.degree != b.degree:
        raise ValueError(f"cannot add forms of degree {a.degree} and {b.degree}")


def constant_form(degree: int, fn: Callable) -> Form:
    """A form that ignores the base point: fn(*vectors)."""
    return Form(degree, lambda x, *v: fn(*v))


def _permutation_sign(order: Sequence[int]) -> int:
    sign = 1
    order = list(order)
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            if order[a] > order[b]:
                sign = -sign
    return sign


def wedge(a: Form, b: Form) -> Form:
    """Ordered wedge product; values multiply as matrices in the order a then b."""
    p, q = a.degree, b.degree

    def evaluate(x, *v):
        total = None
        for first in combinations(range(p + q), p):
            rest = tuple(k for k in range(p + q) if k not in first)
            term = _permutation_sign(first + rest) * (
                a.evaluate(x, *[v[k] for k in first]) @ b.evaluate(x, *[v[k] for k in rest])
            )
            total = term if total is None else total + term
        return total

    return Form(p + q, evaluate)


def graded_commutator(a: Form, b: Form) -> Form:
    """[a, b] = a^b - (-1)^(pq) b^a."""
    sign = (-1) ** (a.degree * b.degree)
    return wedge(a, b) - wedge(b, a).scaled(sign)


def directional_derivative(fn: Callable, x, v, step: float = DEFAULT_FD_STEP):
    """Central difference of fn at x along v, with a step relative to |x|."""
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0 * fn(x)
    h = step * max(1.0, float(np.linalg.norm(x))) / norm
    return (fn(x + h * v) - fn(x - h * v)) / (2.0 * h)


def exterior_derivative(omega: Form, step: float = DEFAULT_FD_STEP) -> Form:
    """(d omega)(v_0..v_p) = sum_k (-1)^k D_{v_k} omega(..., v_k omitted, ...)."""
    p = omega.degree

    def evaluate(x, *v):
        total = None
        for k in range(p + 1):
            others = v[:k] + v[k + 1:]
            term = directional_derivative(lambda y: omega.evaluate(y, *others), x, v[k], step)
            term = term if k % 2 == 0 else -term
            total = term if total is None else total + term
        return total

    return Form(p + 1, evaluate)


def curvature(omega: Form, step: float = DEFAULT_FD_STEP) -> Form:
    """d omega + omega ^ omega for a 1-form."""
    if omega.degree != 1:
        raise ValueError("curvature needs a 1-form")
    return exterior_derivative(omega, step) + wedge(omega, omega)


def coordinate_basis(dim: int):
    return [np.eye(dim)[k] for k in range(dim)]
