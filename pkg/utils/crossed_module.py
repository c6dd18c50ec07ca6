"""
Lie crossed modules (G, H, t, alpha) realized with complex matrices.

Two built-in kinds are provided:

* ``GL_ADJ``: G = H = GL(m, C), t is the identity and alpha is conjugation.
* ``CENTRAL``: H = C* embedded in G = GL(m, C) as scalar matrices, alpha trivial.

H elements and h-algebra elements are always stored as 2-d arrays; the CENTRAL
kind uses 1x1 arrays, so that products and brackets go through ``@`` in both
cases.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np
from scipy.linalg import block_diag, expm, logm

from utils.common import frobenius_gap, max_or_zero, parallel_map, sample_rng
from utils.errors import BranchFailure, CompositionMismatch, NotInImage

# Configure logging
logger = logging.getLogger(__name__)


class ModuleKind(str, Enum):
    GL_ADJ = "GL_ADJ"
    CENTRAL = "CENTRAL"


def _commutator(a, b):
    return a @ b - b @ a


@dataclass(frozen=True)
class CrossedModule:
    """Structure crossed module of the 2-bundle."""

    m: int
    kind: ModuleKind = ModuleKind.GL_ADJ
    endpoint_tolerance: float = 1e-8

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"matrix dimension must be positive, got {self.m}")
        object.__setattr__(self, "kind", ModuleKind(self.kind))

    # -- shapes and identities -------------------------------------------------
    @property
    def h_dim(self) -> int:
        return self.m if self.kind == ModuleKind.GL_ADJ else 1

    @property
    def rep_dim(self) -> int:
        return self.m + self.h_dim

    @property
    def is_abelian(self) -> bool:
        return self.kind == ModuleKind.CENTRAL or self.m == 1

    def h_identity(self) -> np.ndarray:
        return np.eye(self.h_dim, dtype=complex)

    def g_identity(self) -> np.ndarray:
        return np.eye(self.m, dtype=complex)

    def h_zero(self) -> np.ndarray:
        return np.zeros((self.h_dim, self.h_dim), dtype=complex)

    def g_zero(self) -> np.ndarray:
        return np.zeros((self.m, self.m), dtype=complex)

    def as_h(self, value) -> np.ndarray:
        """Coerce a scalar or matrix into the storage shape of H / h."""
        arr = np.asarray(value, dtype=complex)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.shape != (self.h_dim, self.h_dim):
            raise ValueError(f"H element of shape {arr.shape}, expected {(self.h_dim, self.h_dim)}")
        return arr

    def as_g(self, value) -> np.ndarray:
        arr = np.asarray(value, dtype=complex)
        if arr.ndim == 0:
            arr = arr * np.eye(self.m, dtype=complex)
        if arr.shape != (self.m, self.m):
            raise ValueError(f"G element of shape {arr.shape}, expected {(self.m, self.m)}")
        return arr

    # -- group level -------------------------------------------------------------
    def t(self, h: np.ndarray) -> np.ndarray:
        if self.kind == ModuleKind.GL_ADJ:
            return np.array(h, dtype=complex)
        return h[0, 0] * np.eye(self.m, dtype=complex)

    def alpha(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        if self.kind == ModuleKind.GL_ADJ:
            return g @ h @ np.linalg.inv(g)
        return np.array(h, dtype=complex)

    def t_preimage(self, g: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Unique h with t(h) = g, or NotInImage."""
        if self.kind == ModuleKind.GL_ADJ:
            return np.array(g, dtype=complex)
        c = np.trace(g) / self.m
        if frobenius_gap(g, c * np.eye(self.m)) > tol:
            raise NotInImage("group element is not a scalar matrix, no preimage in C*")
        return np.array([[c]], dtype=complex)

    # -- algebra level -----------------------------------------------------------
    def t_lie(self, y: np.ndarray) -> np.ndarray:
        if self.kind == ModuleKind.GL_ADJ:
            return np.array(y, dtype=complex)
        return y[0, 0] * np.eye(self.m, dtype=complex)

    def alpha_lie(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == ModuleKind.GL_ADJ:
            return _commutator(x, y)
        return np.zeros_like(y, dtype=complex)

    def h_bracket(self, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return _commutator(y1, y2)

    def t_lie_preimage(self, x: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        """The h-element mapped to x by t^Lie; NotInImage when x leaves t^Lie(h)."""
        if self.kind == ModuleKind.GL_ADJ:
            return np.array(x, dtype=complex)
        c = np.trace(x) / self.m
        gap = np.linalg.norm(x - c * np.eye(self.m))
        if gap > tol * max(1.0, np.linalg.norm(x)):
            raise NotInImage(f"algebra element leaves t^Lie(h) by {gap:.3e}")
        return np.array([[c]], dtype=complex)

    def h_lie_from_matrix(self, y: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        """Read an m x m matrix as an h-element (identity for GL_ADJ, scalar part for CENTRAL)."""
        if self.kind == ModuleKind.GL_ADJ:
            return np.array(y, dtype=complex)
        if y.shape == (1, 1):
            return np.array(y, dtype=complex)
        return self.t_lie_preimage(y, tol)

    # -- faithful representation of H x| G and of the semidirect sum ------------
    def rep(self, h: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.kind == ModuleKind.GL_ADJ:
            return block_diag(h @ g, g).astype(complex)
        return block_diag(h, g).astype(complex)

    def rep_lie(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        if self.kind == ModuleKind.GL_ADJ:
            return block_diag(y + x, x).astype(complex)
        return block_diag(y, x).astype(complex)

    def unrep(self, matrix: np.ndarray):
        """Inverse of `rep` on its image, returns (h, g)."""
        k = self.h_dim
        top = matrix[:k, :k]
        g = matrix[k:, k:]
        if self.kind == ModuleKind.GL_ADJ:
            return top @ np.linalg.inv(g), np.array(g)
        return np.array(top), np.array(g)

    def unrep_lie(self, matrix: np.ndarray):
        k = self.h_dim
        top = matrix[:k, :k]
        x = matrix[k:, k:]
        if self.kind == ModuleKind.GL_ADJ:
            return top - x, np.array(x)
        return np.array(top), np.array(x)

    # -- sampling ------------------------------------------------------------------
    def random_x(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        z = rng.standard_normal((self.m, self.m)) + 1j * rng.standard_normal((self.m, self.m))
        return scale * z / np.sqrt(2 * self.m)

    def random_y(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        k = self.h_dim
        z = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
        return scale * z / np.sqrt(2 * k)

    def random_g(self, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
        return expm(self.random_x(rng, scale))

    def random_h(self, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
        return expm(self.random_y(rng, scale))


@dataclass(frozen=True, eq=False)
class Arrow2:
    """A groupoid arrow (h, g) from g to t(h) g."""

    h: np.ndarray
    g: np.ndarray
    module: CrossedModule

    @classmethod
    def identity(cls, module: CrossedModule, g: Optional[np.ndarray] = None) -> "Arrow2":
        g = module.g_identity() if g is None else module.as_g(g)
        return cls(module.h_identity(), g, module)

    @classmethod
    def from_rep(cls, module: CrossedModule, matrix: np.ndarray) -> "Arrow2":
        h, g = module.unrep(matrix)
        return cls(h, g, module)

    def source(self) -> np.ndarray:
        return self.g

    def target(self) -> np.ndarray:
        return self.module.t(self.h) @ self.g

    def rep(self) -> np.ndarray:
        return self.module.rep(self.h, self.g)

    def to_dict(self) -> Dict:
        from utils.report_tools import encode_matrix
        return {"h": encode_matrix(self.h), "g": encode_matrix(self.g)}


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """Element (Y, X) of the semidirect sum h x| g."""

    y: np.ndarray
    x: np.ndarray
    module: CrossedModule

    @classmethod
    def zero(cls, module: CrossedModule) -> "AlgebraElement":
        return cls(module.h_zero(), module.g_zero(), module)

    def rep(self) -> np.ndarray:
        return self.module.rep_lie(self.y, self.x)

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(self.y + other.y, self.x + other.x, self.module)

    def scaled(self, c) -> "AlgebraElement":
        return AlgebraElement(c * self.y, c * self.x, self.module)

    def norm(self) -> float:
        return float(np.sqrt(np.linalg.norm(self.y) ** 2 + np.linalg.norm(self.x) ** 2))


def _same_module(a, b):
    if a.module.m != b.module.m or a.module.kind != b.module.kind:
        raise ValueError(
            f"crossed modules differ: {a.module.kind.value}/{a.module.m} vs {b.module.kind.value}/{b.module.m}"
        )


def horizontal_compose(a: Arrow2, b: Arrow2) -> Arrow2:
    """(h, g)·(h', g') = (h alpha_g(h'), g g')."""
    _same_module(a, b)
    cm = a.module
    return Arrow2(a.h @ cm.alpha(a.g, b.h), a.g @ b.g, cm)


def vertical_compose(a2: Arrow2, a1: Arrow2, rtol: Optional[float] = None) -> Arrow2:
    """(h2, t(h1) g1) o (h1, g1) = (h2 h1, g1)."""
    _same_module(a2, a1)
    cm = a1.module
    rtol = cm.endpoint_tolerance if rtol is None else rtol
    gap = frobenius_gap(a2.source(), a1.target())
    if gap > rtol:
        raise CompositionMismatch(
            f"source of upper arrow differs from target of lower arrow by {gap:.3e}", residual=gap
        )
    return Arrow2(a2.h @ a1.h, a1.g, cm)


def horizontal_inverse(a: Arrow2) -> Arrow2:
    cm = a.module
    g_inv = np.linalg.inv(a.g)
    return Arrow2(cm.alpha(g_inv, np.linalg.inv(a.h)), g_inv, cm)


def vertical_inverse(a: Arrow2) -> Arrow2:
    return Arrow2(np.linalg.inv(a.h), a.target(), a.module)


def arrow_gap(a: Arrow2, b: Arrow2) -> float:
    return max(frobenius_gap(a.h, b.h), frobenius_gap(a.g, b.g))


def semidirect_bracket(x1: AlgebraElement, x2: AlgebraElement) -> AlgebraElement:
    """([Y1,Y2] + alpha_X1(Y2) - alpha_X2(Y1), [X1,X2])."""
    _same_module(x1, x2)
    cm = x1.module
    y = cm.h_bracket(x1.y, x2.y) + cm.alpha_lie(x1.x, x2.y) - cm.alpha_lie(x2.x, x1.y)
    return AlgebraElement(y, _commutator(x1.x, x2.x), cm)


def adjoint(h: np.ndarray, g: np.ndarray, element: AlgebraElement) -> AlgebraElement:
    """Ad_(h,g) on the semidirect sum, computed through the faithful representation."""
    cm = element.module
    q = cm.rep(cm.as_h(h), cm.as_g(g))
    conj = q @ element.rep() @ np.linalg.inv(q)
    y, x = cm.unrep_lie(conj)
    return AlgebraElement(y, x, cm)


def mat_exp(x) -> np.ndarray:
    return expm(np.asarray(x, dtype=complex))


def mat_log(g, branch_margin: float = 1e-6) -> np.ndarray:
    """Principal logarithm; BranchFailure near the negative real axis or at singular input."""
    g = np.asarray(g, dtype=complex)
    eigenvalues = np.linalg.eigvals(g)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    for lam in eigenvalues:
        if abs(lam) < 1e-14 * scale:
            raise BranchFailure("matrix logarithm of a singular matrix")
        if abs(np.angle(lam)) > np.pi - branch_margin:
            raise BranchFailure(f"eigenvalue {lam:.3e} lies on the branch cut")
    return np.asarray(logm(g), dtype=complex)


def exchange_law_residual(a11: Arrow2, a12: Arrow2, a21: Arrow2, a22: Arrow2) -> float:
    """(a11 o a12)·(a21 o a22) against (a11·a21) o (a12·a22)."""
    left = horizontal_compose(vertical_compose(a11, a12), vertical_compose(a21, a22))
    right = vertical_compose(horizontal_compose(a11, a21), horizontal_compose(a12, a22))
    return arrow_gap(left, right)


def _sample_identities(cm: CrossedModule, seed: int, index: int) -> Dict[str, float]:
    rng = sample_rng(seed, index)
    g = cm.random_g(rng)
    h = cm.random_h(rng)
    h2 = cm.random_h(rng)
    x = cm.random_x(rng)
    y = cm.random_y(rng)
    y2 = cm.random_y(rng)

    equivariance = frobenius_gap(cm.t(cm.alpha(g, h)), g @ cm.t(h) @ np.linalg.inv(g))
    peiffer = frobenius_gap(cm.alpha(cm.t(h), h2), h @ h2 @ np.linalg.inv(h))
    lie_equivariance = frobenius_gap(cm.t_lie(cm.alpha_lie(x, y)), _commutator(x, cm.t_lie(y)))
    lie_peiffer = frobenius_gap(cm.alpha_lie(cm.t_lie(y), y2), cm.h_bracket(y, y2))

    # exchange law on a compatible 2x2 grid of arrows
    g12, g22 = cm.random_g(rng), cm.random_g(rng)
    h11, h12, h21, h22 = (cm.random_h(rng) for _ in range(4))
    a12 = Arrow2(h12, g12, cm)
    a22 = Arrow2(h22, g22, cm)
    a11 = Arrow2(h11, a12.target(), cm)
    a21 = Arrow2(h21, a22.target(), cm)
    try:
        exchange = exchange_law_residual(a11, a12, a21, a22)
    except CompositionMismatch as e:
        exchange = float(e.residual or np.inf)

    return {
        "equivariance": equivariance,
        "peiffer": peiffer,
        "lie_equivariance": lie_equivariance,
        "lie_peiffer": lie_peiffer,
        "exchange_law": exchange,
    }


def verify_crossed_module(cm: CrossedModule, samples: int, seed: int = 0, threads: int = 1) -> Dict:
    """Max residuals of the crossed-module identities over seeded random draws."""
    rows = parallel_map(lambda k: _sample_identities(cm, seed, k), range(samples), threads)
    names = ["equivariance", "peiffer", "lie_equivariance", "lie_peiffer", "exchange_law"]
    report = {name: max_or_zero(row[name] for row in rows) for name in names}
    report["samples"] = samples
    logger.info(
        f"Crossed module {cm.kind.value}/m={cm.m}: equivariance {report['equivariance']:.2e}, "
        f"Peiffer {report['peiffer']:.2e} over {samples} samples"
    )
    return report
