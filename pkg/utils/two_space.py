"""
The hyperbolic affine 2-space of wave operators.

A skeleton (P_q, ..., P_1) lists linkable projectors from target to source; its
arrow is the product of elementary wave operators
Omega(P_{k+1}, P_k) = P_{k+1} (P_k P_{k+1} P_k)^-1, the inverse taken inside Ran P_k.
Pseudosurfaces are one-parameter families of skeletons sampled on a uniform grid.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import polar

from utils.errors import CompositionMismatch, IllConditioned, NotElementary, NotLinkable
from utils.grassmann import (
    DEFAULT_LINK_MARGIN,
    Projector,
    fs_distance,
    projector_from_frame,
)

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_DEDUP_TOL = 1e-9
DEFAULT_CONDITION_BOUND = 1e12
DEFAULT_GRID = 256
FLAT_FRACTION = 0.02


def same_projector(p: Projector, q: Projector, tol: float = DEFAULT_DEDUP_TOL) -> bool:
    return p is q or fs_distance(p, q) < tol


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Ordered linkable projectors (P_q, ..., P_1), target first."""

    projectors: Tuple[Projector, ...]

    def __post_init__(self):
        if not self.projectors:
            raise ValueError("a skeleton needs at least one projector")
        object.__setattr__(self, "projectors", tuple(self.projectors))

    @property
    def source(self) -> Projector:
        return self.projectors[-1]

    @property
    def target(self) -> Projector:
        return self.projectors[0]

    def __len__(self):
        return len(self.projectors)

    def __iter__(self):
        return iter(self.projectors)


def as_skeleton(value: Union[Skeleton, Projector, Sequence[Projector]]) -> Skeleton:
    if isinstance(value, Skeleton):
        return value
    if isinstance(value, Projector):
        return Skeleton((value,))
    return Skeleton(tuple(value))


def reduce(skeleton, tol: float = DEFAULT_DEDUP_TOL) -> Skeleton:
    """Remove consecutive repetitions."""
    skeleton = as_skeleton(skeleton)
    kept = [skeleton.projectors[0]]
    for p in skeleton.projectors[1:]:
        if not same_projector(kept[-1], p, tol):
            kept.append(p)
    if len(kept) == len(skeleton):
        return skeleton
    return Skeleton(tuple(kept))


def skeletons_equal(a: Skeleton, b: Skeleton, tol: float = DEFAULT_DEDUP_TOL) -> bool:
    a, b = reduce(a, tol), reduce(b, tol)
    return len(a) == len(b) and all(same_projector(p, q, tol) for p, q in zip(a, b))


def subspace_inverse(p0: Projector, p: Projector, condition_bound: float = DEFAULT_CONDITION_BOUND) -> np.ndarray:
    """Inverse of P0 P P0 inside Ran P0 (zero on its orthogonal complement)."""
    v = p0.frame
    block = v.conj().T @ p.matrix @ v
    cond = np.linalg.cond(block)
    if not np.isfinite(cond) or cond > condition_bound:
        raise IllConditioned(f"P0 P P0 has condition number {cond:.3e} inside Ran P0")
    return v @ np.linalg.inv(block) @ v.conj().T


def elementary_wave_operator(target: Projector, source: Projector,
                             margin: float = DEFAULT_LINK_MARGIN,
                             condition_bound: float = DEFAULT_CONDITION_BOUND,
                             squared: bool = True) -> np.ndarray:
    distance = fs_distance(target, source, squared)
    if distance >= np.pi / 2 - margin:
        raise NotLinkable(f"projectors at Fubini-Study distance {distance:.6f} are not linkable",
                          distance=distance)
    return target.matrix @ subspace_inverse(source, target, condition_bound)


@dataclass(frozen=True, eq=False)
class MorphismM:
    """Arrow of the 2-space: a reduced skeleton and its wave-operator value."""

    skeleton: Skeleton
    value: np.ndarray

    @property
    def source(self) -> Projector:
        return self.skeleton.source

    @property
    def target(self) -> Projector:
        return self.skeleton.target

    @property
    def is_identity(self) -> bool:
        return len(self.skeleton) == 1

    @property
    def is_elementary(self) -> bool:
        return len(self.skeleton) <= 2


def wave_operator(skeleton, margin: float = DEFAULT_LINK_MARGIN,
                  condition_bound: float = DEFAULT_CONDITION_BOUND,
                  dedup_tol: float = DEFAULT_DEDUP_TOL,
                  squared: bool = True) -> MorphismM:
    reduced = reduce(skeleton, dedup_tol)
    projectors = reduced.projectors
    value = projectors[-1].matrix.astype(complex)
    for k in range(len(projectors) - 1, 0, -1):
        omega = elementary_wave_operator(projectors[k - 1], projectors[k], margin, condition_bound, squared)
        value = omega @ value
    return MorphismM(reduced, value)


def compose(m2: MorphismM, m1: MorphismM, tol: float = DEFAULT_DEDUP_TOL) -> MorphismM:
    """m2 o m1: operator product and reduced concatenated skeleton."""
    if not same_projector(m1.target, m2.source, tol):
        gap = fs_distance(m1.target, m2.source)
        raise CompositionMismatch(f"target of m1 and source of m2 differ by {gap:.3e}", residual=gap)
    skeleton = reduce(Skeleton(m2.skeleton.projectors + m1.skeleton.projectors), tol)
    return MorphismM(skeleton, m2.value @ m1.value)


def weak_inverse(m: MorphismM) -> np.ndarray:
    """Omega^-1 = P0 P for an elementary arrow (P, P0)."""
    if len(m.skeleton) == 1:
        return m.source.matrix.copy()
    if len(m.skeleton) != 2:
        raise NotElementary(f"weak inverse needs an elementary arrow, skeleton length {len(m.skeleton)}")
    return m.source.matrix @ m.target.matrix


def round_trip_defect(p: Projector, q: Projector) -> float:
    """||Omega(P,Q) Omega(Q,P) - P||: zero only when the arrows are identities."""
    there = wave_operator((q, p))
    back = wave_operator((p, q))
    return float(np.linalg.norm(compose(back, there).value - p.matrix))


def interpolate_projectors(a: Projector, b: Projector, w: float) -> Projector:
    """Frame interpolation with polar alignment of b's frame onto a's."""
    za, zb = a.frame, b.frame
    rotation, _ = polar(zb.conj().T @ za)
    return projector_from_frame((1.0 - w) * za + w * (zb @ rotation))


def _flatten(u: float, flat_fraction: float) -> float:
    return float(np.clip((u - flat_fraction) / (1.0 - 2.0 * flat_fraction), 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class PseudoSurface:
    """Skeletons sampled on the grid u_k = k / N, k = 0..N."""

    samples: Tuple[Skeleton, ...]
    flat_ends: bool = False

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ValueError("a pseudosurface needs at least two samples")
        object.__setattr__(self, "samples", tuple(reduce(s) for s in self.samples))

    @property
    def N(self) -> int:
        return len(self.samples) - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def n(self) -> int:
        return self.samples[0].source.n

    @property
    def m(self) -> int:
        return self.samples[0].source.rank

    @classmethod
    def from_function(cls, fn: Callable[[float], object], grid: int = DEFAULT_GRID,
                      flat_ends: bool = True, flat_fraction: float = FLAT_FRACTION) -> "PseudoSurface":
        """Sample u -> skeleton; with flat_ends the first/last `flat_fraction` of the grid is constant."""
        samples = []
        for u in np.linspace(0.0, 1.0, grid + 1):
            s = _flatten(u, flat_fraction) if flat_ends else float(u)
            samples.append(as_skeleton(fn(s)))
        return cls(tuple(samples), flat_ends)

    @classmethod
    def constant(cls, skeleton, grid: int = DEFAULT_GRID) -> "PseudoSurface":
        skeleton = as_skeleton(skeleton)
        return cls(tuple(skeleton for _ in range(grid + 1)), True)

    def skeleton_at(self, u: float) -> Skeleton:
        position = float(np.clip(u, 0.0, 1.0)) * self.N
        k = min(int(np.floor(position)), self.N - 1)
        w = position - k
        left, right = self.samples[k], self.samples[k + 1]
        if w < 1e-12:
            return left
        if w > 1.0 - 1e-12:
            return right
        if len(left) != len(right):
            return left if w < 0.5 else right
        return reduce(Skeleton(tuple(interpolate_projectors(a, b, w) for a, b in zip(left, right))))

    def resampled(self, grid: int) -> "PseudoSurface":
        if grid == self.N:
            return self
        return PseudoSurface(tuple(self.skeleton_at(u) for u in np.linspace(0.0, 1.0, grid + 1)), self.flat_ends)

    def restricted(self, start: int, stop: int) -> "PseudoSurface":
        """Sub-pseudosurface on samples start..stop, reparametrized to [0, 1]."""
        return PseudoSurface(self.samples[start:stop + 1], False)

    def validate(self, margin: float = DEFAULT_LINK_MARGIN) -> None:
        for k, skeleton in enumerate(self.samples):
            projectors = skeleton.projectors
            for a, b in zip(projectors[:-1], projectors[1:]):
                distance = fs_distance(a, b)
                if distance >= np.pi / 2 - margin:
                    raise NotLinkable(f"consecutive projectors not linkable at u={k / self.N:.6f}",
                                      t=k / self.N, distance=distance)

    def to_dict(self) -> Dict:
        from utils.report_tools import encode_matrix
        return {
            "N": self.N,
            "n": self.n,
            "m": self.m,
            "flat_ends": self.flat_ends,
            "samples": [[encode_matrix(p.frame) for p in skeleton] for skeleton in self.samples],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "PseudoSurface":
        from utils.report_tools import decode_matrix
        samples = []
        for entry in data["samples"]:
            samples.append(Skeleton(tuple(projector_from_frame(decode_matrix(frame)) for frame in entry)))
        surface = cls(tuple(samples), bool(data.get("flat_ends", False)))
        if surface.N != int(data.get("N", surface.N)):
            raise ValueError(f"pseudosurface declares N={data['N']} but holds {surface.N + 1} samples")
        if surface.n != int(data.get("n", surface.n)) or surface.m != int(data.get("m", surface.m)):
            raise ValueError("pseudosurface dimensions do not match its frames")
        return surface


def elementary_pseudosurface(y: Callable[[float], Projector], x: Callable[[float], Projector],
                             grid: int = DEFAULT_GRID, flat_ends: bool = True) -> PseudoSurface:
    """u -> (y(u), x(u))."""
    return PseudoSurface.from_function(lambda u: Skeleton((y(u), x(u))), grid, flat_ends)


def identity_pseudosurface(x: Callable[[float], Projector], grid: int = DEFAULT_GRID,
                           flat_ends: bool = True) -> PseudoSurface:
    return PseudoSurface.from_function(lambda u: Skeleton((x(u),)), grid, flat_ends)


def ps_boundaries(gamma: PseudoSurface):
    """(source path, target path) as tuples of projectors over the grid."""
    source = tuple(s.source for s in gamma.samples)
    target = tuple(s.target for s in gamma.samples)
    return source, target


def ps_horizontal_compose(gamma1: PseudoSurface, gamma2: PseudoSurface,
                          tol: float = DEFAULT_DEDUP_TOL) -> PseudoSurface:
    """gamma1 on [0, 1/2] followed by gamma2 on [1/2, 1]."""
    if not skeletons_equal(gamma1.samples[-1], gamma2.samples[0], tol):
        raise CompositionMismatch("end skeleton of the first pseudosurface differs from the start of the second",
                                  u=1.0)
    gamma2 = gamma2.resampled(gamma1.N)
    return PseudoSurface(gamma1.samples + gamma2.samples[1:], gamma1.flat_ends and gamma2.flat_ends)


def ps_vertical_compose(gamma1: PseudoSurface, gamma2: PseudoSurface,
                        tol: float = DEFAULT_DEDUP_TOL) -> PseudoSurface:
    """Per-u concatenation gamma1(u) o gamma2(u)."""
    gamma2 = gamma2.resampled(gamma1.N)
    samples = []
    for k, (upper, lower) in enumerate(zip(gamma1.samples, gamma2.samples)):
        if not same_projector(upper.source, lower.target, tol):
            u = k / gamma1.N
            raise CompositionMismatch(f"source of the upper pseudosurface differs from the target of the lower at u={u:.6f}",
                                      u=u)
        samples.append(reduce(Skeleton(upper.projectors + lower.projectors), tol))
    return PseudoSurface(tuple(samples), gamma1.flat_ends and gamma2.flat_ends)


def ps_classify(gamma: PseudoSurface, tol: float = DEFAULT_DEDUP_TOL) -> Dict[str, bool]:
    first, last = gamma.samples[0], gamma.samples[-1]
    elementary = all(len(s) <= 2 for s in gamma.samples)
    impervious = len(first) == 1 and len(last) == 1
    cyclic = impervious and skeletons_equal(first, last, tol)
    fixed_source = all(same_projector(s.source, first.source, tol) for s in gamma.samples)
    fixed_target = all(same_projector(s.target, first.target, tol) for s in gamma.samples)
    return {
        "elementary": elementary,
        "impervious": impervious,
        "cyclic": cyclic,
        "pinched": fixed_source or fixed_target,
    }


PSEUDOSURFACE_KINDS = ("constant", "elementary", "impervious")


def _tangent(z: np.ndarray, rng: np.random.Generator, radius: float) -> np.ndarray:
    x = rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape)
    tangent = x - z @ (z.conj().T @ x)
    return radius * tangent / np.linalg.norm(tangent)


def seeded_pseudosurface(n: int, m: int, seed: int = 0, kind: str = "impervious", grid: int = DEFAULT_GRID,
                         radius: float = 0.4) -> PseudoSurface:
    """
    Reproducible test surface around a random base frame Z.

    x(u) moves along one tangent direction; y(u) adds a second direction with
    weight sin(pi u) for "impervious" (identity skeletons at both ends) and 1
    for "elementary".
    """
    if kind not in PSEUDOSURFACE_KINDS:
        raise ValueError(f"unknown pseudosurface kind {kind!r}, expected one of {PSEUDOSURFACE_KINDS}")
    rng = np.random.default_rng(seed)
    base = projector_from_frame(rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m)))
    z = base.frame
    if kind == "constant":
        return PseudoSurface.constant(Skeleton((base,)), grid)
    first, second = _tangent(z, rng, radius), _tangent(z, rng, radius)
    weight = (lambda u: np.sin(np.pi * u)) if kind == "impervious" else (lambda u: 1.0)

    def skeleton(u):
        x = projector_from_frame(z + u * first)
        y = projector_from_frame(z + u * first + weight(u) * second)
        return Skeleton((y, x))

    return PseudoSurface.from_function(skeleton, grid)
