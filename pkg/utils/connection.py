"""
Gauge potentials, curvings and gluing relations of the 2-connection.

Fields are evaluated in chart coordinates. A point of U^i is the realified
coordinate vector of its projector, a point of the pair space U^i x U^i is the
concatenation (y, x) of target and source coordinates. The H x| G valued
potential eta_bar = A(x) + eta(y, x) is carried through the faithful
representation of the crossed module, so curvatures are plain matrix 2-forms.
"""
import logging
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from utils.bundle import (
    TransitionData,
    g_transition,
    g_transition_derivative,
    transform_displacement,
)
from utils.common import frobenius_gap, max_or_zero, parallel_map, sample_rng
from utils.crossed_module import CrossedModule, ModuleKind
from utils.errors import NotInImage, NotLinkable
from utils.forms import (
    DEFAULT_FD_STEP,
    Form,
    curvature,
    directional_derivative,
    exterior_derivative,
    graded_commutator,
)
from utils.grassmann import (
    DEFAULT_LINK_MARGIN,
    Chart,
    Projector,
    charts_for,
    complexify,
    coordinates,
    embed_displacement,
    frame_from_coordinates,
    fs_distance,
    projector_from_coordinates,
    random_frame,
    random_projector,
    random_projector_near,
    realify,
)
from utils.two_space import DEFAULT_CONDITION_BOUND, elementary_wave_operator

# Configure logging
logger = logging.getLogger(__name__)

ETA_METHODS = ("fd", "analytic")
SAMPLE_CHART_MARGIN = 0.2
SAMPLE_PAIR_RADIUS = 0.5

ENFORCED_GLUING = ["a_gluing", "eta_ij_vanishing", "eta_ij_triple"]
MEASURED_GLUING = ["eta_bar_gluing", "eta_gluing", "bns_gluing"]


def _pinv(z: np.ndarray) -> np.ndarray:
    """(Z^dag Z)^-1 Z^dag."""
    return np.linalg.solve(z.conj().T @ z, z.conj().T)


def _range_projector(z: np.ndarray) -> np.ndarray:
    return z @ _pinv(z)


def pair_point(chart: Chart, q: Projector, p: Projector) -> np.ndarray:
    return np.concatenate([realify(coordinates(chart, q)), realify(coordinates(chart, p))])


def pair_vector(dq, dp) -> np.ndarray:
    return np.concatenate([realify(dq), realify(dp)])


def split_pair(chart: Chart, point) -> Tuple[np.ndarray, np.ndarray]:
    d = chart.coord_dim
    point = np.asarray(point, dtype=float)
    return complexify(point[:d], chart.coord_shape), complexify(point[d:], chart.coord_shape)


def lift_target(form: Form, dim: int) -> Form:
    """Pull a form on U^i back to the pair space along (y, x) -> y."""
    return Form(form.degree, lambda pt, *v: form.evaluate(pt[:dim], *[w[:dim] for w in v]))


def lift_source(form: Form, dim: int) -> Form:
    """Pull a form on U^i back to the pair space along (y, x) -> x."""
    return Form(form.degree, lambda pt, *v: form.evaluate(pt[dim:], *[w[dim:] for w in v]))


class GaugeConnection:
    """
    A 2-connection (A^i, eta^i) over the Grassmannian charts.

    Subclasses provide the coordinate-level evaluators `_A` and `_eta`; every
    curvature, gluing and gauge check is derived from them.
    """

    def __init__(self, n: int, m: int, module: Optional[CrossedModule] = None,
                 fd_step: float = DEFAULT_FD_STEP,
                 b_sph: Optional[Callable[[Chart], Form]] = None,
                 margin: float = DEFAULT_LINK_MARGIN):
        self.n = n
        self.m = m
        self.module = module or CrossedModule(m)
        if self.module.m != m:
            raise ValueError(f"crossed module acts on m={self.module.m}, bundle rank is {m}")
        self.fd_step = fd_step
        self.b_sph = b_sph
        self.margin = margin

    # -- coordinate level, overridden -------------------------------------------
    def _A(self, chart: Chart, xi: np.ndarray, dxi: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement this method")

    def _eta(self, chart: Chart, xq, xp, dq, dp) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement this method")

    def transitions(self) -> TransitionData:
        return TransitionData.stiefel(self.n, self.m, self.module)

    # -- projector level -----------------------------------------------------------
    def eval_A(self, chart: Chart, p: Projector, dxi) -> np.ndarray:
        xi = coordinates(chart, p)
        return self._A(chart, xi, np.asarray(dxi, dtype=complex).reshape(chart.coord_shape))

    def eval_eta(self, chart: Chart, q: Projector, p: Projector, dq, dp) -> np.ndarray:
        distance = fs_distance(q, p)
        if distance >= np.pi / 2 - self.margin:
            raise NotLinkable(f"eta needs a linkable pair, distance {distance:.6f}", distance=distance)
        shape = chart.coord_shape
        return self._eta(chart, coordinates(chart, q), coordinates(chart, p),
                         np.asarray(dq, dtype=complex).reshape(shape), np.asarray(dp, dtype=complex).reshape(shape))

    def eval_eta_bar(self, chart: Chart, q: Projector, p: Projector, dq, dp) -> np.ndarray:
        """eta_bar(y, x) in the faithful representation."""
        return self.module.rep_lie(self.module.as_h(self.eval_eta(chart, q, p, dq, dp)), self.eval_A(chart, p, dp))

    # -- forms on real coordinates -------------------------------------------------
    def a_form(self, chart: Chart) -> Form:
        shape = chart.coord_shape
        return Form(1, lambda x, v: self._A(chart, complexify(x, shape), complexify(v, shape)))

    def eta_form(self, chart: Chart) -> Form:
        def evaluate(pt, v):
            xq, xp = split_pair(chart, pt)
            dq, dp = split_pair(chart, v)
            return self.module.as_h(self._eta(chart, xq, xp, dq, dp))

        return Form(1, evaluate)

    def eta_rep_form(self, chart: Chart) -> Form:
        cm = self.module
        return self.eta_form(chart).mapped(lambda y: cm.rep_lie(y, cm.g_zero()))

    def a_rep_form(self, chart: Chart) -> Form:
        """A(x) on the pair space, in the representation."""
        cm = self.module
        return lift_source(self.a_form(chart), chart.coord_dim).mapped(lambda x: cm.rep_lie(cm.h_zero(), x))

    def eta_bar_form(self, chart: Chart) -> Form:
        return self.eta_rep_form(chart) + self.a_rep_form(chart)

    def fake_curvature_bar_form(self, chart: Chart) -> Form:
        """d eta_bar + eta_bar ^ eta_bar, representation valued."""
        return curvature(self.eta_bar_form(chart), self.fd_step)

    def curvature_a_form(self, chart: Chart) -> Form:
        return curvature(self.a_form(chart), self.fd_step)

    def b_sph_form(self, chart: Chart) -> Form:
        if self.b_sph is not None:
            return self.b_sph(chart)
        cm = self.module
        return Form(2, lambda x, v1, v2: cm.h_zero())

    def fake_curvature_form(self, chart: Chart) -> Form:
        """F = dA + A^A - t(B_sph)."""
        cm = self.module
        return self.curvature_a_form(chart) - self.b_sph_form(chart).mapped(cm.t_lie)

    def curving_ns_form(self, chart: Chart) -> Form:
        """B_ns: the h-part of the fake curvature of eta_bar."""
        cm = self.module
        return self.fake_curvature_bar_form(chart).mapped(lambda r: cm.unrep_lie(r)[0])

    def three_curvature_form(self, chart: Chart) -> Form:
        """H = -[eta, F_bar], representation valued."""
        return -graded_commutator(self.eta_rep_form(chart), self.fake_curvature_bar_form(chart))

    # -- operations on projectors and displacements -------------------------------
    def fake_curvature(self, chart: Chart, p: Projector, bivector) -> np.ndarray:
        v1, v2 = (realify(np.asarray(v, dtype=complex).reshape(chart.coord_shape)) for v in bivector)
        return self.fake_curvature_form(chart)(realify(coordinates(chart, p)), v1, v2)

    def curving_Bns(self, chart: Chart, q: Projector, p: Projector, bivector) -> np.ndarray:
        (dq1, dp1), (dq2, dp2) = bivector
        return self.curving_ns_form(chart)(pair_point(chart, q, p), pair_vector(dq1, dp1), pair_vector(dq2, dp2))

    def three_curvature(self, chart: Chart, q: Projector, p: Projector, trivector) -> np.ndarray:
        vectors = [pair_vector(dq, dp) for dq, dp in trivector]
        h_rep = self.three_curvature_form(chart)(pair_point(chart, q, p), *vectors)
        return self.module.unrep_lie(h_rep)[0]

    def bianchi_residual(self, chart: Chart, q: Projector, p: Projector, quadvector,
                         step: Optional[float] = None) -> float:
        """||dH + [A, H] + [B, F_bar]|| with B the h-part of F_bar, on four pair-space vectors."""
        step = step or self.fd_step
        fbar = curvature(self.eta_bar_form(chart), step)
        h3 = -graded_commutator(self.eta_rep_form(chart), fbar)
        a_rep = self.a_rep_form(chart)
        b_rep = fbar - curvature(a_rep, step)
        form = exterior_derivative(h3, step) + graded_commutator(a_rep, h3) + graded_commutator(b_rep, fbar)
        vectors = [pair_vector(dq, dp) for dq, dp in quadvector]
        return float(np.linalg.norm(form(pair_point(chart, q, p), *vectors)))

    def curving_ns_direct_form(self, chart: Chart) -> Form:
        """B_ns = d eta + eta ^ eta + alpha_A(eta), assembled from eta and A alone."""
        cm = self.module
        eta = self.eta_rep_form(chart)
        rep = curvature(eta, self.fd_step) + graded_commutator(self.a_rep_form(chart), eta)
        return rep.mapped(lambda r: cm.unrep_lie(r)[0])

    def eta_bar_decomposition_residual(self, chart: Chart, q: Projector, p: Projector, bivector) -> float:
        """t(F_bar) against F + t(B_sph) + t(B_ns), F on the source factor and B_ns built from eta and A."""
        cm = self.module
        (dq1, dp1), (dq2, dp2) = bivector
        pt = pair_point(chart, q, p)
        w1, w2 = pair_vector(dq1, dp1), pair_vector(dq2, dp2)
        fbar = cm.unrep_lie(self.fake_curvature_bar_form(chart)(pt, w1, w2))
        b_ns = self.curving_ns_direct_form(chart)(pt, w1, w2)
        d = chart.coord_dim
        x, u1, u2 = pt[d:], w1[d:], w2[d:]
        f = self.fake_curvature_form(chart)(x, u1, u2)
        b_sph = self.b_sph_form(chart)(x, u1, u2)
        whole = cm.t_lie(fbar[0]) + fbar[1]
        return frobenius_gap(whole, f + cm.t_lie(b_sph) + cm.t_lie(b_ns))

    def potential_transformation(self, i: Chart, j: Chart, p: Projector, dxi) -> np.ndarray:
        """eta^ij with t(eta^ij) = A^j - g^-1 A^i g - g^-1 dg."""
        cm = self.module
        if i == j:
            return cm.h_zero()
        dxi = np.asarray(dxi, dtype=complex).reshape(i.coord_shape)
        g = g_transition(i, j, p)
        g_inv = np.linalg.inv(g)
        dg = g_transition_derivative(i, j, p, dxi)
        a_j = self.eval_A(j, p, transform_displacement(i, j, p, dxi))
        defect = a_j - g_inv @ self.eval_A(i, p, dxi) @ g - g_inv @ dg
        return cm.t_lie_preimage(defect)

    def eta_ij_form(self, i: Chart, j: Chart) -> Form:
        shape = i.coord_shape
        return Form(1, lambda x, v: self.potential_transformation(
            i, j, projector_from_coordinates(i, complexify(x, shape)), complexify(v, shape)))

    def gauge_relation_residual(self, chart: Chart, q: Projector, p: Projector, dq, dp) -> float:
        """A(Q) against G^-1 (eta + A(P)) G + G^-1 dG with G the frame gauge Z0(P)^+ Z0(Q)."""
        shape = chart.coord_shape
        xq, xp = coordinates(chart, q), coordinates(chart, p)
        dq = np.asarray(dq, dtype=complex).reshape(shape)
        dp = np.asarray(dp, dtype=complex).reshape(shape)
        z, w = frame_from_coordinates(chart, xp), frame_from_coordinates(chart, xq)
        dz, dw = embed_displacement(chart, dp), embed_displacement(chart, dq)
        gram = z.conj().T @ z
        gauge = np.linalg.solve(gram, z.conj().T @ w)
        d_gauge = np.linalg.solve(gram, dz.conj().T @ w + z.conj().T @ dw) \
            - np.linalg.solve(gram, (dz.conj().T @ z + z.conj().T @ dz) @ gauge)
        gauge_inv = np.linalg.inv(gauge)
        eta = self._eta(chart, xq, xp, dq, dp)
        rhs = gauge_inv @ (self.module.t_lie(self.module.as_h(eta)) + self._A(chart, xp, dp)) @ gauge \
            + gauge_inv @ d_gauge
        return frobenius_gap(self._A(chart, xq, dq), rhs)

    def frame_gauge(self, chart: Chart, q: Projector, p: Projector) -> np.ndarray:
        z = frame_from_coordinates(chart, coordinates(chart, p))
        w = frame_from_coordinates(chart, coordinates(chart, q))
        return _pinv(z) @ w

    def boundary_gauge(self, chart: Chart, q: Projector, p: Projector) -> np.ndarray:
        """G with t(target of a lift) = G(1) Pexp_y(A) G(0)^-1; identity when t(eta) = A(y) - A(x) holds."""
        return np.eye(self.m, dtype=complex)

    # -- sampled reports -------------------------------------------------------------
    def _sample_pair(self, rng: np.random.Generator, charts: Sequence[Chart]):
        for _ in range(50):
            x = random_projector(self.n, self.m, rng)
            y = random_projector_near(x, SAMPLE_PAIR_RADIUS, rng)
            if all(charts_for(z, charts, SAMPLE_CHART_MARGIN) == list(charts) for z in (x, y)):
                return x, y
        raise NotLinkable("could not sample a pair inside the requested overlap")

    def _random_displacement(self, chart: Chart, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        rows, cols = chart.coord_shape
        return scale * random_frame(rows, cols, rng) / np.sqrt(2 * rows * cols)

    def _to_chart(self, i: Chart, j: Chart, y: Projector, x: Projector, w_real: np.ndarray) -> np.ndarray:
        d = i.coord_dim
        dq = complexify(w_real[:d], i.coord_shape)
        dp = complexify(w_real[d:], i.coord_shape)
        return pair_vector(transform_displacement(i, j, y, dq), transform_displacement(i, j, x, dp))

    def _q_rep(self, data: TransitionData, i: Chart, j: Chart, pt_i: np.ndarray) -> np.ndarray:
        xq, xp = split_pair(i, pt_i)
        y, x = projector_from_coordinates(i, xq), projector_from_coordinates(i, xp)
        cm = self.module
        return cm.rep(cm.as_h(data.h_ij(i, j, y, x)), data.g_ij(i, j, x))

    def _gluing_sample(self, i: Chart, j: Chart, seed: int, index: int) -> Dict[str, float]:
        rng = sample_rng(seed, index)
        cm = self.module
        x, y = self._sample_pair(rng, [i, j])
        dx = self._random_displacement(i, rng)
        dy = self._random_displacement(i, rng)
        d = i.coord_dim

        # A-gluing with the chart-j displacement taken by central differences of chart-j coordinates
        h = 1e-6
        xi = coordinates(i, x)
        plus = coordinates(j, projector_from_coordinates(i, xi + h * dx))
        minus = coordinates(j, projector_from_coordinates(i, xi - h * dx))
        dx_j = (plus - minus) / (2 * h)
        g = g_transition(i, j, x)
        g_inv = np.linalg.inv(g)
        try:
            eta_ij = self.potential_transformation(i, j, x, dx)
        except NotInImage:
            logger.warning(f"A-gluing defect leaves t^Lie(h) on charts {i.label}/{j.label}")
            return {name: np.inf for name in ENFORCED_GLUING + MEASURED_GLUING}
        a_gluing = frobenius_gap(
            self.eval_A(j, x, dx_j),
            g_inv @ self.eval_A(i, x, dx) @ g + g_inv @ g_transition_derivative(i, j, x, dx) + cm.t_lie(eta_ij),
        )
        row = {"a_gluing": a_gluing, "eta_ij_vanishing": float(np.linalg.norm(eta_ij))}
        data = self.transitions()

        # triple-overlap relation of the potential-transformation, third chart drawn from the cover
        cover = charts_for(x, data.charts, SAMPLE_CHART_MARGIN)
        k = cover[int(rng.integers(len(cover)))]
        g_jk = g_transition(j, k, x)
        g_ik = g_transition(i, k, x)
        h_ijk = cm.as_h(data.h_ijk(i, j, k, x))
        h_ijk_inv = np.linalg.inv(h_ijk)
        eta_jk = self.potential_transformation(j, k, x, transform_displacement(i, j, x, dx))
        eta_ik = self.potential_transformation(i, k, x, dx)
        lhs = cm.alpha(g, eta_ij) + cm.alpha(g @ g_jk, eta_jk) - h_ijk_inv @ cm.alpha(g_ik, eta_ik) @ h_ijk
        pt_x = realify(xi)
        dh = directional_derivative(
            lambda s: cm.as_h(data.h_ijk(i, j, k, projector_from_coordinates(i, complexify(s, i.coord_shape)))),
            pt_x, realify(dx), self.fd_step)
        rhs = h_ijk_inv @ dh + h_ijk_inv @ cm.alpha_lie(self.eval_A(i, x, dx), h_ijk)
        row["eta_ij_triple"] = frobenius_gap(lhs, rhs)

        # measured relations on the pair space
        pt_i = pair_point(i, y, x)
        pt_j = pair_point(j, y, x)
        w_i = pair_vector(dy, dx)
        w_j = self._to_chart(i, j, y, x, w_i)
        q = self._q_rep(data, i, j, pt_i)
        q_inv = np.linalg.inv(q)
        dq = directional_derivative(lambda s: self._q_rep(data, i, j, s), pt_i, w_i, self.fd_step)
        eij = lift_target(self.eta_ij_form(i, j), d)(pt_i, w_i), lift_source(self.eta_ij_form(i, j), d)(pt_i, w_i)
        correction = cm.rep_lie(eij[0] - eij[1], cm.t_lie(eij[1]))
        eta_bar_j = self.eta_bar_form(j)(pt_j, w_j)
        row["eta_bar_gluing"] = frobenius_gap(eta_bar_j, q_inv @ self.eta_bar_form(i)(pt_i, w_i) @ q
                                              + q_inv @ dq + correction)

        h_ij = cm.as_h(data.h_ij(i, j, y, x))
        h_inv = np.linalg.inv(h_ij)
        dh_ij = directional_derivative(
            lambda s: cm.as_h(data.h_ij(i, j, *(projector_from_coordinates(i, c) for c in split_pair(i, s)))),
            pt_i, w_i, self.fd_step)
        eta_i = self.eta_form(i)(pt_i, w_i)
        eta_j = self.eta_form(j)(pt_j, w_j)
        a_i = self.eval_A(i, x, dx)
        rhs = h_inv @ eta_i @ h_ij + h_inv @ dh_ij + h_inv @ cm.alpha_lie(a_i, h_ij) + cm.alpha(g, eij[0] - eij[1])
        row["eta_gluing"] = frobenius_gap(cm.alpha(g, eta_j), rhs)

        w2_i = pair_vector(self._random_displacement(i, rng), self._random_displacement(i, rng))
        w2_j = self._to_chart(i, j, y, x, w2_i)
        b_i = self.curving_ns_form(i)(pt_i, w_i, w2_i)
        b_j = self.curving_ns_form(j)(pt_j, w_j, w2_j)
        f_i = self.fake_curvature_form(i)(pt_i[d:], w_i[d:], w2_i[d:])
        row["bns_gluing"] = frobenius_gap(
            b_j, cm.alpha(g_inv, h_inv @ b_i @ h_ij + h_inv @ cm.alpha_lie(f_i, h_ij)))
        return row

    def gluing_residuals(self, i: Chart, j: Chart, samples: int, seed: int = 0, threads: int = 1) -> Dict:
        """Enforced and measured gluing relations over seeded pairs in U^i cap U^j."""
        names = ENFORCED_GLUING + MEASURED_GLUING
        if i == j or samples == 0:
            return {**{name: 0.0 for name in names}, "samples": samples}
        rows = parallel_map(lambda k: self._gluing_sample(i, j, seed, k), range(samples), threads)
        report = {name: max_or_zero(row[name] for row in rows) for name in names}
        report["samples"] = samples
        logger.info(f"Gluing {i.label}->{j.label}: A-gluing {report['a_gluing']:.2e}, "
                    f"eta^ij {report['eta_ij_vanishing']:.2e}")
        return report

    def constraint_experiment(self, chart: Chart, samples: int, seed: int = 0) -> float:
        """max ||t(eta(y, x)) - (A(y) - A(x))|| over seeded pairs and tangents."""
        cm = self.module
        worst = 0.0
        for index in range(samples):
            rng = sample_rng(seed, index)
            x, y = self._sample_pair(rng, [chart])
            dx = self._random_displacement(chart, rng)
            dy = self._random_displacement(chart, rng)
            eta = cm.t_lie(cm.as_h(self.eval_eta(chart, y, x, dy, dx)))
            diff = self.eval_A(chart, y, dy) - self.eval_A(chart, x, dx)
            worst = max(worst, float(np.linalg.norm(eta - diff)))
        return worst


class StiefelConnection(GaugeConnection):
    """The universal connection of the Stiefel bundle and its wave-operator potential."""

    def __init__(self, n: int, m: int, module: Optional[CrossedModule] = None,
                 eta_method: str = "fd", fd_step: float = DEFAULT_FD_STEP,
                 b_sph: Optional[Callable[[Chart], Form]] = None,
                 margin: float = DEFAULT_LINK_MARGIN,
                 condition_bound: float = DEFAULT_CONDITION_BOUND):
        module = module or CrossedModule(m)
        if module.kind != ModuleKind.GL_ADJ and m != 1:
            raise ValueError("the Stiefel connection takes values in gl(m); CENTRAL is allowed only for m=1")
        super().__init__(n, m, module, fd_step, b_sph, margin)
        if eta_method not in ETA_METHODS:
            raise ValueError(f"unknown eta method {eta_method!r}, expected one of {ETA_METHODS}")
        self.eta_method = eta_method
        self.condition_bound = condition_bound

    def _A(self, chart, xi, dxi):
        z0 = frame_from_coordinates(chart, xi)
        return _pinv(z0) @ embed_displacement(chart, dxi)

    def omega(self, chart: Chart, xq, xp) -> np.ndarray:
        if self.eta_method == "analytic":
            return analytic_wave_operator(frame_from_coordinates(chart, xq), frame_from_coordinates(chart, xp))
        return elementary_wave_operator(
            projector_from_coordinates(chart, xq), projector_from_coordinates(chart, xp),
            self.margin, self.condition_bound,
        )

    def d_omega(self, chart: Chart, xq, xp, dq, dp, step: Optional[float] = None) -> np.ndarray:
        if self.eta_method == "analytic":
            return analytic_wave_operator_derivative(
                frame_from_coordinates(chart, xq), frame_from_coordinates(chart, xp),
                embed_displacement(chart, dq), embed_displacement(chart, dp),
            )
        base = np.concatenate([realify(xq), realify(xp)])
        direction = np.concatenate([realify(dq), realify(dp)])
        return directional_derivative(
            lambda s: self.omega(chart, *split_pair(chart, s)), base, direction, step or self.fd_step)

    def _eta(self, chart, xq, xp, dq, dp, step: Optional[float] = None):
        z = frame_from_coordinates(chart, xp)
        q_matrix = _range_projector(frame_from_coordinates(chart, xq))
        return _pinv(z) @ q_matrix @ self.d_omega(chart, xq, xp, dq, dp, step) @ z

    def boundary_gauge(self, chart: Chart, q: Projector, p: Projector) -> np.ndarray:
        return self.frame_gauge(chart, q, p)

    def eta_richardson(self, chart: Chart, q: Projector, p: Projector, dq, dp) -> float:
        """Relative change of the finite-difference eta under step halving."""
        shape = chart.coord_shape
        xq, xp = coordinates(chart, q), coordinates(chart, p)
        dq = np.asarray(dq, dtype=complex).reshape(shape)
        dp = np.asarray(dp, dtype=complex).reshape(shape)
        coarse = self._eta(chart, xq, xp, dq, dp, self.fd_step)
        fine = self._eta(chart, xq, xp, dq, dp, self.fd_step / 2)
        change = frobenius_gap(coarse, fine)
        if change > 1e-4:
            logger.warning(f"eta finite differences disagree under step halving by {change:.2e}")
        return change


class SyntheticConnection(GaugeConnection):
    """Connection given by explicit coordinate-level callables, for abelian models and negative controls."""

    def __init__(self, n: int, m: int, a_field: Callable, eta_field: Callable,
                 module: Optional[CrossedModule] = None, fd_step: float = DEFAULT_FD_STEP,
                 b_sph: Optional[Callable[[Chart], Form]] = None,
                 margin: float = DEFAULT_LINK_MARGIN):
        super().__init__(n, m, module, fd_step, b_sph, margin)
        self.a_field = a_field
        self.eta_field = eta_field

    def _A(self, chart, xi, dxi):
        return np.asarray(self.a_field(chart, xi, dxi), dtype=complex)

    def _eta(self, chart, xq, xp, dq, dp):
        return self.module.as_h(self.eta_field(chart, xq, xp, dq, dp))

    @classmethod
    def with_a_defect(cls, base: GaugeConnection, chart: Chart, defect: Callable,
                      module: Optional[CrossedModule] = None) -> "SyntheticConnection":
        """Copy of `base` whose A on `chart` gains defect(xi, dxi)."""
        def a_field(c, xi, dxi):
            value = base._A(c, xi, dxi)
            return value + defect(xi, dxi) if c == chart else value

        return cls(base.n, base.m, a_field, base._eta, module or base.module, base.fd_step, base.b_sph, base.margin)


def analytic_wave_operator(w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Omega(Q, P) = W (Z^dag W)^-1 Z^dag for frames W of Ran Q and Z of Ran P."""
    return w @ np.linalg.solve(z.conj().T @ w, z.conj().T)


def analytic_wave_operator_derivative(w, z, dw, dz) -> np.ndarray:
    m_inv = np.linalg.inv(z.conj().T @ w)
    d_m = -m_inv @ (dz.conj().T @ w + z.conj().T @ dw) @ m_inv
    return dw @ m_inv @ z.conj().T + w @ d_m @ z.conj().T + w @ m_inv @ dz.conj().T
