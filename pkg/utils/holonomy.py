"""
Horizontal lifts of pseudosurfaces.

Path-ordered exponentials solve dU/du = -M(u) U with U(0) = 1, so later
factors stand on the left. Horizontal composition of lifts therefore reads
second . first. Lifts are carried through the faithful representation of the
crossed module and read back as arrows (h, g).
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline

from utils.bundle import TransitionData, transition_arrow
from utils.common import frobenius_gap, parallel_map
from utils.connection import GaugeConnection
from utils.crossed_module import (
    Arrow2,
    CrossedModule,
    arrow_gap,
    horizontal_compose,
    horizontal_inverse,
    mat_exp,
    vertical_compose,
)
from utils.errors import (
    CompositionMismatch,
    DeterminantCollapse,
    LinkabilityHypothesisFailed,
    NoChartCover,
    NotAbelian,
    NotElementary,
)
from utils.forms import Form
from utils.grassmann import (
    DEFAULT_CHART_TOL,
    DEFAULT_LINK_MARGIN,
    Chart,
    Projector,
    chart_margin,
    linkable,
    projector_from_real,
    real_coordinates,
)
from utils.simplicial import Triangulation, de_rham
from utils.report_tools import fit_slope, refinement_rows
from utils.two_space import PseudoSurface, Skeleton, skeletons_equal

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_STEPS = 1024
MIN_PIECE_STEPS = 16
DEFAULT_DETERMINANT_FLOOR = 1e-12
DEFAULT_COVER_MARGIN = 0.1
DEFAULT_SEAM_TOL = 1e-6
DEFAULT_SURFACE_CELL = 0.1


# -- paths in chart coordinates ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChartPath:
    """Cubic spline through the real chart coordinates of sampled projectors."""

    chart: Chart
    spline: CubicSpline

    @classmethod
    def from_projectors(cls, chart: Chart, projectors: Sequence[Projector]) -> "ChartPath":
        coords = np.array([real_coordinates(chart, p) for p in projectors])
        grid = np.linspace(0.0, 1.0, len(projectors))
        return cls(chart, CubicSpline(grid, coords, axis=0))

    def point(self, u: float) -> np.ndarray:
        return np.asarray(self.spline(u), dtype=float)

    def velocity(self, u: float) -> np.ndarray:
        return np.asarray(self.spline(u, 1), dtype=float)


@dataclass(frozen=True, eq=False)
class PairPath:
    """u -> (y(u), x(u)) in the pair space, target first."""

    target: ChartPath
    source: ChartPath

    def point(self, u: float) -> np.ndarray:
        return np.concatenate([self.target.point(u), self.source.point(u)])

    def velocity(self, u: float) -> np.ndarray:
        return np.concatenate([self.target.velocity(u), self.source.velocity(u)])


# -- path-ordered exponentials ----------------------------------------------------

def line_generator(field: Form, path) -> Callable[[float], np.ndarray]:
    """u -> field(path(u), path'(u))."""
    return lambda u: field(path.point(u), path.velocity(u))


def _tabulate(generator: Callable[[float], np.ndarray], steps: int, threads: int = 1) -> np.ndarray:
    """Generator on the half-step nodes u_j = j / (2 steps)."""
    nodes = np.linspace(0.0, 1.0, 2 * steps + 1)
    return np.array(parallel_map(lambda u: np.asarray(generator(u), dtype=complex), nodes, threads))


def _check_determinant(u: float, matrix: np.ndarray, floor: float):
    det = abs(np.linalg.det(matrix))
    if det < floor:
        raise DeterminantCollapse(f"path-ordered exponential lost invertibility at u={u:.6f}, |det|={det:.3e}")


def _rk4(rhs: Callable, state: Tuple[np.ndarray, ...], steps: int, floor: float,
         record: bool = False) -> Tuple[Tuple[np.ndarray, ...], List[Tuple[np.ndarray, ...]]]:
    """Fixed-step RK4; rhs(j, state) is the derivative at half-step node j."""
    h = 1.0 / steps
    history = [state] if record else []

    def shifted(base, c, slope):
        return tuple(a + c * b for a, b in zip(base, slope))

    for k in range(steps):
        j = 2 * k
        k1 = rhs(j, state)
        k2 = rhs(j + 1, shifted(state, 0.5 * h, k1))
        k3 = rhs(j + 1, shifted(state, 0.5 * h, k2))
        k4 = rhs(j + 2, shifted(state, h, k3))
        state = tuple(s + (h / 6.0) * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4))
        _check_determinant((k + 1) * h, state[0], floor)
        if record:
            history.append(state)
    return state, history


def path_ordered_exp(field: Union[Form, Callable[[float], np.ndarray]], path=None, steps: int = DEFAULT_STEPS,
                     threads: int = 1, determinant_floor: float = DEFAULT_DETERMINANT_FLOOR) -> np.ndarray:
    """
    Solution at u = 1 of dU/du = -M(u) U, U(0) = 1.

    With a path, M(u) = field(path(u), path'(u)); otherwise field is u -> M(u).
    """
    generator = line_generator(field, path) if path is not None else field
    table = _tabulate(generator, steps, threads)
    (result,), _ = _rk4(lambda j, s: (-table[j] @ s[0],), (np.eye(table.shape[-1], dtype=complex),),
                        steps, determinant_floor)
    return result


def ordered_exponentials(table: np.ndarray,
                         determinant_floor: float = DEFAULT_DETERMINANT_FLOOR) -> np.ndarray:
    """U at every grid node for a generator tabulated on the 2 steps + 1 half-step nodes of [0, 1]."""
    steps = (len(table) - 1) // 2
    _, history = _rk4(lambda j, s: (-table[j] @ s[0],), (np.eye(table.shape[-1], dtype=complex),),
                      steps, determinant_floor, record=True)
    return np.array([s[0] for s in history])


# -- lifts ------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HolonomyResult:
    """
    A lifted arrow with the data needed to compose it.

    `gauge` holds G(0), G(1) with t(h) g = G(1) Pexp(A along the target) G(0)^-1.
    """

    arrow: Arrow2
    start: Skeleton
    end: Skeleton
    gauge: Tuple[np.ndarray, np.ndarray]
    path_samples: Tuple[Arrow2, ...] = ()
    chart_trace: Tuple[str, ...] = ()
    diagnostics: Dict = field(default_factory=dict)

    @property
    def module(self) -> CrossedModule:
        return self.arrow.module

    def to_dict(self) -> Dict:
        return {
            "arrow": self.arrow.to_dict(),
            "chart_trace": list(self.chart_trace),
            "diagnostics": dict(self.diagnostics),
        }


def identity_holonomy(module: CrossedModule, skeleton: Skeleton, gauge: Optional[np.ndarray] = None,
                      chart: Optional[Chart] = None) -> HolonomyResult:
    gauge = np.eye(module.m, dtype=complex) if gauge is None else gauge
    return HolonomyResult(Arrow2.identity(module), skeleton, skeleton, (gauge, gauge),
                          chart_trace=(chart.label,) if chart else ())


def _elementary_pair(gamma: PseudoSurface) -> Tuple[List[Projector], List[Projector]]:
    targets, sources = [], []
    for k, skeleton in enumerate(gamma.samples):
        if len(skeleton) > 2:
            raise NotElementary(f"skeleton of length {len(skeleton)} at u={k / gamma.N:.6f}")
        targets.append(skeleton.target)
        sources.append(skeleton.source)
    return targets, sources


def _scaled_steps(steps: int, fraction: float) -> int:
    return max(MIN_PIECE_STEPS, int(round(steps * fraction)))


def lift_elementary(connection: GaugeConnection, gamma: PseudoSurface, chart: Chart,
                    steps: int = DEFAULT_STEPS, threads: int = 1, record_path: bool = False,
                    determinant_floor: float = DEFAULT_DETERMINANT_FLOOR) -> HolonomyResult:
    """
    Path-ordered exponential of eta_bar = A + eta along u -> (y(u), x(u)).

    The joint exponential in the representation is read back as (h, g). The
    split route integrates dg = -A(x) g together with dk = -alpha_{g^-1}(eta) k
    and recombines h = alpha_{g(1)}(k(1)); its distance to the joint arrow is
    reported as `split_residual`.
    """
    cm = connection.module
    targets, sources = _elementary_pair(gamma)
    pair = PairPath(ChartPath.from_projectors(chart, targets), ChartPath.from_projectors(chart, sources))
    d = chart.coord_dim

    eta_bar = connection.eta_bar_form(chart)
    a_form = connection.a_form(chart)
    eta_form = connection.eta_form(chart)

    def fields(u):
        pt, v = pair.point(u), pair.velocity(u)
        return eta_bar(pt, v), a_form(pt[d:], v[d:]), eta_form(pt, v), a_form(pt[:d], v[:d])

    nodes = np.linspace(0.0, 1.0, 2 * steps + 1)
    table = parallel_map(fields, nodes, threads)
    joint_table = np.array([row[0] for row in table])
    a_table = np.array([row[1] for row in table])
    eta_table = np.array([row[2] for row in table])
    target_a_table = np.array([row[3] for row in table])

    (joint,), history = _rk4(lambda j, s: (-joint_table[j] @ s[0],), (np.eye(cm.rep_dim, dtype=complex),),
                             steps, determinant_floor, record_path)

    def split_rhs(j, state):
        g, k = state
        return -a_table[j] @ g, -cm.alpha(np.linalg.inv(g), eta_table[j]) @ k

    (g_split, k_split), _ = _rk4(split_rhs, (cm.g_identity(), cm.h_identity()), steps, determinant_floor)
    (target_hol,), _ = _rk4(lambda j, s: (-target_a_table[j] @ s[0],), (cm.g_identity(),), steps,
                            determinant_floor)

    arrow = Arrow2.from_rep(cm, joint)
    split = Arrow2(cm.alpha(g_split, k_split), g_split, cm)
    gauge = (connection.boundary_gauge(chart, targets[0], sources[0]),
             connection.boundary_gauge(chart, targets[-1], sources[-1]))
    expected_target = gauge[1] @ target_hol @ np.linalg.inv(gauge[0])
    diagnostics = {
        "split_residual": arrow_gap(arrow, split),
        "source_residual": frobenius_gap(arrow.source(), g_split),
        "target_residual": frobenius_gap(arrow.target(), expected_target),
        "steps": steps,
    }
    logger.debug(f"Lift in chart {chart.label}: split {diagnostics['split_residual']:.2e}, "
                 f"target {diagnostics['target_residual']:.2e}")
    samples = tuple(Arrow2.from_rep(cm, s[0]) for s in history)
    return HolonomyResult(arrow, gamma.samples[0], gamma.samples[-1], gauge, samples, (chart.label,), diagnostics)


# -- composition ---------------------------------------------------------------------

def whisker(result: HolonomyResult, left: np.ndarray, right: np.ndarray) -> HolonomyResult:
    """(e, left) . result . (e, right), with the target gauge carried along."""
    cm = result.module
    arrow = horizontal_compose(horizontal_compose(Arrow2.identity(cm, left), result.arrow), Arrow2.identity(cm, right))
    g0, g1 = result.gauge
    gauge = (np.linalg.inv(right) @ g0 @ right, left @ g1 @ np.linalg.inv(left))
    return replace(result, arrow=arrow, gauge=gauge)


def hol_compose_horizontal(first: HolonomyResult, second: HolonomyResult,
                           tol: float = 1e-9) -> HolonomyResult:
    """Lift of first followed by second in u: second . first."""
    if not skeletons_equal(first.end, second.start, tol):
        raise CompositionMismatch("end skeleton of the first lift differs from the start of the second", u=1.0)
    arrow = horizontal_compose(second.arrow, first.arrow)
    diagnostics = _merge_diagnostics(first.diagnostics, second.diagnostics)
    return HolonomyResult(arrow, first.start, second.end, (first.gauge[0], second.gauge[1]),
                          chart_trace=first.chart_trace + second.chart_trace, diagnostics=diagnostics)


def hol_compose_vertical(upper: HolonomyResult, lower: HolonomyResult,
                         rtol: Optional[float] = None) -> HolonomyResult:
    """upper o lower, with the upper lift whiskered by the target gauge of the lower one."""
    g0, g1 = lower.gauge
    shifted = whisker(upper, g1, np.linalg.inv(g0))
    residual = frobenius_gap(shifted.arrow.source(), lower.arrow.target())
    arrow = vertical_compose(shifted.arrow, lower.arrow, rtol)
    start = Skeleton(upper.start.projectors + lower.start.projectors[1:])
    end = Skeleton(upper.end.projectors + lower.end.projectors[1:])
    gauge = (g0 @ upper.gauge[0], g1 @ upper.gauge[1])
    diagnostics = _merge_diagnostics(lower.diagnostics, upper.diagnostics)
    diagnostics["vertical_residual"] = max(residual, diagnostics.get("vertical_residual", 0.0))
    return HolonomyResult(arrow, start, end, gauge, chart_trace=lower.chart_trace + upper.chart_trace,
                          diagnostics=diagnostics)


def _merge_diagnostics(a: Dict, b: Dict) -> Dict:
    merged = {}
    for key in set(a) | set(b):
        values = [d[key] for d in (a, b) if isinstance(d.get(key), (int, float))]
        if values:
            merged[key] = max(values)
    return merged


def _join_across(a: HolonomyResult, b: HolonomyResult, q: Arrow2, exact: Arrow2) -> HolonomyResult:
    """b . q^-1 . a, reporting the distance to the join through `exact`."""
    arrow = horizontal_compose(horizontal_compose(b.arrow, horizontal_inverse(q)), a.arrow)
    reference = horizontal_compose(horizontal_compose(b.arrow, horizontal_inverse(exact)), a.arrow)
    diagnostics = _merge_diagnostics(a.diagnostics, b.diagnostics)
    defect = arrow_gap(arrow, reference)
    diagnostics["seam_defect"] = max(defect, diagnostics.get("seam_defect", 0.0))
    return HolonomyResult(arrow, a.start, b.end, (a.gauge[0], b.gauge[1]),
                          chart_trace=a.chart_trace + b.chart_trace, diagnostics=diagnostics)


def transition_stack(data: TransitionData, i: Chart, j: Chart, skeleton: Skeleton) -> Arrow2:
    """Vertical composite of the level transition arrows (h^ij(P_k+1, P_k), g^ij(P_k))."""
    projectors = skeleton.projectors
    if len(projectors) == 1:
        return Arrow2.identity(data.module, data.g_ij(i, j, projectors[0]))
    arrow = None
    for upper, lower in reversed(list(zip(projectors[:-1], projectors[1:]))):
        level = transition_arrow(data, i, j, upper, lower)
        arrow = level if arrow is None else vertical_compose(level, arrow, rtol=1e-6)
    return arrow


def cross_chart_horizontal(connection: GaugeConnection, i: Chart, j: Chart, a: HolonomyResult,
                           b: HolonomyResult, x_star: Projector, y_star: Projector) -> HolonomyResult:
    """
    Join a lift a in chart i to a lift b in chart j through (h^ij(y*, x*), g^ij(x*)).

    `seam_defect` compares against the join through (e, g^ij(x*)), which is how
    the representation of eta_bar changes chart.
    """
    data = connection.transitions()
    q = transition_arrow(data, i, j, y_star, x_star)
    exact = Arrow2.identity(data.module, data.g_ij(i, j, x_star))
    return _join_across(a, b, q, exact)


def cross_chart_triple(connection: GaugeConnection, i: Chart, j: Chart, k: Chart, a: HolonomyResult,
                       bc: HolonomyResult, x_star: Projector, y_star: Projector,
                       data: Optional[TransitionData] = None) -> HolonomyResult:
    """Join through (h^ik(y*, x*) h^ijk(x*), g^ij(x*) g^jk(x*)) at a triple-overlap branching point."""
    data = data or connection.transitions()
    cm = data.module
    q = Arrow2(cm.as_h(data.h_ij(i, k, y_star, x_star)) @ cm.as_h(data.h_ijk(i, j, k, x_star)),
               data.g_ij(i, j, x_star) @ data.g_ij(j, k, x_star), cm)
    exact = Arrow2.identity(cm, data.g_ij(i, k, x_star))
    return _join_across(a, bc, q, exact)


def triple_transition_arrow(data: TransitionData, i: Chart, j: Chart, k: Chart,
                            y: Projector, x: Projector) -> Arrow2:
    cm = data.module
    return Arrow2(cm.as_h(data.h_ij(i, k, y, x)) @ cm.as_h(data.h_ijk(i, j, k, x)),
                  data.g_ij(i, j, x) @ data.g_ij(j, k, x), cm)


def _correction_holonomy(connection: GaugeConnection, i: Chart, j: Chart, boundary: Sequence[Projector],
                         steps: int, threads: int) -> HolonomyResult:
    """(P-exp of alpha_{g^ij}(eta^ij), P-exp of A^i) along the shared boundary."""
    cm = connection.module
    data = connection.transitions()
    path = ChartPath.from_projectors(i, boundary)
    a_form = connection.a_form(i)
    eta_ij = connection.eta_ij_form(i, j)

    def fields(u):
        pt, v = path.point(u), path.velocity(u)
        g = data.g_ij(i, j, projector_from_real(i, pt))
        return cm.alpha(g, eta_ij(pt, v)), a_form(pt, v)

    nodes = np.linspace(0.0, 1.0, 2 * steps + 1)
    table = parallel_map(fields, nodes, threads)
    h_table = np.array([row[0] for row in table])
    a_table = np.array([row[1] for row in table])
    (h_hol,), _ = _rk4(lambda k, s: (-h_table[k] @ s[0],), (cm.h_identity(),), steps, DEFAULT_DETERMINANT_FLOOR)
    (g_hol,), _ = _rk4(lambda k, s: (-a_table[k] @ s[0],), (cm.g_identity(),), steps, DEFAULT_DETERMINANT_FLOOR)
    ident = np.eye(cm.m, dtype=complex)
    return HolonomyResult(Arrow2(h_hol, g_hol, cm), Skeleton((boundary[0],)), Skeleton((boundary[-1],)),
                          (ident, ident), chart_trace=(i.label,))


def cross_chart_vertical(connection: GaugeConnection, i: Chart, j: Chart, a: HolonomyResult, b: HolonomyResult,
                         boundary: Sequence[Projector], steps: int = DEFAULT_STEPS, threads: int = 1,
                         rtol: float = DEFAULT_SEAM_TOL) -> HolonomyResult:
    """
    b (chart j) stacked on a (chart i) along the shared boundary C*.

    The chart-i part is corrected by (P-exp alpha_{g^ij}(eta^ij), P-exp A^i) along C*,
    conjugated into chart j by g^ij at the ends of C*, then composed with b.
    """
    data = connection.transitions()
    mid = a
    if i != j:
        correction = _correction_holonomy(connection, i, j, boundary, steps, threads)
        mid = hol_compose_vertical(correction, a, rtol)
        mid = whisker(mid, np.linalg.inv(data.g_ij(i, j, boundary[-1])), data.g_ij(i, j, boundary[0]))
    g0, g1 = mid.gauge
    shifted = whisker(b, g1, np.linalg.inv(g0))
    residual = frobenius_gap(shifted.arrow.source(), mid.arrow.target())
    logger.info(f"Vertical chart crossing {i.label}->{j.label}: endpoint residual {residual:.2e}")
    result = hol_compose_vertical(b, mid, rtol)
    diagnostics = dict(result.diagnostics)
    diagnostics["endpoint_residual"] = residual
    return replace(result, diagnostics=diagnostics)


# -- abelian surface reduction ------------------------------------------------------

def _check_linkability_hypotheses(targets: Sequence[Projector], sources: Sequence[Projector], margin: float):
    grid = np.linspace(0.0, 1.0, len(targets))
    for u, y, x in zip(grid, targets, sources):
        if not linkable(y, sources[-1], margin):
            raise LinkabilityHypothesisFailed(f"y(u) is not linkable to x(1) at u={u:.6f}")
        if not linkable(x, targets[0], margin):
            raise LinkabilityHypothesisFailed(f"x(u) is not linkable to y(0) at u={u:.6f}")


def _segment_integral(form: Form, point: Callable, velocity: Callable, pieces: int) -> np.ndarray:
    """Line integral over [0, 1] of form(point(s), velocity(s)), composite Gauss-Legendre."""
    line = Form(1, lambda s, w: form(point(float(s[0])), velocity(float(s[0])) * w[0]))
    edges = np.linspace(0.0, 1.0, pieces + 1)
    return sum(de_rham(line, (np.array([a]), np.array([b]))) for a, b in zip(edges[:-1], edges[1:]))


def _surface_integral(form: Form, tri: Triangulation, rule: str, threads: int) -> np.ndarray:
    values = parallel_map(lambda t: de_rham(form, tri.points(t), rule), tri.triangles, threads)
    return sum(values)


def abelian_surface_terms(connection: GaugeConnection, gamma: PseudoSurface, chart: Chart,
                          cell: float = DEFAULT_SURFACE_CELL, rule: str = "barycentric3",
                          threads: int = 1, margin: float = DEFAULT_LINK_MARGIN) -> Dict:
    """
    Surface integrals of the abelian reduction of an impervious elementary lift.

    The second-kind surface is (a, u) -> (y(a u), x(u)), whose boundary runs along
    the lifted pair path, along (y(s), x(1)) and along (y(0), x(u)). The first-kind
    surface is the ruled surface (s, u) -> (1 - s) x(u) + s y(u) between the
    boundary curves in chart coordinates.
    """
    cm = connection.module
    if not cm.is_abelian:
        raise NotAbelian(f"surface reduction needs an abelian H, got {cm.kind.value} with m={cm.m}")
    first, last = gamma.samples[0], gamma.samples[-1]
    if len(first) != 1 or len(last) != 1:
        raise NotElementary("surface reduction needs an impervious pseudosurface (identity skeletons at both ends)")
    targets, sources = _elementary_pair(gamma)
    _check_linkability_hypotheses(targets, sources, margin)
    y_path = ChartPath.from_projectors(chart, targets)
    x_path = ChartPath.from_projectors(chart, sources)
    d = chart.coord_dim
    pieces = max(1, int(round(1.0 / cell)))
    tri = Triangulation.rectangle(cell)

    def second_kind(point):
        a, u = point
        return np.concatenate([y_path.point(a * u), x_path.point(u)])

    def d_second_kind(point, w):
        a, u = point
        dy = y_path.velocity(a * u) * (u * w[0] + a * w[1])
        return np.concatenate([dy, x_path.velocity(u) * w[1]])

    b_ns = connection.curving_ns_form(chart).pullback(second_kind, d_second_kind, 2)
    surface_second = _surface_integral(b_ns, tri, rule, threads)

    eta = connection.eta_form(chart)
    x_end, y_start = x_path.point(1.0), y_path.point(0.0)
    top = _segment_integral(eta, lambda s: np.concatenate([y_path.point(s), x_end]),
                            lambda s: np.concatenate([y_path.velocity(s), np.zeros(d)]), pieces)
    left = _segment_integral(eta, lambda u: np.concatenate([y_start, x_path.point(u)]),
                             lambda u: np.concatenate([np.zeros(d), x_path.velocity(u)]), pieces)

    def ruled(point):
        s, u = point
        return (1.0 - s) * x_path.point(u) + s * y_path.point(u)

    def d_ruled(point, w):
        s, u = point
        return (y_path.point(u) - x_path.point(u)) * w[0] \
            + ((1.0 - s) * x_path.velocity(u) + s * y_path.velocity(u)) * w[1]

    surface_first = _surface_integral(connection.b_sph_form(chart).pullback(ruled, d_ruled, 2), tri, rule, threads)
    curvature_first = _surface_integral(connection.fake_curvature_form(chart).pullback(ruled, d_ruled, 2),
                                        tri, rule, threads)
    boundary = top + left
    return {
        "surface_second_kind": surface_second,
        "boundary_terms": boundary,
        "surface_first_kind": surface_first,
        "fake_curvature_first_kind": curvature_first,
        "first_kind_gap": frobenius_gap(cm.t_lie(boundary), curvature_first + cm.t_lie(surface_first)),
        "epsilon": tri.epsilon,
    }


def abelian_surface_holonomy(connection: GaugeConnection, gamma: PseudoSurface, chart: Chart,
                             cell: float = DEFAULT_SURFACE_CELL, rule: str = "barycentric3",
                             boundary: str = "line", steps: int = DEFAULT_STEPS, threads: int = 1) -> Arrow2:
    """
    (e^{-(surface + boundary)}, P-exp of A along the source).

    boundary="line" integrates eta along the two closing edges of the second-kind
    surface; boundary="first_kind" replaces them by the B_sph flux through the
    first-kind surface, which is exact when the fake curvature vanishes there.
    """
    cm = connection.module
    terms = abelian_surface_terms(connection, gamma, chart, cell, rule, threads)
    if boundary == "line":
        exponent = terms["surface_second_kind"] + terms["boundary_terms"]
    elif boundary == "first_kind":
        exponent = terms["surface_second_kind"] + terms["surface_first_kind"]
    else:
        raise ValueError(f"unknown boundary treatment {boundary!r}")
    _, sources = _elementary_pair(gamma)
    g = path_ordered_exp(connection.a_form(chart), ChartPath.from_projectors(chart, sources), steps, threads)
    return Arrow2(mat_exp(-cm.as_h(exponent)), g, cm)


def abelian_refinement(connection: GaugeConnection, gamma: PseudoSurface, chart: Chart,
                       cells: Sequence[float] = (0.25, 0.125, 0.0625), rule: str = "barycentric3",
                       steps: int = DEFAULT_STEPS, threads: int = 1) -> Dict:
    """Distance between the surface h-part and the lifted h-part over mesh refinements."""
    lifted = lift_elementary(connection, gamma, chart, steps, threads)
    epsilons, residuals = [], []
    for cell in cells:
        arrow = abelian_surface_holonomy(connection, gamma, chart, cell, rule, "line", steps, threads)
        epsilons.append(Triangulation.rectangle(cell).epsilon)
        residuals.append(frobenius_gap(arrow.h, lifted.arrow.h))
    order = fit_slope(epsilons, residuals) if max(residuals) > 0.0 else float("nan")
    logger.info(f"Abelian surface reduction: residuals {', '.join(f'{r:.2e}' for r in residuals)}, order {order:.2f}")
    return {"epsilons": epsilons, "residuals": residuals, "order": order,
            "rows": refinement_rows(epsilons, residuals, order)}


# -- general pseudosurfaces -----------------------------------------------------------

def _levels(gamma: PseudoSurface) -> List[List[Projector]]:
    """Skeletons padded to a common length by repeating the source; index 0 is the source level."""
    depth = max(len(s) for s in gamma.samples)
    rows = []
    for skeleton in gamma.samples:
        bottom_up = list(reversed(skeleton.projectors))
        rows.append([bottom_up[0]] * (depth - len(bottom_up)) + bottom_up)
    return [[row[level] for row in rows] for level in range(depth)]


def _covering(skeleton: Skeleton, charts: Sequence[Chart], margin: float) -> List[Chart]:
    found = [c for c in charts if all(chart_margin(c, p) > margin for p in skeleton)]
    if found:
        return found
    return [c for c in charts if all(chart_margin(c, p) > DEFAULT_CHART_TOL for p in skeleton)]


def _chart_runs(gamma: PseudoSurface, charts: Sequence[Chart], margin: float) -> List[Tuple[Chart, int, int]]:
    """Pieces (chart, start, stop) with seams at the midpoint of each overlap."""
    covers = []
    for k, skeleton in enumerate(gamma.samples):
        cover = _covering(skeleton, charts, margin)
        if not cover:
            u = k / gamma.N
            raise NoChartCover(f"no chart covers the skeleton at u={u:.6f}", u=u)
        covers.append(cover)

    def reach(chart, start):
        k = start
        while k + 1 <= gamma.N and chart in covers[k + 1]:
            k += 1
        return k

    def best(candidates, start):
        return max(candidates, key=lambda c: (reach(c, start), min(chart_margin(c, p) for p in gamma.samples[start])))

    runs = []
    start = 0
    chart = best(covers[0], 0)
    while True:
        end = reach(chart, start)
        if end >= gamma.N:
            runs.append((chart, start, gamma.N))
            return runs
        candidates = [c for c in covers[end] if c in covers[end + 1]]
        if not candidates:
            u = (end + 1) / gamma.N
            raise NoChartCover(f"no chart overlap to continue past u={end / gamma.N:.6f}", u=u)
        following = best(candidates, end)
        overlap_start = end
        while overlap_start - 1 >= start and following in covers[overlap_start - 1]:
            overlap_start -= 1
        seam = (overlap_start + end) // 2
        runs.append((chart, start, seam))
        start, chart = seam, following


def _level_surface(levels: List[List[Projector]], level: int, start: int, stop: int) -> PseudoSurface:
    upper, lower = levels[level + 1], levels[level]
    return PseudoSurface(tuple(Skeleton((upper[k], lower[k])) for k in range(start, stop + 1)))


def _lift_piece(connection: GaugeConnection, gamma: PseudoSurface, levels: List[List[Projector]], chart: Chart,
                start: int, stop: int, steps: int, threads: int, vertical_tol: float) -> HolonomyResult:
    cm = connection.module
    if stop == start:
        skeleton = gamma.samples[start]
        gauge = np.eye(cm.m, dtype=complex)
        for level in range(len(levels) - 1):
            gauge = gauge @ connection.boundary_gauge(chart, levels[level + 1][start], levels[level][start])
        return identity_holonomy(cm, skeleton, gauge, chart)
    piece_steps = _scaled_steps(steps, (stop - start) / gamma.N)
    if len(levels) == 1:
        surface = PseudoSurface(tuple(Skeleton((levels[0][k],)) for k in range(start, stop + 1)))
        return lift_elementary(connection, surface, chart, piece_steps, threads)
    stack = None
    for level in range(len(levels) - 1):
        lifted = lift_elementary(connection, _level_surface(levels, level, start, stop), chart, piece_steps, threads)
        stack = lifted if stack is None else hol_compose_vertical(lifted, stack, vertical_tol)
    return replace(stack, start=gamma.samples[start], end=gamma.samples[stop], chart_trace=(chart.label,))


def lift_pseudosurface(connection: GaugeConnection, gamma: PseudoSurface, charts: Optional[Sequence[Chart]] = None,
                       resolution: Optional[int] = None, steps: int = DEFAULT_STEPS, threads: int = 1,
                       cover_margin: float = DEFAULT_COVER_MARGIN, vertical_tol: float = DEFAULT_SEAM_TOL) -> HolonomyResult:
    """
    Lift of an arbitrary pseudosurface.

    The skeleton levels are stacked vertically inside each chart run and the runs
    are joined horizontally through the stacked transition arrows.
    """
    data = connection.transitions()
    charts = list(charts) if charts is not None else list(data.charts)
    if resolution is not None:
        gamma = gamma.resampled(resolution)
    runs = _chart_runs(gamma, charts, cover_margin)
    levels = _levels(gamma)
    pieces = parallel_map(
        lambda run: _lift_piece(connection, gamma, levels, run[0], run[1], run[2], steps, 1, vertical_tol),
        runs, threads)

    result = pieces[0]
    seams = []
    for (prev_chart, _, seam), (chart, _, _), piece in zip(runs[:-1], runs[1:], pieces[1:]):
        skeleton = gamma.samples[seam]
        q = transition_stack(data, prev_chart, chart, skeleton)
        exact = Arrow2.identity(data.module, data.g_ij(prev_chart, chart, skeleton.source))
        result = _join_across(result, piece, q, exact)
        seams.append(seam / gamma.N)
    diagnostics = dict(result.diagnostics)
    diagnostics["seams"] = seams
    diagnostics["pieces"] = len(runs)
    logger.info(f"Lifted pseudosurface over charts {' -> '.join(r[0].label for r in runs)}, seams {seams}")
    return replace(result, diagnostics=diagnostics)


def seam_shift_experiment(connection: GaugeConnection, gamma: PseudoSurface, i: Chart, j: Chart,
                          seams: Sequence[int], steps: int = DEFAULT_STEPS, threads: int = 1) -> Dict:
    """Join lifts in charts i and j at two seam samples and measure the change of the arrow."""
    if len(seams) != 2:
        raise ValueError("the seam-shift experiment compares exactly two seams")
    results = []
    for seam in seams:
        if not 0 < seam < gamma.N:
            raise ValueError(f"seam index {seam} outside 1..{gamma.N - 1}")
        a = lift_elementary(connection, gamma.restricted(0, seam), i, _scaled_steps(steps, seam / gamma.N), threads)
        b = lift_elementary(connection, gamma.restricted(seam, gamma.N), j,
                            _scaled_steps(steps, 1.0 - seam / gamma.N), threads)
        skeleton = gamma.samples[seam]
        results.append(cross_chart_horizontal(connection, i, j, a, b, skeleton.source, skeleton.target))
    defect = arrow_gap(results[0].arrow, results[1].arrow)
    separation = abs(seams[1] - seams[0]) / gamma.N
    logger.info(f"Seam shift by {separation:.4f}: arrows differ by {defect:.2e}")
    return {"separation": separation, "defect": defect,
            "seam_defects": [r.diagnostics["seam_defect"] for r in results]}
