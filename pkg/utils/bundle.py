"""
Local trivializations and transition functions of the Stiefel 2-bundle.

Over a chart U^I the trivialization is phi^I(P, g) = Z0^I(P) g. Since
Z0^J = Z0^I (Z0^I[J, :])^-1 on an overlap, the G-transition function is
g^IJ(P) = (Z0^I[J, :])^-1, which is affine-rational in the chart coordinates
and differentiated exactly.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.common import frobenius_gap, max_or_zero, parallel_map, sample_rng
from utils.crossed_module import Arrow2, CrossedModule, ModuleKind, horizontal_compose
from utils.errors import NotLinkable, OutOfChart
from utils.grassmann import (
    DEFAULT_CHART_TOL,
    DEFAULT_LINK_MARGIN,
    Chart,
    Projector,
    all_charts,
    chart_margin,
    charts_for,
    coordinate_matrix,
    embed_displacement,
    fs_distance,
    linkable,
    projector_from_frame,
    random_projector,
    random_projector_near,
)
from utils.two_space import MorphismM

# Configure logging
logger = logging.getLogger(__name__)

SAMPLE_CHART_MARGIN = 0.15
SAMPLE_PAIR_RADIUS = 0.6
MAX_SAMPLE_RETRIES = 50

IDENTITY_NAMES = [
    "g_ii",
    "g_ji",
    "h_relation",
    "h_ii",
    "h_cocycle",
    "h_quadruple",
    "g_cocycle",
    "h_iji",
]


def _require_chart(chart: Chart, p: Projector):
    if chart_margin(chart, p) < DEFAULT_CHART_TOL:
        raise OutOfChart(f"projector not covered by chart {chart.label}", chart)


def phi(chart: Chart, p: Projector, g) -> np.ndarray:
    """Local trivialization (P, g) -> Z0(P) g."""
    return coordinate_matrix(chart, p) @ np.asarray(g, dtype=complex).reshape(p.rank, p.rank)


def phi_bar(chart: Chart, z) -> Tuple[Projector, np.ndarray]:
    """Inverse trivialization: the projector of Z and the group part (Z0^dag Z0)^-1 Z0^dag Z."""
    p = projector_from_frame(z)
    z0 = coordinate_matrix(chart, p)
    g = np.linalg.solve(z0.conj().T @ z0, z0.conj().T @ np.asarray(z, dtype=complex).reshape(z0.shape))
    return p, g


def _transition_block(i: Chart, j: Chart, p: Projector) -> np.ndarray:
    _require_chart(j, p)
    return coordinate_matrix(i, p)[list(j.index_set), :]


def g_transition(i: Chart, j: Chart, p: Projector) -> np.ndarray:
    """G-transition function g^ij(P) with Z0^j = Z0^i g^ij."""
    if i == j:
        _require_chart(i, p)
        return np.eye(p.rank, dtype=complex)
    return np.linalg.inv(_transition_block(i, j, p))


def g_transition_derivative(i: Chart, j: Chart, p: Projector, dxi) -> np.ndarray:
    """Exact derivative of g^ij along a chart-i coordinate displacement."""
    if i == j:
        return np.zeros((p.rank, p.rank), dtype=complex)
    b_inv = np.linalg.inv(_transition_block(i, j, p))
    db = embed_displacement(i, dxi)[list(j.index_set), :]
    return -b_inv @ db @ b_inv


def transform_displacement(i: Chart, j: Chart, p: Projector, dxi) -> np.ndarray:
    """Chart-j coordinate displacement of the chart-i displacement dxi at P."""
    if i == j:
        return np.asarray(dxi, dtype=complex).reshape(i.coord_shape)
    z0 = coordinate_matrix(i, p)
    g = g_transition(i, j, p)
    dz = embed_displacement(i, dxi) @ g + z0 @ g_transition_derivative(i, j, p, dxi)
    return dz[list(j.complement), :]


def h_transition(i: Chart, j: Chart, q: Projector, p: Projector,
                 margin: float = DEFAULT_LINK_MARGIN) -> np.ndarray:
    """H-transition function h^ij(Q, P) = g^ij(Q) g^ij(P)^-1 of the Stiefel instance."""
    if not linkable(q, p, margin):
        distance = fs_distance(q, p)
        raise NotLinkable(f"h^{i.label}{j.label} needs linkable projectors, distance {distance:.6f}",
                          distance=distance)
    if i == j:
        _require_chart(i, q)
        _require_chart(i, p)
        return np.eye(p.rank, dtype=complex)
    return g_transition(i, j, q) @ g_transition(j, i, p)


def two_transition(i: Chart, j: Chart, k: Chart, p: Projector,
                   module: Optional[CrossedModule] = None) -> np.ndarray:
    """t-preimage of g^ik (g^ij g^jk)^-1."""
    module = module or CrossedModule(p.rank)
    defect = g_transition(i, k, p) @ np.linalg.inv(g_transition(i, j, p) @ g_transition(j, k, p))
    return module.t_preimage(defect)


@dataclass(frozen=True)
class TransitionData:
    """Transition functions of a 2-bundle over a list of charts."""

    module: CrossedModule
    charts: Tuple[Chart, ...]
    g_ij: Callable[[Chart, Chart, Projector], np.ndarray]
    h_ij: Callable[[Chart, Chart, Projector, Projector], np.ndarray]
    h_ijk: Callable[[Chart, Chart, Chart, Projector], np.ndarray]
    k_i: Callable[[Chart, Projector], np.ndarray]
    name: str = "stiefel"

    @classmethod
    def stiefel(cls, n: int, m: int, module: Optional[CrossedModule] = None) -> "TransitionData":
        module = module or CrossedModule(m)
        if module.m != m or (module.kind != ModuleKind.GL_ADJ and m != 1):
            raise ValueError("the Stiefel bundle needs GL_ADJ of matching size (CENTRAL only for m=1)")
        return cls(
            module=module,
            charts=tuple(all_charts(n, m)),
            g_ij=g_transition,
            h_ij=lambda i, j, q, p: h_transition(i, j, q, p),
            h_ijk=lambda i, j, k, p: module.h_identity(),
            k_i=lambda i, p: module.h_identity(),
        )

    @property
    def n(self) -> int:
        return self.charts[0].n

    @property
    def m(self) -> int:
        return self.charts[0].m

    def two_transition(self, i: Chart, j: Chart, k: Chart, p: Projector) -> np.ndarray:
        defect = self.g_ij(i, k, p) @ np.linalg.inv(self.g_ij(i, j, p) @ self.g_ij(j, k, p))
        return self.module.t_preimage(defect)

    def with_h_defect(self, defect) -> "TransitionData":
        """Corrupt h^ij for i != j by left multiplication with a fixed H element."""
        defect = self.module.as_h(defect)
        base = self.h_ij

        def corrupted(i, j, q, p):
            h = base(i, j, q, p)
            return h if i == j else defect @ h

        return replace(self, h_ij=corrupted, name=f"{self.name}+h_defect")

    def with_g_defect(self, i: Chart, k: Chart, defect) -> "TransitionData":
        """Replace g^ik by t(d) g^ik (and g^ki by its inverse) for one ordered chart pair."""
        t_defect = self.module.t(self.module.as_h(defect))
        base = self.g_ij

        def corrupted(a, b, p):
            g = base(a, b, p)
            if (a, b) == (i, k):
                return t_defect @ g
            if (a, b) == (k, i):
                return g @ np.linalg.inv(t_defect)
            return g

        return replace(self, g_ij=corrupted, name=f"{self.name}+g_defect")


def transition_arrow(data: TransitionData, i: Chart, j: Chart, y: Projector, x: Projector) -> Arrow2:
    """The arrow q^ij = (h^ij(y, x), g^ij(x))."""
    return Arrow2(data.module.as_h(data.h_ij(i, j, y, x)), data.g_ij(i, j, x), data.module)


def _pick(rng: np.random.Generator, cover: Sequence[Chart], count: int) -> List[Chart]:
    idx = rng.choice(len(cover), size=count, replace=len(cover) < count)
    return [cover[int(a)] for a in idx]


def _sample_point_pair(data: TransitionData, rng: np.random.Generator):
    for _ in range(MAX_SAMPLE_RETRIES):
        x = random_projector(data.n, data.m, rng)
        y = random_projector_near(x, SAMPLE_PAIR_RADIUS, rng)
        cover_x = charts_for(x, data.charts, SAMPLE_CHART_MARGIN)
        cover = [c for c in charts_for(y, cover_x, SAMPLE_CHART_MARGIN)]
        if cover:
            return x, y, cover
    raise OutOfChart("no chart covers a sampled pair after repeated draws")


def _quadruple_point(data: TransitionData, rng: np.random.Generator, x: Projector):
    """A point covered by four charts: x itself, else fresh draws; None when the cover is too small."""
    if len(data.charts) < 4:
        return None, []
    candidate = x
    for _ in range(MAX_SAMPLE_RETRIES):
        cover = charts_for(candidate, data.charts, SAMPLE_CHART_MARGIN)
        if len(cover) >= 4:
            return candidate, cover
        candidate = random_projector(data.n, data.m, rng)
    return None, []


def _sample_identities(data: TransitionData, seed: int, index: int) -> Dict[str, float]:
    rng = sample_rng(seed, index)
    cm = data.module
    x, y, cover = _sample_point_pair(data, rng)
    i, j, k = _pick(rng, cover, 3)
    inv = np.linalg.inv

    g_ij_x = data.g_ij(i, j, x)
    h_ij = cm.as_h(data.h_ij(i, j, y, x))
    h_jk = cm.as_h(data.h_ij(j, k, y, x))
    h_ik = cm.as_h(data.h_ij(i, k, y, x))
    h_ijk_x = cm.as_h(data.h_ijk(i, j, k, x))
    h_ijk_y = cm.as_h(data.h_ijk(i, j, k, y))

    row = {
        "g_ii": frobenius_gap(data.g_ij(i, i, x), cm.t(data.k_i(i, x))),
        "g_ji": frobenius_gap(data.g_ij(j, i, x), cm.t(data.k_i(j, x)) @ inv(g_ij_x) @ cm.t(data.k_i(i, x))),
        "h_relation": frobenius_gap(cm.t(h_ij) @ g_ij_x, data.g_ij(i, j, y)),
        "h_ii": frobenius_gap(cm.as_h(data.h_ij(i, i, y, x)), data.k_i(i, y) @ inv(data.k_i(i, x))),
        "h_cocycle": frobenius_gap(h_ij @ cm.alpha(g_ij_x, h_jk), inv(h_ijk_y) @ h_ik @ h_ijk_x),
        "g_cocycle": frobenius_gap(data.g_ij(i, k, x),
                                   cm.t(h_ijk_x) @ g_ij_x @ data.g_ij(j, k, x)),
    }

    # degenerate pattern h^iji = alpha_{g^ij}(k^j^-1), asserted for the Stiefel instance only
    if data.name == "stiefel":
        row["h_iji"] = frobenius_gap(cm.as_h(data.h_ijk(i, j, i, x)), cm.alpha(g_ij_x, inv(data.k_i(j, x))))
        row["two_transition"] = frobenius_gap(data.two_transition(i, j, k, x), cm.h_identity())

    z, quadruple = _quadruple_point(data, rng, x)
    if z is not None:
        a, b, c, d = _pick(rng, quadruple, 4)
        h_abd = cm.as_h(data.h_ijk(a, b, d, z))
        h_bcd = cm.as_h(data.h_ijk(b, c, d, z))
        h_acd = cm.as_h(data.h_ijk(a, c, d, z))
        h_abc = cm.as_h(data.h_ijk(a, b, c, z))
        row["h_quadruple"] = frobenius_gap(h_abd @ cm.alpha(data.g_ij(a, b, z), h_bcd), h_acd @ h_abc)
    return row


def verify_bundle_identities(data: TransitionData, samples: int, seed: int = 0, threads: int = 1) -> Dict:
    """Max residual of each transition-function identity over seeded samples."""
    rows = parallel_map(lambda k: _sample_identities(data, seed, k), range(samples), threads)
    report = {name: max_or_zero(row[name] for row in rows if name in row) for name in IDENTITY_NAMES}
    report["quadruple_samples"] = sum(1 for row in rows if "h_quadruple" in row)
    if samples and not report["quadruple_samples"]:
        logger.warning(f"No sample of {data.name} (n={data.n}, m={data.m}) is covered by four charts; "
                       f"the quadruple-overlap identity was not exercised")
    report["samples"] = samples
    report["two_transition"] = max_or_zero(row["two_transition"] for row in rows if "two_transition" in row)
    worst = max(report[name] for name in IDENTITY_NAMES)
    logger.info(f"Bundle identities for {data.name} (n={data.n}, m={data.m}): worst residual {worst:.2e}")
    return report


@dataclass(frozen=True, eq=False)
class BundleArrow:
    """An arrow of the Stiefel arrow-bundle in a trivialization: base morphism plus (h, g)."""

    morphism: MorphismM
    arrow: Arrow2


def right_action(h, g, target: Union[np.ndarray, Arrow2, BundleArrow], module: Optional[CrossedModule] = None):
    """Right action of (h, g): frames Z -> Z g, arrows (h_f, g_f) -> (h_f alpha_{g_f}(h), g_f g)."""
    if isinstance(target, BundleArrow):
        return BundleArrow(target.morphism, right_action(h, g, target.arrow))
    if isinstance(target, Arrow2):
        cm = target.module
        return horizontal_compose(target, Arrow2(cm.as_h(h), cm.as_g(g), cm))
    z = np.asarray(target, dtype=complex)
    return z @ np.asarray(g, dtype=complex).reshape(z.shape[1], z.shape[1])
