"""Oriented Riemannian vector bundles presented by charts and frames.

Conventions: a local orthonormal frame ``e`` is a column of sections, the
connection acts on the left (``nabla e = omega e``), and curvature is
``Omega = d(omega) - omega ^ omega``.  A transition ``A`` from chart ``U`` to
chart ``V`` relates the frames by ``f = A e``, so that

    omega_f = dA A^-1 + A omega_e A^-1,    Omega_f = A Omega_e A^-1.

Every chart of one bundle uses the same coordinate names; an overlap is the
intersection of the coordinate boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exprlang import Expr, Var, as_expr, evaluate
from .forms import (
    ChartDomain,
    ChartForm,
    FormError,
    add,
    evaluate_form,
    exterior_derivative,
    grid_points,
    pullback,
    scale,
    wedge,
)
from .pfaffian import SkewFormMatrix

__all__ = [
    "BundleError",
    "FramedBundle",
    "MetricConnection",
    "CurvatureMatrix",
    "curvature",
    "frame_change_check",
    "rotate_frame",
    "perturb_connection",
    "pullback_bundle",
    "direct_sum",
    "product",
    "bianchi_residual",
    "rotation",
    "sup_norm",
]

FormMatrix = list[list[ChartForm]]
ExprMatrix = tuple[tuple[Expr, ...], ...]

OMEGA_TOL = 1e-6
CURVATURE_TOL = 1e-5
SO_TOL = 1e-10


class BundleError(ValueError):
    """An invariant of a bundle or connection failed.

    ``check`` names the failed test and ``point`` is the worst sample point
    (or ``None``).
    """

    def __init__(self, message: str, check: str = "", point=None, residual: float | None = None):
        self.check = check
        self.point = None if point is None else [float(x) for x in np.ravel(point)]
        self.residual = residual
        where = f" at {self.point}" if self.point is not None else ""
        super().__init__(f"{message}{where}")


def rotation(angle) -> ExprMatrix:
    """Counterclockwise frame rotation by ``angle``: ``e1' = c e1 + s e2``, ``e2' = -s e1 + c e2``."""
    from .exprlang import Func

    a = as_expr(angle)
    c, s = Func("cos", a), Func("sin", a)
    return ((c, s), (-s, c))


def sup_norm(form: ChartForm, points: np.ndarray) -> tuple[float, np.ndarray | None]:
    vals = evaluate_form(form, points, check=False)
    if vals.size == 0:
        return 0.0, None
    flat = np.abs(vals).reshape(-1, vals.shape[-1]).max(axis=-1)
    k = int(np.argmax(flat))
    return float(flat[k]), points.reshape(-1, points.shape[-1])[k]


def _zero_matrix(chart: ChartDomain, n: int, degree: int) -> FormMatrix:
    return [[ChartForm.zero(chart, degree) for _ in range(n)] for _ in range(n)]


def _functions(chart: ChartDomain, a: ExprMatrix) -> FormMatrix:
    return [[ChartForm.function(chart, e) for e in row] for row in a]


def matmul(a: FormMatrix, b: FormMatrix) -> FormMatrix:
    n, k, m = len(a), len(b), len(b[0]) if b else 0
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = None
            for t in range(k):
                if a[i][t].is_zero() or b[t][j].is_zero():
                    continue
                w = wedge(a[i][t], b[t][j])
                acc = w if acc is None else add(acc, w)
            if acc is None:
                acc = ChartForm.zero(a[i][0].chart, a[i][0].degree + b[0][j].degree)
            row.append(acc)
        out.append(row)
    return out


def matsub(a: FormMatrix, b: FormMatrix) -> FormMatrix:
    return [[add(x, scale(y, -1.0)) for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def matadd(a: FormMatrix, b: FormMatrix) -> FormMatrix:
    return [[add(x, y) for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def matd(a: FormMatrix) -> FormMatrix:
    return [[exterior_derivative(x) for x in row] for row in a]


def transpose(a: ExprMatrix) -> ExprMatrix:
    return tuple(zip(*a)) if a else ()


def _restrict(a: FormMatrix, chart: ChartDomain) -> FormMatrix:
    return [[x.restrict(chart) for x in row] for row in a]


def _matrix_sup(a: FormMatrix, points) -> tuple[float, np.ndarray | None]:
    worst, where = 0.0, None
    for row in a:
        for x in row:
            r, p = sup_norm(x, points)
            if r > worst:
                worst, where = r, p
    return worst, where


@dataclass
class FramedBundle:
    """Rank, base charts and transition rotations of an oriented bundle."""

    rank: int
    charts: dict[str, ChartDomain]
    principal: str
    transitions: dict[tuple[str, str], ExprMatrix] = field(default_factory=dict)
    samples: int = 6

    def __post_init__(self):
        if self.rank < 0 or self.rank % 2:
            raise BundleError(f"rank must be even, got {self.rank}", "rank")
        if self.principal not in self.charts:
            raise BundleError(f"principal chart {self.principal!r} not among charts", "charts")
        if not self.charts[self.principal].covers:
            raise BundleError(f"principal chart {self.principal!r} must cover the base", "charts")
        coords = self.charts[self.principal].coords
        for name, ch in self.charts.items():
            if ch.coords != coords:
                raise BundleError(f"chart {name!r} uses coordinates {ch.coords}, expected {coords}", "charts")
        self.transitions = {
            k: tuple(tuple(_parse_on(self.charts[self.principal], e) for e in row) for row in a)
            for k, a in self.transitions.items()
        }
        for (u, v), a in self.transitions.items():
            if u not in self.charts or v not in self.charts:
                raise BundleError(f"transition {u}->{v} names an unknown chart", "transition")
            if len(a) != self.rank or any(len(r) != self.rank for r in a):
                raise BundleError(f"transition {u}->{v} is not {self.rank}x{self.rank}", "transition")
            self.check_special_orthogonal(u, v)

    @property
    def base(self) -> ChartDomain:
        return self.charts[self.principal]

    @property
    def coords(self) -> tuple[str, ...]:
        return self.base.coords

    def overlap(self, u: str, v: str) -> ChartDomain:
        try:
            return self.charts[u].intersect(self.charts[v])
        except FormError as exc:
            raise BundleError(str(exc), "overlap") from None

    def overlap_points(self, u: str, v: str) -> np.ndarray:
        return grid_points(self.overlap(u, v), self.samples)

    def transition_values(self, u: str, v: str, points: np.ndarray) -> np.ndarray:
        a = self.transitions[(u, v)]
        env = {c: points[..., k] for k, c in enumerate(self.coords)}
        shape = points.shape[:-1]
        out = np.empty(shape + (self.rank, self.rank))
        for i, row in enumerate(a):
            for j, e in enumerate(row):
                out[..., i, j] = np.broadcast_to(evaluate(e, env), shape)
        return out

    def check_special_orthogonal(self, u: str, v: str) -> float:
        pts = self.overlap_points(u, v)
        flat = pts.reshape(-1, pts.shape[-1])
        a = self.transition_values(u, v, flat)
        eye = np.eye(self.rank)
        orth = np.abs(np.einsum("...ki,...kj->...ij", a, a) - eye).max(axis=(-1, -2))
        k = int(np.argmax(orth))
        if orth[k] > SO_TOL:
            raise BundleError(f"transition {u}->{v} is not orthogonal (residual {orth[k]:.3g})", "orthogonality", flat[k], float(orth[k]))
        det = np.linalg.det(a) if self.rank else np.ones(len(flat))
        bad = np.abs(det - 1.0)
        k = int(np.argmax(bad))
        if bad[k] > SO_TOL:
            raise BundleError(f"transition {u}->{v} has determinant {det[k]:.6g}, orientation violated", "orientation", flat[k], float(bad[k]))
        return float(max(orth.max(initial=0.0), bad.max(initial=0.0)))


class MetricConnection:
    """Per-chart skew matrices of connection 1-forms on a :class:`FramedBundle`."""

    def __init__(self, bundle: FramedBundle, omega: Mapping[str, Sequence[Sequence[ChartForm]]], check: bool = True):
        self.bundle = bundle
        self.omega: dict[str, FormMatrix] = {}
        p = bundle.rank
        for name, chart in bundle.charts.items():
            if name not in omega:
                raise BundleError(f"no connection forms on chart {name!r}", "connection")
            m = [list(r) for r in omega[name]]
            if len(m) != p or any(len(r) != p for r in m):
                raise BundleError(f"connection on {name!r} is not {p}x{p}", "connection")
            for r in m:
                for x in r:
                    if x.degree != 1:
                        raise BundleError("connection entries must be 1-forms", "connection")
            self.omega[name] = [[x.restrict(chart) for x in r] for r in m]
        if check:
            self.validate()

    @property
    def rank(self) -> int:
        return self.bundle.rank

    @property
    def principal(self) -> FormMatrix:
        return self.omega[self.bundle.principal]

    def entry(self, i: int, j: int, chart: str | None = None) -> ChartForm:
        """1-based entry ``omega_ij``."""
        return self.omega[chart or self.bundle.principal][i - 1][j - 1]

    def validate(self):
        self.check_skew()
        for u, v in self.bundle.transitions:
            r, where = _omega_residual(self, u, v)
            if r > OMEGA_TOL:
                raise BundleError(f"connection violates the frame-change law on {u}->{v} (residual {r:.3g})", "frame_change", where, r)

    def check_skew(self) -> float:
        worst = 0.0
        for name, m in self.omega.items():
            pts = grid_points(self.bundle.charts[name], self.bundle.samples)
            for i in range(self.rank):
                for j in range(i, self.rank):
                    f = m[i][i] if i == j else add(m[i][j], m[j][i])
                    r, where = sup_norm(f, pts)
                    if r > 1e-10:
                        raise BundleError(f"connection on {name!r} is not skew at ({i + 1},{j + 1}) (residual {r:.3g})", "skewness", where, r)
                    worst = max(worst, r)
        return worst


class CurvatureMatrix:
    """Per-chart curvature 2-form matrices of a connection."""

    def __init__(self, connection: MetricConnection, omega2: Mapping[str, SkewFormMatrix]):
        self.connection = connection
        self.omega2 = dict(omega2)

    @property
    def bundle(self) -> FramedBundle:
        return self.connection.bundle

    @property
    def rank(self) -> int:
        return self.connection.rank

    @property
    def principal(self) -> SkewFormMatrix:
        return self.omega2[self.bundle.principal]

    def entry(self, i: int, j: int, chart: str | None = None) -> ChartForm:
        return self.omega2[chart or self.bundle.principal][i - 1, j - 1]


def _chart_curvature(m: FormMatrix, chart: ChartDomain) -> SkewFormMatrix:
    p = len(m)
    if p == 0:
        return SkewFormMatrix([], check=False)
    if chart.dim < 2:
        raise BundleError("curvature needs a base of dimension >= 2", "curvature")
    d = matd(m)
    if p == 2:
        # omega ^ omega vanishes identically for a 2x2 skew matrix of 1-forms
        return SkewFormMatrix(d)
    return SkewFormMatrix(matsub(d, matmul(m, m)))


def curvature(conn: MetricConnection) -> CurvatureMatrix:
    return CurvatureMatrix(conn, {name: _chart_curvature(m, conn.bundle.charts[name]) for name, m in conn.omega.items()})


def _predicted_omega(conn: MetricConnection, u: str, v: str):
    b = conn.bundle
    chart = b.overlap(u, v)
    a = _functions(chart, b.transitions[(u, v)])
    ainv = _functions(chart, transpose(b.transitions[(u, v)]))
    w = _restrict(conn.omega[u], chart)
    pred = matadd(matmul(matd(a), ainv), matmul(matmul(a, w), ainv))
    return chart, a, ainv, pred


def _omega_residual(conn: MetricConnection, u: str, v: str):
    chart, _, _, pred = _predicted_omega(conn, u, v)
    diff = matsub(_restrict(conn.omega[v], chart), pred)
    return _matrix_sup(diff, grid_points(chart, conn.bundle.samples))


def frame_change_check(conn: MetricConnection, u: str, v: str) -> tuple[float, float]:
    """Sup-norm residuals of the connection and curvature transformation laws on ``u -> v``."""
    b = conn.bundle
    if (u, v) not in b.transitions:
        raise BundleError(f"no transition registered for {u}->{v}", "overlap")
    chart, a, ainv, pred = _predicted_omega(conn, u, v)
    pts = grid_points(chart, b.samples)
    r_omega, _ = _matrix_sup(matsub(_restrict(conn.omega[v], chart), pred), pts)
    om_u = _restrict(_chart_curvature(conn.omega[u], b.charts[u]).entries, chart)
    om_v = _restrict(_chart_curvature(conn.omega[v], b.charts[v]).entries, chart)
    r_curv, _ = _matrix_sup(matsub(om_v, matmul(matmul(a, om_u), ainv)), pts)
    return r_omega, r_curv


def _parse_on(chart: ChartDomain, e) -> Expr:
    return chart.parse(e) if isinstance(e, str) else as_expr(e)


def rotate_frame(conn: MetricConnection, theta) -> MetricConnection:
    """Connection in the frame rotated counterclockwise by ``theta`` on every chart."""
    if conn.rank != 2:
        raise BundleError("rotate_frame needs a rank-2 bundle", "rank")
    out = {}
    for name, m in conn.omega.items():
        chart = conn.bundle.charts[name]
        dth = exterior_derivative(ChartForm.function(chart, _parse_on(chart, theta)))
        w = add(m[0][1], dth)
        out[name] = [[m[0][0], w], [scale(w, -1.0), m[1][1]]]
    # SO(2) is abelian, so rotating both frames by theta leaves transitions unchanged
    return MetricConnection(conn.bundle, out)


def perturb_connection(conn: MetricConnection, tau, epsilon: float) -> MetricConnection:
    """``omega_12 + epsilon * tau`` on every chart of a rank-2 bundle.

    ``tau`` is one 1-form in the shared coordinates, or a mapping chart name ->
    1-form whose pieces must agree on overlaps.
    """
    if conn.rank != 2:
        raise BundleError("perturb_connection needs a rank-2 bundle", "rank")
    b = conn.bundle
    if isinstance(tau, ChartForm):
        pieces = {name: tau.restrict(ch) for name, ch in b.charts.items()}
    else:
        pieces = {name: tau[name].restrict(ch) for name, ch in b.charts.items()}
        for u, v in b.transitions:
            chart = b.overlap(u, v)
            diff = add(pieces[u].restrict(chart), scale(pieces[v].restrict(chart), -1.0))
            r, where = sup_norm(diff, grid_points(chart, b.samples))
            if r > 1e-10:
                raise BundleError(f"perturbation is not a global 1-form on {u}->{v}", "tau_overlap", where, r)
    for t in pieces.values():
        if t.degree != 1:
            raise BundleError("perturbation must be a 1-form", "tau_degree")
    out = {}
    for name, m in conn.omega.items():
        w = add(m[0][1], scale(pieces[name], float(epsilon)))
        out[name] = [[m[0][0], w], [scale(w, -1.0), m[1][1]]]
    return MetricConnection(b, out)


def pullback_bundle(
    conn: MetricConnection,
    source: ChartDomain,
    mapping: Sequence,
    charts: Mapping[str, tuple[ChartDomain, Sequence]] | None = None,
    check_image: bool = True,
) -> MetricConnection:
    """Pull the bundle and connection back along a chart map.

    ``source`` and ``mapping`` describe the map on the principal chart.
    ``charts`` optionally pulls back further charts, keyed by target chart
    name; transitions survive only between pulled-back charts.
    """
    b = conn.bundle
    plan = {b.principal: (source, list(mapping))}
    for name, (ch, mp) in (charts or {}).items():
        plan[name] = (ch, list(mp))
    new_charts, new_omega, exprs = {}, {}, {}
    for name, (ch, mp) in plan.items():
        target = b.charts[name]
        mp = [_parse_on(ch, f) for f in mp]
        exprs[name] = dict(zip(target.coords, mp))
        new_charts[name] = ch
        new_omega[name] = [[pullback(mp, x, ch, check_image=check_image) for x in row] for row in conn.omega[name]]
    transitions = {}
    for (u, v), a in b.transitions.items():
        if u in plan and v in plan:
            transitions[(u, v)] = tuple(tuple(e.subs(exprs[u]) for e in row) for row in a)
    nb = FramedBundle(b.rank, new_charts, b.principal, transitions, b.samples)
    return MetricConnection(nb, new_omega)


def direct_sum(c1: MetricConnection, c2: MetricConnection) -> MetricConnection:
    """Block-diagonal sum of two connections over the same charts."""
    b1, b2 = c1.bundle, c2.bundle
    if b1.charts != b2.charts or b1.principal != b2.principal:
        raise BundleError("direct sum needs bundles over the same charts", "base")
    p1, p2 = b1.rank, b2.rank
    p = p1 + p2
    if p1 == 0:
        return c2
    if p2 == 0:
        return c1
    transitions = {}
    for key in set(b1.transitions) | set(b2.transitions):
        if key not in b1.transitions or key not in b2.transitions:
            raise BundleError(f"transition {key[0]}->{key[1]} missing from one summand", "transition")
        a1, a2 = b1.transitions[key], b2.transitions[key]
        rows = []
        for i in range(p):
            row = []
            for j in range(p):
                if i < p1 and j < p1:
                    row.append(a1[i][j])
                elif i >= p1 and j >= p1:
                    row.append(a2[i - p1][j - p1])
                else:
                    row.append(as_expr(0.0))
            rows.append(tuple(row))
        transitions[key] = tuple(rows)
    nb = FramedBundle(p, dict(b1.charts), b1.principal, transitions, b1.samples)
    omega = {}
    for name, chart in b1.charts.items():
        m = _zero_matrix(chart, p, 1)
        for i in range(p1):
            for j in range(p1):
                m[i][j] = c1.omega[name][i][j]
        for i in range(p2):
            for j in range(p2):
                m[p1 + i][p1 + j] = c2.omega[name][i][j]
        omega[name] = m
    return MetricConnection(nb, omega)


def _renamed(chart: ChartDomain, suffix: str) -> ChartDomain:
    return ChartDomain(
        f"{chart.name}{suffix}",
        tuple(c + suffix for c in chart.coords),
        chart.box,
        chart.covers,
        frozenset(c + suffix for c in chart.periodic),
    )


def product(c1: MetricConnection, c2: MetricConnection, suffixes: tuple[str, str] = ("1", "2")) -> MetricConnection:
    """External sum over the product of the two principal charts.

    Coordinates of each factor get a suffix; only principal charts are kept.
    """
    ch1 = _renamed(c1.bundle.base, suffixes[0])
    ch2 = _renamed(c2.bundle.base, suffixes[1])
    base = ch1.product(ch2, f"{c1.bundle.principal}x{c2.bundle.principal}")
    pulled = []
    for conn, ch in ((c1, ch1), (c2, ch2)):
        mp = [Var(c) for c in ch.coords]
        p = pullback_bundle(conn, base, mp, check_image=False)
        # rename the principal so both summands share one chart table
        nb = FramedBundle(p.rank, {"principal": base}, "principal", {}, p.bundle.samples)
        pulled.append(MetricConnection(nb, {"principal": p.principal}, check=False))
    out = direct_sum(*pulled)
    out.validate()
    return out


def bianchi_residual(curv: CurvatureMatrix, samples: int = 6) -> float:
    """Sup-norm of ``d(Omega_12)`` for a rank-2 bundle; 0 when the 2-form is top degree."""
    if curv.rank != 2:
        raise BundleError("Bianchi check implemented for rank 2", "rank")
    om = curv.entry(1, 2)
    if om.degree >= om.chart.dim:
        return 0.0
    r, _ = sup_norm(exterior_derivative(om), grid_points(om.chart, samples))
    return r
