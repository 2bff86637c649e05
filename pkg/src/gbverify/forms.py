"""Differential forms on rectangular coordinate charts.

A :class:`ChartForm` stores its coefficients in a dict keyed by strictly
increasing 1-based index tuples; absent keys are zero.  Coefficients are
:class:`~gbverify.exprlang.Expr` trees, so wedge products, exterior
derivatives and pullbacks stay symbolic.  Plain Python callables are accepted
as coefficients and wrapped in :class:`~gbverify.exprlang.Opaque`, whose
partials fall back to central differences.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .exprlang import ZERO, Const, Expr, Opaque, Var, as_expr, evaluate, parse

__all__ = [
    "FormError",
    "ChartDomain",
    "ChartForm",
    "basis",
    "add",
    "scale",
    "wedge",
    "exterior_derivative",
    "pullback",
    "evaluate_form",
    "integrate_top_form",
    "pairwise_sum",
    "grid_points",
    "random_points",
]


class FormError(ValueError):
    """Chart or degree mismatch, or an operation on an invalid form."""


@dataclass(frozen=True)
class ChartDomain:
    """A coordinate box ``prod [lo_i, hi_i]`` with named coordinates.

    ``covers`` marks a chart that covers its manifold up to a null set, which
    is what :func:`integrate_top_form` needs.  Coordinates listed in
    ``periodic`` are angles: points are reduced modulo the box width before
    containment checks.
    """

    name: str
    coords: tuple[str, ...]
    box: tuple[tuple[float, float], ...]
    covers: bool = False
    periodic: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))
        object.__setattr__(self, "periodic", frozenset(self.periodic))
        if len(self.coords) < 1:
            raise FormError("a chart needs at least one coordinate")
        if len(set(self.coords)) != len(self.coords):
            raise FormError(f"chart {self.name!r}: coordinate names must be distinct")
        if len(self.box) != len(self.coords):
            raise FormError(f"chart {self.name!r}: box has {len(self.box)} intervals for {len(self.coords)} coordinates")
        for c, (lo, hi) in zip(self.coords, self.box):
            if not hi > lo:
                raise FormError(f"chart {self.name!r}: degenerate interval for {c!r}")
        if not self.periodic <= set(self.coords):
            raise FormError(f"chart {self.name!r}: periodic names must be coordinates")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, coord: str) -> int:
        """1-based index of ``coord``."""
        return self.coords.index(coord) + 1

    def contains(self, point: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Boolean mask over the last axis of ``point`` (shape ``(..., m)``)."""
        p = np.asarray(point, dtype=float)
        ok = np.ones(p.shape[:-1], dtype=bool)
        for k, (c, (lo, hi)) in enumerate(zip(self.coords, self.box)):
            x = p[..., k]
            if c in self.periodic:
                x = lo + np.mod(x - lo, hi - lo)
            width = tol * max(1.0, abs(lo), abs(hi))
            ok &= (x >= lo - width) & (x <= hi + width)
        return ok

    def intersect(self, other: "ChartDomain", name: str | None = None) -> "ChartDomain":
        """Overlap of two charts presented in the same coordinates."""
        if self.coords != other.coords:
            raise FormError(f"charts {self.name!r} and {other.name!r} use different coordinates")
        box = []
        for (a, b), (c, d) in zip(self.box, other.box):
            lo, hi = max(a, c), min(b, d)
            if not hi > lo:
                raise FormError(f"charts {self.name!r} and {other.name!r} do not overlap")
            box.append((lo, hi))
        return ChartDomain(name or f"{self.name}&{other.name}", self.coords, tuple(box), False, self.periodic & other.periodic)

    def product(self, other: "ChartDomain", name: str | None = None) -> "ChartDomain":
        if set(self.coords) & set(other.coords):
            raise FormError("product charts need disjoint coordinate names")
        return ChartDomain(
            name or f"{self.name}x{other.name}",
            self.coords + other.coords,
            self.box + other.box,
            self.covers and other.covers,
            self.periodic | other.periodic,
        )

    def extend(self, coords: Sequence[str], box: Sequence[tuple[float, float]], name: str | None = None) -> "ChartDomain":
        """Append coordinates, e.g. fiber coordinates over a base chart."""
        return ChartDomain(name or f"{self.name}+", self.coords + tuple(coords), self.box + tuple(box), False, self.periodic)

    def parse(self, source: str) -> Expr:
        return parse(source, self.coords)

    def variables(self) -> list[Var]:
        return [Var(c) for c in self.coords]


def basis(m: int, p: int) -> list[tuple[int, ...]]:
    """Increasing index tuples of length ``p`` from ``1..m`` in canonical order."""
    return list(itertools.combinations(range(1, m + 1), p))


def _coerce(chart: ChartDomain, c) -> Expr:
    if isinstance(c, Expr):
        return c
    if isinstance(c, str):
        return chart.parse(c)
    if isinstance(c, (int, float, np.integer, np.floating)):
        return as_expr(c)
    if callable(c):
        return Opaque(c, tuple(chart.variables()), getattr(c, "__name__", "opaque"))
    raise TypeError(f"unsupported coefficient type {type(c).__name__}")


class ChartForm:
    """Degree-``p`` form ``sum_I f_I dx_I`` on one chart."""

    __slots__ = ("chart", "degree", "coeffs")

    def __init__(self, chart: ChartDomain, degree: int, coeffs: Mapping[tuple[int, ...], object] | None = None):
        m = chart.dim
        if not 0 <= degree <= m:
            raise FormError(f"degree {degree} out of range for a {m}-dimensional chart")
        clean: dict[tuple[int, ...], Expr] = {}
        for key, c in (coeffs or {}).items():
            key = tuple(int(i) for i in key)
            if len(key) != degree:
                raise FormError(f"index tuple {key} does not match degree {degree}")
            if any(b <= a for a, b in zip(key, key[1:])):
                raise FormError(f"index tuple {key} is not strictly increasing")
            if key and not (1 <= key[0] and key[-1] <= m):
                raise FormError(f"index tuple {key} out of range 1..{m}")
            e = _coerce(chart, c)
            if not e.is_zero():
                clean[key] = e
        self.chart = chart
        self.degree = degree
        self.coeffs = clean

    # constructors -------------------------------------------------------
    @classmethod
    def zero(cls, chart: ChartDomain, degree: int) -> "ChartForm":
        return cls(chart, degree)

    @classmethod
    def function(cls, chart: ChartDomain, f) -> "ChartForm":
        return cls(chart, 0, {(): f})

    @classmethod
    def one_form(cls, chart: ChartDomain, components: Mapping[str, object]) -> "ChartForm":
        """``sum f_c dc`` from a mapping coordinate name -> coefficient."""
        return cls(chart, 1, {(chart.index(c),): f for c, f in components.items()})

    @classmethod
    def differential(cls, chart: ChartDomain, coord: str) -> "ChartForm":
        return cls(chart, 1, {(chart.index(coord),): 1.0})

    @classmethod
    def volume(cls, chart: ChartDomain, f=1.0) -> "ChartForm":
        return cls(chart, chart.dim, {tuple(range(1, chart.dim + 1)): f})

    # algebra ------------------------------------------------------------
    def coefficient(self, key: Iterable[int]) -> Expr:
        return self.coeffs.get(tuple(key), ZERO)

    def is_zero(self) -> bool:
        return not self.coeffs

    def lift(self, chart: ChartDomain) -> "ChartForm":
        """Same coefficients on a chart whose leading coordinates match."""
        if chart.coords[: self.chart.dim] != self.chart.coords:
            raise FormError(f"cannot lift from {self.chart.name!r} to {chart.name!r}")
        return ChartForm(chart, self.degree, self.coeffs)

    def restrict(self, chart: ChartDomain) -> "ChartForm":
        """Same coefficients on another chart with identical coordinates."""
        if chart.coords != self.chart.coords:
            raise FormError(f"cannot restrict from {self.chart.name!r} to {chart.name!r}")
        return ChartForm(chart, self.degree, self.coeffs)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, k):
        return scale(self, k)

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def d(self) -> "ChartForm":
        return exterior_derivative(self)

    def __call__(self, point) -> np.ndarray:
        return evaluate_form(self, point)

    def __repr__(self):
        terms = ", ".join(f"{k}: {v}" for k, v in sorted(self.coeffs.items()))
        return f"ChartForm({self.chart.name}, degree={self.degree}, {{{terms}}})"


def _same_chart(a: ChartForm, b: ChartForm):
    if a.chart != b.chart:
        raise FormError(f"chart mismatch: {a.chart.name!r} vs {b.chart.name!r}")


def add(a: ChartForm, b: ChartForm) -> ChartForm:
    _same_chart(a, b)
    if a.degree != b.degree:
        raise FormError(f"degree mismatch: {a.degree} vs {b.degree}")
    out = dict(a.coeffs)
    for k, v in b.coeffs.items():
        out[k] = out[k] + v if k in out else v
    return ChartForm(a.chart, a.degree, out)


def scale(a: ChartForm, k) -> ChartForm:
    """Multiply by a real number or a function (Expr or string)."""
    k = _coerce(a.chart, k)
    return ChartForm(a.chart, a.degree, {key: k * v for key, v in a.coeffs.items()})


def _merge_sign(i: tuple[int, ...], j: tuple[int, ...]) -> int:
    # parity of the shuffle that sorts i + j, counted as inversions
    inv = 0
    for x in i:
        for y in j:
            if y < x:
                inv += 1
    return -1 if inv % 2 else 1


def wedge(a: ChartForm, b: ChartForm) -> ChartForm:
    _same_chart(a, b)
    p, q = a.degree, b.degree
    if p + q > a.chart.dim:
        raise FormError(f"wedge of degrees {p} and {q} exceeds chart dimension {a.chart.dim}")
    out: dict[tuple[int, ...], Expr] = {}
    for i, f in a.coeffs.items():
        si = set(i)
        for j, g in b.coeffs.items():
            if si.intersection(j):
                continue
            key = tuple(sorted(i + j))
            term = f * g
            if _merge_sign(i, j) < 0:
                term = -term
            out[key] = out[key] + term if key in out else term
    return ChartForm(a.chart, p + q, out)


def exterior_derivative(a: ChartForm) -> ChartForm:
    m = a.chart.dim
    if a.degree >= m:
        raise FormError(f"exterior derivative of a top-degree form on a {m}-dimensional chart")
    out: dict[tuple[int, ...], Expr] = {}
    for i, f in a.coeffs.items():
        for j in range(1, m + 1):
            if j in i:
                continue
            df = f.diff(a.chart.coords[j - 1])
            if df.is_zero():
                continue
            key = tuple(sorted(i + (j,)))
            if sum(1 for x in i if x < j) % 2:
                df = -df
            out[key] = out[key] + df if key in out else df
    return ChartForm(a.chart, a.degree + 1, out)


def pullback(
    mapping: Sequence[Expr | str],
    a: ChartForm,
    source: ChartDomain,
    check_image: bool = True,
    samples: int = 6,
) -> ChartForm:
    """Pull ``a`` back along ``source -> a.chart`` given by one expression per target coordinate.

    The image of a midpoint sample grid is checked against the target box
    unless ``check_image`` is false.
    """
    target = a.chart
    if len(mapping) != target.dim:
        raise FormError(f"map has {len(mapping)} components, target chart has dimension {target.dim}")
    comps = [source.parse(f) if isinstance(f, str) else as_expr(f) for f in mapping]
    if check_image:
        pts = grid_points(source, samples)
        env = {c: pts[..., k] for k, c in enumerate(source.coords)}
        image = np.stack([np.broadcast_to(evaluate(f, env), pts.shape[:-1]) for f in comps], axis=-1)
        bad = ~target.contains(image)
        if np.any(bad):
            where = pts[bad][0]
            raise FormError(f"map image leaves chart {target.name!r} near source point {where.tolist()}")
    if a.degree > source.dim:
        raise FormError(f"cannot pull a {a.degree}-form back to a {source.dim}-dimensional chart")
    subs = dict(zip(target.coords, comps))
    diffs = [
        ChartForm(source, 1, {(k + 1,): f.diff(c) for k, c in enumerate(source.coords)}) for f in comps
    ]
    out = ChartForm.zero(source, a.degree)
    for key, f in a.coeffs.items():
        term = ChartForm.function(source, f.subs(subs))
        for i in key:
            term = wedge(term, diffs[i - 1])
        out = add(out, term)
    return out


def _point_env(chart: ChartDomain, point) -> tuple[dict, tuple]:
    if isinstance(point, Mapping):
        arr = np.stack(np.broadcast_arrays(*[np.asarray(point[c], dtype=float) for c in chart.coords]), axis=-1)
    else:
        arr = np.asarray(point, dtype=float)
    if arr.shape[-1] != chart.dim:
        raise FormError(f"points must have {chart.dim} coordinates")
    return {c: arr[..., k] for k, c in enumerate(chart.coords)}, arr


def evaluate_form(a: ChartForm, point, check: bool = True) -> np.ndarray:
    """Coefficients at ``point`` in :func:`basis` order.

    ``point`` is a mapping of coordinate values or an array of shape
    ``(..., m)``; the result has shape ``(..., C(m, p))``.
    """
    env, arr = _point_env(a.chart, point)
    if check and not np.all(a.chart.contains(arr)):
        raise FormError(f"point outside chart {a.chart.name!r}")
    shape = arr.shape[:-1]
    keys = basis(a.chart.dim, a.degree)
    out = np.zeros(shape + (len(keys),))
    for n, key in enumerate(keys):
        f = a.coeffs.get(key)
        if f is not None:
            out[..., n] = evaluate(f, env)
    return out


def grid_points(chart: ChartDomain, n: int | Sequence[int], box=None) -> np.ndarray:
    """Cell midpoints of an ``n``-per-axis grid; shape ``(n_1, ..., n_m, m)``."""
    box = chart.box if box is None else box
    ns = [n] * chart.dim if isinstance(n, (int, np.integer)) else list(n)
    axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for (lo, hi), k in zip(box, ns)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def random_points(chart: ChartDomain, n: int, rng: np.random.Generator, margin: float = 0.05) -> np.ndarray:
    """``n`` uniform points kept a relative ``margin`` away from the box faces."""
    lo = np.array([a + margin * (b - a) for a, b in chart.box])
    hi = np.array([b - margin * (b - a) for a, b in chart.box])
    return lo + (hi - lo) * rng.random((n, chart.dim))


def pairwise_sum(values: Sequence[float]) -> float:
    """Sum in a fixed balanced binary tree, independent of how values were produced."""
    vals = list(values)
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return float(vals[0])


def integrate_top_form(a: ChartForm, resolution: int | Sequence[int] = 256, threads: int = 1) -> float:
    """Midpoint-rule integral of a top-degree form over its covering chart.

    Cells are grouped into slabs along the first axis; each slab is summed by
    numpy and the slab sums are combined by :func:`pairwise_sum`, so the
    result does not depend on ``threads``.
    """
    chart = a.chart
    m = chart.dim
    if a.degree != m:
        raise FormError(f"integrand has degree {a.degree}, chart dimension is {m}")
    if not chart.covers:
        raise FormError(f"chart {chart.name!r} is not marked as covering its manifold")
    ns = [resolution] * m if isinstance(resolution, (int, np.integer)) else list(resolution)
    if len(ns) != m or min(ns) < 1:
        raise FormError("resolution must give a positive count per axis")
    f = a.coeffs.get(tuple(range(1, m + 1)))
    if f is None:
        return 0.0
    widths = [(hi - lo) / k for (lo, hi), k in zip(chart.box, ns)]
    cell = math.prod(widths)
    axes = [lo + (np.arange(k) + 0.5) * w for (lo, _), k, w in zip(chart.box, ns, widths)]
    rest = np.meshgrid(*axes[1:], indexing="ij") if m > 1 else []
    shape = tuple(ns[1:])

    def slab(i: int) -> float:
        env = {chart.coords[0]: np.full(shape, axes[0][i])}
        for c, g in zip(chart.coords[1:], rest):
            env[c] = g
        vals = np.broadcast_to(evaluate(f, env), shape)
        return float(np.sum(vals))

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sums = list(pool.map(slab, range(ns[0])))
    else:
        sums = [slab(i) for i in range(ns[0])]
    return pairwise_sum(sums) * cell
