"""Explicit Thom form of an oriented plane bundle with a metric connection.

With fiber coordinates ``(v1, v2)`` in a local orthonormal frame, ``t = r^2``
and ``omega = omega_12``, the form on the total space is

    u = c * ( rho(t) dv1^dv2 + rho(t) (v1 dv1 + v2 dv2) ^ omega + gamma(r) d(omega) )

where ``rho`` is supported in ``(0, 1)`` with ``int_0^1 rho(s^2) s ds = -1``,
``gamma(r) = 1 + int_0^r rho(s^2) s ds`` and ``c = -1/(2 pi)``.  Writing
``gamma(r) = G(r^2)`` with ``G(t) = 1 + P(t)/2``, ``P' = rho``, keeps every
coefficient smooth in ``(v1, v2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .bundles import BundleError, MetricConnection, rotate_frame, sup_norm
from .exprlang import Const, Expr, Func, Opaque, Var, as_expr
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

__all__ = [
    "ThomProfile",
    "TotalSpaceForm",
    "bump",
    "adaptive_simpson",
    "make_profile",
    "thom_form",
    "fiber_integral",
    "frame_invariance_check",
    "zero_section_restrict",
    "closedness_residual",
]

THOM_CONSTANT = -1.0 / (2.0 * math.pi)


def bump(t):
    """``exp(-1/(t(1-t)))`` on ``(0, 1)``, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    with np.errstate(under="ignore"):
        out[inside] = np.exp(-1.0 / (ti * (1.0 - ti)))
    return out if out.ndim else float(out)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + recurse(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


@dataclass(frozen=True)
class ThomProfile:
    """The radial data ``(rho, gamma, c)``; ``rho`` and ``G`` take ``t = r^2``."""

    rho: Callable
    G: Callable
    dG: Callable
    c: float

    def gamma(self, r):
        r = np.asarray(r, dtype=float)
        return self.G(r * r)

    def gamma_prime(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * r * self.dG(r * r)

    def radial_mass(self, resolution: int = 4096) -> float:
        """``int_0^1 rho(s^2) s ds`` by the midpoint rule."""
        s = (np.arange(resolution) + 0.5) / resolution
        return float(np.sum(self.rho(s * s) * s) / resolution)


def make_profile(c: float = THOM_CONSTANT, nodes: int = 4096, tol: float = 1e-10) -> ThomProfile:
    """Bump-based profile with ``int_0^1 rho(t) dt = -2``, i.e. ``gamma(1) = 0``."""
    grid = np.linspace(0.0, 1.0, nodes)
    f = lambda x: float(bump(x))  # noqa: E731
    seg_tol = tol / (nodes - 1)
    pieces = np.array([adaptive_simpson(f, a, b, seg_tol) for a, b in zip(grid[:-1], grid[1:])])
    cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
    total = cumulative[-1]
    scale_ = -2.0 / total

    def rho(t):
        return scale_ * bump(t)

    g_nodes = 1.0 + 0.5 * scale_ * cumulative
    g_nodes[-1] = 0.0
    spline = CubicHermiteSpline(grid, g_nodes, 0.5 * rho(grid))
    dspline = spline.derivative()

    def G(t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= 0.0, 1.0, 0.0)
        inside = (t > 0.0) & (t < 1.0)
        out[inside] = spline(t[inside])
        return out if out.ndim else float(out)

    def dG(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t > 0.0) & (t < 1.0)
        out[inside] = dspline(t[inside])
        return out if out.ndim else float(out)

    return ThomProfile(rho, G, dG, float(c))


@dataclass(frozen=True)
class TotalSpaceForm:
    form: ChartForm
    base: ChartDomain
    fiber: tuple[str, str]
    radius: float
    profile: ThomProfile

    @property
    def chart(self) -> ChartDomain:
        return self.form.chart


def _total_chart(base: ChartDomain, fiber: Sequence[str], radius: float) -> ChartDomain:
    if set(fiber) & set(base.coords):
        raise FormError(f"fiber coordinates {tuple(fiber)} clash with base coordinates {base.coords}")
    if radius < 1.0:
        raise FormError("fiber box must contain the unit disc")
    return base.extend(fiber, [(-radius, radius)] * 2, f"{base.name}|E")


def _thom_from_omega(
    omega: ChartForm, profile: ThomProfile, fiber: tuple[str, str], radius: float
) -> TotalSpaceForm:
    base = omega.chart
    total = _total_chart(base, fiber, radius)
    m = base.dim
    v1, v2 = Var(fiber[0]), Var(fiber[1])
    t = v1 * v1 + v2 * v2
    rho = Opaque(profile.rho, (t,), "rho")
    G = Opaque(profile.G, (t,), "G")
    dv1 = ChartForm(total, 1, {(m + 1,): 1.0})
    dv2 = ChartForm(total, 1, {(m + 2,): 1.0})
    rdr = add(scale(dv1, v1), scale(dv2, v2))
    w = omega.lift(total)
    dw = exterior_derivative(omega).lift(total)
    u = add(add(scale(wedge(dv1, dv2), rho), scale(wedge(rdr, w), rho)), scale(dw, G))
    return TotalSpaceForm(scale(u, profile.c), base, tuple(fiber), radius, profile)


def thom_form(
    conn: MetricConnection,
    profile: ThomProfile | None = None,
    chart: str | None = None,
    fiber: tuple[str, str] = ("v1", "v2"),
    radius: float = 1.5,
) -> TotalSpaceForm:
    """The Thom form over one chart (the principal one by default)."""
    if conn.rank != 2:
        raise BundleError(f"Thom form is constructed for rank 2, got {conn.rank}", "rank")
    profile = profile or make_profile()
    return _thom_from_omega(conn.entry(1, 2, chart), profile, fiber, radius)


def _base_env(base: ChartDomain, x) -> np.ndarray:
    if isinstance(x, Mapping):
        x = [x[c] for c in base.coords]
    x = np.asarray(x, dtype=float)
    if x.shape != (base.dim,):
        raise FormError(f"base point needs {base.dim} coordinates")
    if not base.contains(x):
        raise FormError(f"base point {x.tolist()} outside chart {base.name!r}")
    return x


def fiber_integral(u: TotalSpaceForm, x, radial: int = 2048, angular: int = 16) -> float:
    """Integral of ``u`` over the fiber above ``x``, in polar coordinates on the disc of radius ``u.radius``."""
    x = _base_env(u.base, x)
    m = u.base.dim
    f = u.form.coefficient((m + 1, m + 2))
    dr = u.radius / radial
    dphi = 2.0 * math.pi / angular
    r = (np.arange(radial) + 0.5) * dr
    phi = (np.arange(angular) + 0.5) * dphi
    R, PHI = np.meshgrid(r, phi, indexing="ij")
    env = {c: np.full(R.shape, x[k]) for k, c in enumerate(u.base.coords)}
    env[u.fiber[0]] = R * np.cos(PHI)
    env[u.fiber[1]] = R * np.sin(PHI)
    from .exprlang import evaluate

    vals = np.broadcast_to(evaluate(f, env), R.shape)
    return float(np.sum(vals * R) * dr * dphi)


def _fiber_rotation(total: ChartDomain, base: ChartDomain, fiber, theta: Expr) -> list[Expr]:
    # fiber coordinates w.r.t. the rotated frame, as functions of the old ones
    v1, v2 = Var(fiber[0]), Var(fiber[1])
    c, s = Func("cos", theta), Func("sin", theta)
    return [Var(x) for x in base.coords] + [c * v1 + s * v2, -s * v1 + c * v2]


def frame_invariance_check(
    conn: MetricConnection,
    profile: ThomProfile | None,
    theta,
    samples: int = 8,
    chart: str | None = None,
) -> float:
    """Sup-norm difference between ``u`` built in frame ``e`` and in the frame rotated by ``theta``."""
    if conn.rank != 2:
        raise BundleError("frame invariance is checked for rank 2", "rank")
    profile = profile or make_profile()
    u = thom_form(conn, profile, chart)
    base = u.base
    theta = base.parse(theta) if isinstance(theta, str) else as_expr(theta)
    ut = thom_form(rotate_frame(conn, theta), profile, chart)
    mapping = _fiber_rotation(u.chart, base, u.fiber, theta)
    # the rotated square leaves the fiber box at its corners; u vanishes there
    pulled = pullback(mapping, ut.form, u.chart, check_image=False)
    diff = add(u.form, scale(pulled, -1.0))
    r, _ = sup_norm(diff, grid_points(u.chart, samples))
    return r


def zero_section_restrict(u: TotalSpaceForm) -> ChartForm:
    """Pull back along the zero section: set ``v = 0`` and drop fiber differentials."""
    m = u.base.dim
    zero = {u.fiber[0]: Const(0.0), u.fiber[1]: Const(0.0)}
    coeffs = {k: f.subs(zero) for k, f in u.form.coeffs.items() if all(i <= m for i in k)}
    return ChartForm(u.base, u.form.degree, coeffs)


def closedness_residual(u: TotalSpaceForm, samples: int = 20) -> float:
    """Sup-norm of ``du`` on a midpoint grid of the total-space chart."""
    r, _ = sup_norm(exterior_derivative(u.form), grid_points(u.chart, samples))
    return r
