"""Geometric Euler forms and the Gauss-Bonnet integral."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .bundles import BundleError, CurvatureMatrix, MetricConnection, curvature, perturb_connection, sup_norm
from .exprlang import Const, Expr, Func, Var
from .forms import ChartDomain, ChartForm, FormError, exterior_derivative, grid_points, integrate_top_form, scale, wedge
from .pfaffian import pfaffian

__all__ = [
    "Check",
    "EulerReport",
    "euler_form",
    "gauss_bonnet",
    "block_euler_form",
    "closedness_check",
    "random_global_one_form",
    "perturbation_drift",
    "default_resolution",
]


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.residual = float(self.residual)
        self.passed = bool(self.residual < self.tolerance)

    def to_json(self) -> dict:
        return {"name": self.name, "residual": self.residual, "tolerance": self.tolerance, "pass": self.passed}


@dataclass
class EulerReport:
    model: str
    rank: int
    q: int
    computed: float
    reference: int
    resolution: int
    duration_ms: float
    checks: list[Check] = field(default_factory=list)

    @property
    def abs_error(self) -> float:
        return abs(self.computed - self.reference)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "rank": self.rank,
            "q": self.q,
            "computed": self.computed,
            "reference": self.reference,
            "abs_error": self.abs_error,
            "resolution": self.resolution,
            "duration_ms": self.duration_ms,
            "checks": [c.to_json() for c in self.checks],
        }


def _normalization(q: int) -> float:
    return (-1.0 / (2.0 * math.pi)) ** q


def euler_form(curv: CurvatureMatrix) -> ChartForm:
    """``(-1/2pi)^q Pf(Omega)`` on the principal chart."""
    p = curv.rank
    if p == 0:
        return ChartForm.function(curv.bundle.base, 1.0)
    return scale(pfaffian(curv.principal), _normalization(p // 2))


def default_resolution(dim: int) -> int:
    return 256 if dim <= 2 else 32


def gauss_bonnet(model, resolution: int | None = None, threads: int = 1, tolerance: float | None = None) -> EulerReport:
    """Integrate the Euler form of ``model`` and compare with its reference characteristic."""
    conn = model.connection
    base = conn.bundle.base
    if conn.rank != base.dim:
        raise BundleError(f"rank {conn.rank} differs from base dimension {base.dim}; no Euler characteristic", "rank")
    res = resolution or default_resolution(base.dim)
    tol = tolerance if tolerance is not None else (1e-3 if base.dim <= 2 else 5e-2)
    t0 = time.perf_counter()
    e = euler_form(curvature(conn))
    value = integrate_top_form(e, res, threads=threads)
    ms = (time.perf_counter() - t0) * 1e3
    rep = EulerReport(model.name, conn.rank, conn.rank // 2, value, model.chi, res, ms)
    rep.checks.append(Check("gauss_bonnet", rep.abs_error, tol))
    return rep


def block_euler_form(factors: Sequence[CurvatureMatrix]) -> ChartForm:
    """Wedge of the factors' ``Omega_12`` times ``(-1/2pi)^q``, all on one product chart."""
    if not factors:
        raise FormError("need at least one factor")
    chart = factors[0].bundle.base
    out = None
    for f in factors:
        if f.rank != 2:
            raise BundleError("block_euler_form takes rank-2 factors", "rank")
        om = f.entry(1, 2)
        if om.chart != chart:
            raise FormError("factors must live on one product chart")
        out = om if out is None else wedge(out, om)
    return scale(out, _normalization(len(factors)))


def closedness_check(curv: CurvatureMatrix, samples: int = 8) -> float:
    """Sup-norm of ``d Pf(Omega)`` on a midpoint grid; 0 for top-degree Pfaffians."""
    if curv.rank == 0:
        return 0.0
    pf = pfaffian(curv.principal)
    if pf.degree >= pf.chart.dim:
        return 0.0
    r, _ = sup_norm(exterior_derivative(pf), grid_points(pf.chart, samples))
    return r


def _boundary_damping(chart: ChartDomain, skip: int) -> Expr:
    # product of sin^2 over non-periodic coordinates other than `skip`
    out: Expr = Const(1.0)
    for k, (c, (lo, hi)) in enumerate(zip(chart.coords, chart.box)):
        if k == skip or c in chart.periodic:
            continue
        w = math.pi / (hi - lo)
        out = out * Func("sin", Const(w) * (Var(c) - Const(lo))) ** 2
    return out


def random_global_one_form(chart: ChartDomain, rng: np.random.Generator, modes: int = 2) -> ChartForm:
    """A random smooth 1-form whose integral of ``d tau`` over the chart box vanishes.

    Coefficients are trigonometric in every coordinate (periodic in the
    periodic ones), and the component along ``dx_j`` is damped to zero on the
    faces where another non-periodic coordinate hits its bounds, so the
    boundary term of Stokes' theorem is zero.
    """
    comps = {}
    for j, c in enumerate(chart.coords):
        f: Expr = Const(0.0)
        for _ in range(modes):
            term: Expr = Const(float(rng.normal()))
            for k, (ck, (lo, hi)) in enumerate(zip(chart.coords, chart.box)):
                n = int(rng.integers(0, 3))
                w = 2.0 * math.pi * n / (hi - lo)
                fn = "cos" if rng.random() < 0.5 else "sin"
                if n:
                    term = term * Func(fn, Const(w) * (Var(ck) - Const(lo)))
            f = f + term
        comps[c] = f * _boundary_damping(chart, j)
    return ChartForm.one_form(chart, comps)


def perturbation_drift(conn: MetricConnection, tau: ChartForm, epsilon: float, resolution: int | None = None, threads: int = 1) -> float:
    """``|int e_g(omega + eps tau) - int e_g(omega)|`` over the principal chart."""
    res = resolution or default_resolution(conn.bundle.base.dim)
    before = integrate_top_form(euler_form(curvature(conn)), res, threads)
    after = integrate_top_form(euler_form(curvature(perturb_connection(conn, tau, epsilon))), res, threads)
    return abs(after - before)
