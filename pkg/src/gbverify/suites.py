"""Randomized property suites and per-model verification runs.

Every function returns a list of :class:`~gbverify.euler.Check`; the CLI
serializes them and the test-suite asserts on them.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.stats import special_ortho_group

from .bundles import (
    bianchi_residual,
    curvature,
    direct_sum,
    pullback_bundle,
    sup_norm,
)
from .euler import (
    Check,
    block_euler_form,
    closedness_check,
    euler_form,
    perturbation_drift,
    random_global_one_form,
)
from .exprlang import Const, Expr, Func, Opaque, Var
from .forms import (
    ChartDomain,
    ChartForm,
    add,
    basis,
    evaluate_form,
    exterior_derivative,
    grid_points,
    integrate_top_form,
    pullback,
    random_points,
    scale,
    wedge,
)
from .models import ModelBundle, get_model, model_names
from .pfaffian import SkewFormMatrix, block_diag, conjugation_check, pfaffian
from .thom import (
    closedness_residual,
    fiber_integral,
    frame_invariance_check,
    make_profile,
    thom_form,
    zero_section_restrict,
)

__all__ = [
    "random_expr",
    "random_form",
    "forms_suite",
    "pfaffian_suite",
    "bundles_suite",
    "euler_suite",
    "thom_checks",
    "SUITES",
    "THETAS",
]

#: Frame rotations used by the Thom invariance checks (sphere-chart coordinates).
THETAS = ("1.3", "phi", "3*phi + sin(theta)")


def random_expr(coords, rng: np.random.Generator, depth: int = 3) -> Expr:
    """A random smooth expression, bounded on boxes of moderate size."""
    if depth <= 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.3:
            return Const(float(np.round(rng.uniform(-2, 2), 3)))
        v = Var(coords[int(rng.integers(len(coords)))])
        return v ** int(rng.integers(1, 3)) if r < 0.6 else v
    kind = rng.integers(6)
    a = random_expr(coords, rng, depth - 1)
    if kind == 0:
        return a + random_expr(coords, rng, depth - 1)
    if kind == 1:
        return a - random_expr(coords, rng, depth - 1)
    if kind == 2:
        return a * random_expr(coords, rng, depth - 1)
    if kind == 3:
        return Func("sin", a)
    if kind == 4:
        return Func("cos", a)
    return Func("exp", Func("sin", a))


def random_form(chart: ChartDomain, degree: int, rng: np.random.Generator, density: float = 0.7, depth: int = 3) -> ChartForm:
    coeffs = {}
    for key in basis(chart.dim, degree):
        if rng.random() < density:
            coeffs[key] = random_expr(chart.coords, rng, depth)
    if not coeffs:
        coeffs[basis(chart.dim, degree)[0]] = random_expr(chart.coords, rng, depth)
    return ChartForm(chart, degree, coeffs)


def _opaque_form(chart: ChartDomain, degree: int, rng: np.random.Generator) -> ChartForm:
    coeffs = {}
    for key in basis(chart.dim, degree):
        a = rng.uniform(-1, 1, chart.dim)
        b = float(rng.uniform(-1, 1))

        def f(*xs, a=a, b=b):
            s = sum(ai * x for ai, x in zip(a, xs))
            return np.sin(s) * np.exp(b * xs[0])

        coeffs[key] = Opaque(f, tuple(chart.variables()), "g")
    return ChartForm(chart, degree, coeffs)


def _sup(form: ChartForm, pts) -> float:
    return sup_norm(form, pts)[0]


def _diff(a: ChartForm, b: ChartForm) -> ChartForm:
    return add(a, scale(b, -1.0))


def forms_suite(n: int = 100, seed: int = 0) -> list[Check]:
    """Wedge, d and pullback identities on ``n`` random expression-backed forms."""
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in ("anticommutativity", "associativity", "leibniz", "d_squared", "pullback_wedge", "pullback_d")}
    for k in range(n):
        m = 3 + k % 2
        chart = ChartDomain(f"R{m}", tuple(f"x{i}" for i in range(1, m + 1)), [(0.2, 1.2)] * m, True)
        pts = random_points(chart, 48, rng)
        p = int(rng.integers(0, m))
        q = int(rng.integers(0, m - p + 1)) if m - p > 0 else 0
        a = random_form(chart, p, rng)
        b = random_form(chart, q, rng)
        ab = wedge(a, b)
        worst["anticommutativity"] = max(worst["anticommutativity"], _sup(_diff(ab, scale(wedge(b, a), (-1.0) ** (p * q))), pts))
        r = int(rng.integers(0, m - p - q + 1))
        c = random_form(chart, r, rng, depth=2)
        worst["associativity"] = max(worst["associativity"], _sup(_diff(wedge(ab, c), wedge(a, wedge(b, c))), pts))
        if p + q < m:
            lhs = exterior_derivative(ab)
            rhs = add(wedge(exterior_derivative(a), b), scale(wedge(a, exterior_derivative(b)), (-1.0) ** p))
            worst["leibniz"] = max(worst["leibniz"], _sup(_diff(lhs, rhs), pts))
        if p + 2 <= m:
            worst["d_squared"] = max(worst["d_squared"], _sup(exterior_derivative(exterior_derivative(a)), pts))
        # pullback along a random smooth map from a box into the target box
        src_dim = int(rng.integers(2, 5))
        source = ChartDomain(f"S{src_dim}", tuple(f"y{i}" for i in range(1, src_dim + 1)), [(0.0, 1.0)] * src_dim, True)
        target = ChartDomain(f"T{m}", chart.coords, [(-3.0, 4.0)] * m, True)
        mp = []
        for _ in range(m):
            coef = rng.uniform(-1, 1, src_dim) * 0.5
            lin = Const(0.6)
            for cf, y in zip(coef, source.variables()):
                lin = lin + Const(float(cf)) * y
            mp.append(lin + Const(0.3) * Func("sin", random_expr(source.coords, rng, 2)))
        at, bt = a.restrict(target), b.restrict(target)
        spts = random_points(source, 48, rng)
        if p + q <= src_dim:
            lhs = pullback(mp, wedge(at, bt), source)
            rhs = wedge(pullback(mp, at, source), pullback(mp, bt, source))
            worst["pullback_wedge"] = max(worst["pullback_wedge"], _sup(_diff(lhs, rhs), spts))
        if p + 1 <= src_dim and p < m:
            lhs = pullback(mp, exterior_derivative(at), source)
            rhs = exterior_derivative(pullback(mp, at, source))
            worst["pullback_d"] = max(worst["pullback_d"], _sup(_diff(lhs, rhs), spts))
    tol = {"anticommutativity": 1e-12, "associativity": 1e-12, "leibniz": 1e-6, "d_squared": 1e-6, "pullback_wedge": 1e-10, "pullback_d": 1e-6}
    checks = [Check(name, worst[name], tol[name]) for name in worst]

    # finite-difference coefficients
    fd_leibniz = fd_dd = 0.0
    for k in range(10):
        chart = ChartDomain("R3", ("x1", "x2", "x3"), [(0.2, 1.2)] * 3, True)
        pts = random_points(chart, 32, rng)
        a, b = _opaque_form(chart, 1, rng), _opaque_form(chart, 1, rng)
        lhs = exterior_derivative(wedge(a, b))
        rhs = add(wedge(exterior_derivative(a), b), scale(wedge(a, exterior_derivative(b)), -1.0))
        fd_leibniz = max(fd_leibniz, _sup(_diff(lhs, rhs), pts))
        fd_dd = max(fd_dd, _sup(exterior_derivative(exterior_derivative(a)), pts))
    checks.append(Check("leibniz_finite_difference", fd_leibniz, 1e-3))
    checks.append(Check("d_squared_finite_difference", fd_dd, 1e-3))

    # midpoint convergence on the sphere area integrand: halving h must cut the error by >= 3
    sph = ChartDomain("S2", ("theta", "phi"), ((0.0, math.pi), (0.0, 2 * math.pi)), True, {"phi"})
    area = ChartForm.volume(sph, "sin(theta)")
    errs = [abs(integrate_top_form(area, n) - 4 * math.pi) for n in (16, 32, 64)]
    ratio = min(errs[0] / errs[1], errs[1] / errs[2])
    checks.append(Check("quadrature_convergence_ratio_deficit", max(0.0, 3.0 - ratio), 1e-12))
    return checks


def pfaffian_suite(seed: int = 0, trials: int = 20) -> list[Check]:
    """Normalization, block and conjugation properties, and ``Pf^2 = det``."""
    rng = np.random.default_rng(seed)
    res = {"normalization": 0.0, "block_product": 0.0, "conjugation": 0.0, "pf_squared_det_rel": 0.0, "expansion_order": 0.0}
    for _ in range(trials):
        lam = float(rng.normal() * 10)
        res["normalization"] = max(res["normalization"], abs(pfaffian([[0.0, lam], [-lam, 0.0]]) - lam))
        for n in (2, 4, 6, 8):
            a = rng.normal(size=(n, n))
            a = a - a.T
            det = np.linalg.det(a)
            res["pf_squared_det_rel"] = max(res["pf_squared_det_rel"], abs(pfaffian(a) ** 2 - det) / abs(det))
            r = special_ortho_group.rvs(n, random_state=rng) if n > 1 else np.eye(n)
            res["conjugation"] = max(res["conjugation"], conjugation_check(a, r))
            res["expansion_order"] = max(res["expansion_order"], abs(pfaffian(a) - pfaffian(a, row=-1)))
        for s1 in (2, 4, 6):
            s2 = int(rng.choice([k for k in (2, 4, 6) if s1 + k <= 8]))
            a = rng.normal(size=(s1, s1))
            b = rng.normal(size=(s2, s2))
            a, b = a - a.T, b - b.T
            res["block_product"] = max(res["block_product"], abs(pfaffian(block_diag(a, b)) - pfaffian(a) * pfaffian(b)))
    checks = [Check(k, v, 1e-8) for k, v in res.items()]

    # 2-form entries: expansion order and block multiplicativity
    chart = ChartDomain("R4", ("x1", "x2", "x3", "x4"), [(0.2, 1.2)] * 4, True)
    pts = random_points(chart, 64, rng)
    order = blocks = 0.0
    for _ in range(5):
        ent = [[None] * 4 for _ in range(4)]
        for i in range(4):
            ent[i][i] = ChartForm.zero(chart, 2)
            for j in range(i + 1, 4):
                f = random_form(chart, 2, rng, depth=2)
                ent[i][j], ent[j][i] = f, scale(f, -1.0)
        m = SkewFormMatrix(ent)
        order = max(order, _sup(_diff(pfaffian(m), pfaffian(m, row=-1)), pts))
        b1, b2 = m.minor((2, 3)), m.minor((0, 1))
        bd = block_diag(b1, b2)
        blocks = max(blocks, _sup(_diff(pfaffian(bd), wedge(b1[0, 1], b2[0, 1])), pts))
    checks.append(Check("form_expansion_order", order, 1e-10))
    checks.append(Check("form_block_multiplicativity", blocks, 1e-10))
    return checks


def _monopole_over_product(n: int = 1):
    """Rank-2 monopole pulled back to S^2 x S^2 along a map mixing both factors."""
    base = get_model("product_s2xs2").base
    mono = get_model(f"monopole({n})").connection
    return pullback_bundle(mono, base, [Var("theta1"), Var("phi1") + Var("phi2")])


def bundles_suite() -> list[Check]:
    """Catalog invariants, naturality, direct sums and Bianchi identities."""
    from .models import validate_model

    checks: list[Check] = []
    for name in model_names():
        for c in validate_model(get_model(name)):
            c.name = f"{name}:{c.name}"
            checks.append(c)
    # rank-2 bundle over a 4-dimensional base
    lifted = _monopole_over_product(1)
    checks.append(Check("bianchi_monopole_over_s2xs2", bianchi_residual(curvature(lifted)), 1e-4))
    # direct sum curvature is block diagonal and its Pfaffian is the wedge of the blocks
    s2 = get_model("product_s2xs2")
    curv = curvature(s2.connection)
    pts = grid_points(s2.base, 5)
    off = max(_sup(curv.entry(i, j), pts) for i in (1, 2) for j in (3, 4))
    checks.append(Check("direct_sum_block_diagonal", off, 1e-12))
    # factors: pull each sphere back along a projection
    sphere = get_model("sphere_round").connection
    f1 = pullback_bundle(sphere, s2.base, [Var("theta1"), Var("phi1")], check_image=False)
    f2 = pullback_bundle(sphere, s2.base, [Var("theta2"), Var("phi2")], check_image=False)
    summed = curvature(direct_sum(f1, f2))
    eq10 = _sup(_diff(pfaffian(summed.principal), wedge(curvature(f1).entry(1, 2), curvature(f2).entry(1, 2))), pts)
    checks.append(Check("direct_sum_pfaffian_is_wedge", eq10, 1e-10))
    # naturality at the integral level
    pulled = get_model("sphere_degree2_pullback")
    value = integrate_top_form(euler_form(curvature(pulled.connection)), 256)
    base_value = integrate_top_form(euler_form(curvature(sphere)), 256)
    checks.append(Check("naturality_degree2", abs(value - pulled.degree * base_value), 1e-2))
    const = pullback_bundle(sphere, sphere.bundle.base, [Const(1.0), Const(2.0)])
    checks.append(Check("constant_map_integral", abs(integrate_top_form(euler_form(curvature(const)), 64)), 1e-12))
    return checks


def euler_suite(seed: int = 0, perturbations: int = 5, epsilon: float = 0.3) -> list[Check]:
    """Closed Euler forms and connection independence of their integrals."""
    rng = np.random.default_rng(seed)
    checks = []
    for name in model_names():
        m = get_model(name)
        if m.rank != 2:
            checks.append(Check(f"{name}:closedness", closedness_check(curvature(m.connection)), 1e-3))
            continue
        drift = 0.0
        for _ in range(perturbations):
            tau = random_global_one_form(m.base, rng)
            drift = max(drift, perturbation_drift(m.connection, tau, epsilon))
        checks.append(Check(f"{name}:perturbation_drift", drift, 1e-3))
        checks.append(Check(f"{name}:closedness", closedness_check(curvature(m.connection)), 1e-3))
    lifted = curvature(_monopole_over_product(1))
    checks.append(Check("monopole_over_s2xs2:closedness", closedness_check(lifted), 1e-3))
    s2 = get_model("product_s2xs2")
    sphere = get_model("sphere_round").connection
    f1 = pullback_bundle(sphere, s2.base, [Var("theta1"), Var("phi1")], check_image=False)
    f2 = pullback_bundle(sphere, s2.base, [Var("theta2"), Var("phi2")], check_image=False)
    blk = block_euler_form([curvature(f1), curvature(f2)])
    full = euler_form(curvature(s2.connection))
    checks.append(Check("block_euler_equals_euler_form", _sup(_diff(blk, full), grid_points(s2.base, 6)), 1e-10))
    return checks


def thom_checks(model: ModelBundle, profile=None, samples: int = 20, thetas=None) -> list[Check]:
    """Normalization, closedness, invariance and zero-section restriction of the Thom form."""
    profile = profile or make_profile()
    conn = model.connection
    u = thom_form(conn, profile)
    base = model.base
    checks = []
    rng = np.random.default_rng(1)
    xs = random_points(base, 20, rng)
    vals = np.array([fiber_integral(u, x) for x in xs])
    checks.append(Check("fiber_integral", abs(vals[0] - 1.0), 1e-6))
    checks.append(Check("fiber_integral_base_independence", float(np.max(np.abs(vals - vals[0]))), 1e-9))
    checks.append(Check("closedness_du", closedness_residual(u, samples), 1e-3))
    if thetas is None:
        if base.coords == ("theta", "phi"):
            thetas = THETAS
        else:
            a, b = base.coords[:2]
            thetas = ("1.3", b, f"3*{b} + sin({a})")
    for k, th in enumerate(thetas):
        checks.append(Check(f"frame_invariance[{th}]", frame_invariance_check(conn, profile, th), 1e-8))
    restricted = zero_section_restrict(u)
    e = euler_form(curvature(conn))
    pts = grid_points(base, 16)
    checks.append(Check("restriction_equals_euler_form", _sup(_diff(restricted, e), pts), 1e-10))
    # support: every coefficient vanishes exactly once r >= 1
    tpts = grid_points(u.chart, 8)
    r2 = tpts[..., -2] ** 2 + tpts[..., -1] ** 2
    outside = tpts[r2 >= 1.0]
    checks.append(Check("compact_support", float(np.max(np.abs(evaluate_form(u.form, outside, check=False)), initial=0.0)), 1e-300))
    r = np.linspace(0.0, 1.0, 20001)
    checks.append(Check("gamma_prime_identity", float(np.max(np.abs(profile.gamma_prime(r) - profile.rho(r * r) * r))), 1e-8))
    checks.append(Check("gamma_at_zero", abs(float(profile.gamma(0.0)) - 1.0), 1e-12))
    checks.append(Check("gamma_at_one", abs(float(profile.gamma(1.0))), 1e-9))
    return checks


SUITES: dict[str, Callable[[], list[Check]]] = {
    "forms": forms_suite,
    "pfaffian": pfaffian_suite,
    "bundles": bundles_suite,
    "euler": euler_suite,
}
