"""Built-in catalog of model bundles and the model definition file loader.

Model files are TOML::

    [model]
    name = "sphere_round"
    rank = 2

    [[chart]]
    name = "principal"
    coords = ["theta", "phi"]
    box = [[0, "pi"], [0, "2*pi"]]
    principal = true
    periodic = ["phi"]

    [[transition]]
    from = "principal"
    to = "north"
    matrix = [["cos(phi)", "-sin(phi)"], ["sin(phi)", "cos(phi)"]]

    [[connection]]
    chart = "principal"
    [[connection.entry]]
    i = 1
    j = 2
    form = { phi = "cos(theta)" }

    [reference]
    chi = 2
    derivation = "octahedron: 6 - 12 + 8"
    degree = 1

Entries ``(j, i)`` not listed are filled in as ``-omega_ij``; listing both
makes the loader check skewness instead.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bundles import (
    BundleError,
    FramedBundle,
    MetricConnection,
    curvature,
    frame_change_check,
    product,
    pullback_bundle,
    rotate_frame,
    rotation,
    sup_norm,
)
from .euler import Check
from .exprlang import Const, Func, ParseError, Var, evaluate, parse
from .forms import ChartDomain, ChartForm, FormError, add, grid_points, scale

__all__ = [
    "ModelError",
    "ModelBundle",
    "catalog",
    "get_model",
    "model_names",
    "load_model",
    "validate_model",
    "sphere_round",
    "flat_torus",
    "torus_revolution",
    "monopole",
    "product_s2xs2",
    "sphere_degree2_pullback",
    "DATA_DIR",
]

DATA_DIR = Path(__file__).parent / "data"
PI = math.pi


class ModelError(ValueError):
    """A model could not be loaded; ``check`` names the failed test."""

    def __init__(self, message: str, check: str = "parse", point=None):
        self.check = check
        self.point = point
        super().__init__(message)


@dataclass
class ModelBundle:
    name: str
    connection: MetricConnection
    chi: int
    derivation: str
    degree: int | None = None
    description: str = ""
    tags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.derivation.strip():
            raise ModelError(f"model {self.name!r} needs a derivation note for its reference value", "reference")

    @property
    def rank(self) -> int:
        return self.connection.rank

    @property
    def bundle(self) -> FramedBundle:
        return self.connection.bundle

    @property
    def base(self) -> ChartDomain:
        return self.connection.bundle.base


def _zero(ch):
    return ChartForm.zero(ch, 1)


def _rank2(charts: dict, principal: str, omegas: dict, transitions=None) -> MetricConnection:
    b = FramedBundle(2, charts, principal, transitions or {})
    om = {}
    for name, w in omegas.items():
        ch = charts[name]
        w = ChartForm.one_form(ch, w) if isinstance(w, dict) else w
        om[name] = [[_zero(ch), w], [scale(w, -1.0), _zero(ch)]]
    return MetricConnection(b, om)


def _sphere_chart(name="principal", lo=0.0, hi=PI, covers=True) -> ChartDomain:
    return ChartDomain(name, ("theta", "phi"), ((lo, hi), (0.0, 2 * PI)), covers, {"phi"})


def sphere_round() -> ModelBundle:
    """Tangent bundle of the unit sphere, frame ``(d_theta, d_phi / sin(theta))``."""
    p = _sphere_chart()
    north = _sphere_chart("north", 0.0, 2 * PI / 3, False)
    phi = Var("phi")
    conn = _rank2(
        {"principal": p, "north": north},
        "principal",
        {"principal": {"phi": "cos(theta)"}, "north": {"phi": "cos(theta) - 1"}},
        {("principal", "north"): rotation(-phi)},
    )
    return ModelBundle(
        "sphere_round",
        conn,
        2,
        "octahedron triangulation of S^2: V - E + F = 6 - 12 + 8 = 2",
        description="TS^2 with the Levi-Civita connection of the round metric",
    )


def flat_torus() -> ModelBundle:
    ch = ChartDomain("principal", ("x", "y"), ((0.0, 2 * PI), (0.0, 2 * PI)), True, {"x", "y"})
    aux = ChartDomain("rotated", ("x", "y"), ((0.0, 2 * PI), (0.0, 2 * PI)), False, {"x", "y"})
    conn = _rank2(
        {"principal": ch, "rotated": aux},
        "principal",
        {"principal": _zero(ch), "rotated": {"x": 1.0}},
        {("principal", "rotated"): rotation(Var("x"))},
    )
    return ModelBundle(
        "flat_torus",
        conn,
        0,
        "3x3 grid triangulation of the square torus: V - E + F = 9 - 27 + 18 = 0",
        description="TT^2 of the flat square torus, trivial connection",
    )


def torus_revolution(R: float = 2.0, r: float = 1.0) -> ModelBundle:
    """Torus of revolution with tube radius ``r`` and center radius ``R``.

    In the frame ``(d_u / r, d_v / (R + r cos u))`` the Levi-Civita form is
    ``d(R + r cos u)/(r du) dv = -sin(u) dv``, independent of ``R`` and ``r``.
    """
    ch = ChartDomain("principal", ("u", "v"), ((0.0, 2 * PI), (0.0, 2 * PI)), True, {"u", "v"})
    aux = ChartDomain("rotated", ("u", "v"), ((0.0, 2 * PI), (0.0, 2 * PI)), False, {"u", "v"})
    conn = _rank2(
        {"principal": ch, "rotated": aux},
        "principal",
        {"principal": {"v": "-sin(u)"}, "rotated": {"u": 1.0, "v": "1 - sin(u)"}},
        {("principal", "rotated"): rotation(Var("u") + Var("v"))},
    )
    return ModelBundle(
        "torus_revolution",
        conn,
        0,
        "3x3 grid triangulation of the torus: V - E + F = 9 - 27 + 18 = 0",
        description=f"TT^2 of the embedded torus (R={R}, r={r}); Gaussian curvature cos(u)/(r(R + r cos u))",
    )


def monopole(n: int) -> ModelBundle:
    """Charge-``n`` plane bundle over S^2 with ``omega_12 = (n/2)(1 - cos theta) dphi``.

    The south chart uses ``-(n/2)(1 + cos theta) dphi``; the frames differ by a
    rotation through ``-n phi``.
    """
    n = int(n)
    p = _sphere_chart()
    south = _sphere_chart("south", PI / 3, PI, False)
    half = Const(n / 2.0)
    cos = Func("cos", Var("theta"))
    conn = _rank2(
        {"principal": p, "south": south},
        "principal",
        {"principal": {"phi": half * (1.0 - cos)}, "south": {"phi": -half * (1.0 + cos)}},
        {("principal", "south"): rotation(-float(n) * Var("phi"))},
    )
    return ModelBundle(
        _monopole_name(n),
        conn,
        -n,
        "reference -n; n = -2 reproduces the curvature of TS^2, chi(S^2) = 6 - 12 + 8 = 2",
        description=f"monopole bundle of charge {n}",
        tags=("monopole",),
    )


def _monopole_name(n: int) -> str:
    return "monopole_0" if n == 0 else f"monopole_{'m' if n < 0 else 'p'}{abs(n)}"


def product_s2xs2() -> ModelBundle:
    s = sphere_round().connection
    conn = product(s, s)
    return ModelBundle(
        "product_s2xs2",
        conn,
        4,
        "product cell structure of S^2 x S^2: chi = chi(S^2) * chi(S^2) = 2 * 2 = 4",
        description="TS^2 (+) TS^2 over S^2 x S^2, coordinates (theta1, phi1, theta2, phi2)",
    )


def sphere_degree2_pullback() -> ModelBundle:
    s = sphere_round().connection
    src = _sphere_chart()
    north = _sphere_chart("north", 0.0, 2 * PI / 3, False)
    mp = [Var("theta"), 2.0 * Var("phi")]
    conn = pullback_bundle(s, src, mp, charts={"north": (north, mp)})
    return ModelBundle(
        "sphere_degree2_pullback",
        conn,
        4,
        "pullback of TS^2 along (theta, phi) -> (theta, 2 phi), a map of degree 2: 2 * chi(S^2) = 4",
        degree=2,
        description="f*TS^2 for the degree-2 map winding the sphere twice about its axis",
    )


_BUILDERS = {
    "sphere_round": sphere_round,
    "flat_torus": flat_torus,
    "torus_revolution": torus_revolution,
    **{_monopole_name(n): functools.partial(monopole, n) for n in range(-3, 4)},
    "product_s2xs2": product_s2xs2,
    "sphere_degree2_pullback": sphere_degree2_pullback,
}


def model_names() -> list[str]:
    return list(_BUILDERS)


@functools.lru_cache(maxsize=None)
def _build(name: str) -> ModelBundle:
    return _BUILDERS[name]()


def get_model(name: str) -> ModelBundle:
    """Catalog model by name; ``monopole(n)`` is accepted for the monopole family."""
    m = re.fullmatch(r"monopole\((-?\d+)\)", name)
    if m:
        name = _monopole_name(int(m.group(1)))
    if name not in _BUILDERS:
        raise ModelError(f"unknown model {name!r}; known: {', '.join(_BUILDERS)}", "unknown")
    return _build(name)


def catalog() -> list[ModelBundle]:
    return [get_model(n) for n in _BUILDERS]


def validate_model(model: ModelBundle, theta: str | None = None) -> list[Check]:
    """Frame-change laws on every overlap and, for rank 2, curvature invariance under a frame rotation."""
    conn = model.connection
    checks = [Check("skewness", conn.check_skew(), 1e-10)]
    for u, v in conn.bundle.transitions:
        r_omega, r_curv = frame_change_check(conn, u, v)
        checks.append(Check(f"frame_change_omega[{u}->{v}]", r_omega, 1e-6))
        checks.append(Check(f"frame_change_curvature[{u}->{v}]", r_curv, 1e-5))
    if conn.rank == 2:
        base = conn.bundle.base
        th = theta or " + ".join(f"sin({c})" for c in base.coords)
        before = curvature(conn).entry(1, 2)
        after = curvature(rotate_frame(conn, th)).entry(1, 2)
        r, _ = sup_norm(add(after, scale(before, -1.0)), grid_points(base, 8))
        checks.append(Check("rotate_frame_curvature", r, 1e-6))
    return checks


# ---------------------------------------------------------------------------
# definition files


def _const(value, where: str) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(evaluate(parse(str(value), [])))
    except ParseError as exc:
        raise ModelError(f"{where}: {exc}") from None


def _expr(chart: ChartDomain, source, where: str):
    if isinstance(source, (int, float)):
        source = repr(float(source))
    try:
        return chart.parse(str(source))
    except ParseError as exc:
        raise ModelError(f"{where}: {exc}") from None


def load_model(source: str | Path) -> ModelBundle:
    """Load and validate a model from a TOML file path or TOML text."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and source.endswith(".toml")):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ModelError(f"cannot read model file {source}: {exc}", "io") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelError(f"model file syntax error: {exc}") from None

    try:
        head = doc["model"]
        name = head["name"]
        rank = int(head["rank"])
        ref = doc["reference"]
        chart_specs = doc["chart"]
    except KeyError as exc:
        raise ModelError(f"missing required key {exc}") from None

    charts = {}
    principal = None
    for k, spec in enumerate(chart_specs):
        where = f"chart[{k}]"
        try:
            box = [(_const(lo, f"{where}.box"), _const(hi, f"{where}.box")) for lo, hi in spec["box"]]
            ch = ChartDomain(spec["name"], tuple(spec["coords"]), tuple(box), bool(spec.get("principal", False)), frozenset(spec.get("periodic", ())))
        except KeyError as exc:
            raise ModelError(f"{where}: missing key {exc}") from None
        except (FormError, ValueError, TypeError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"{where}: {exc}") from None
        if ch.name in charts:
            raise ModelError(f"{where}: duplicate chart name {ch.name!r}")
        charts[ch.name] = ch
        if ch.covers:
            if principal is not None:
                raise ModelError(f"{where}: more than one principal chart")
            principal = ch.name
    if principal is None:
        raise ModelError("no chart is marked principal")

    transitions = {}
    for k, spec in enumerate(doc.get("transition", [])):
        where = f"transition[{k}]"
        u, v = spec.get("from"), spec.get("to")
        if u not in charts or v not in charts:
            raise ModelError(f"{where}: unknown chart in {u!r} -> {v!r}")
        mat = spec.get("matrix", [])
        transitions[(u, v)] = tuple(
            tuple(_expr(charts[u], e, f"{where}.matrix[{i}][{j}]") for j, e in enumerate(row)) for i, row in enumerate(mat)
        )

    omega = {name: [[ChartForm.zero(ch, 1) for _ in range(rank)] for _ in range(rank)] for name, ch in charts.items()}
    given = {name: set() for name in charts}
    for k, spec in enumerate(doc.get("connection", [])):
        cname = spec.get("chart")
        if cname not in charts:
            raise ModelError(f"connection[{k}]: unknown chart {cname!r}")
        ch = charts[cname]
        for e, entry in enumerate(spec.get("entry", [])):
            where = f"connection[{k}].entry[{e}]"
            try:
                i, j = int(entry["i"]), int(entry["j"])
                comps = entry["form"]
            except KeyError as exc:
                raise ModelError(f"{where}: missing key {exc}") from None
            if not (1 <= i <= rank and 1 <= j <= rank):
                raise ModelError(f"{where}: index ({i},{j}) outside 1..{rank}")
            unknown = set(comps) - set(ch.coords)
            if unknown:
                raise ModelError(f"{where}: form components for unknown coordinates {sorted(unknown)}")
            form = ChartForm.one_form(ch, {c: _expr(ch, s, f"{where}.form.{c}") for c, s in comps.items()})
            omega[cname][i - 1][j - 1] = form
            given[cname].add((i, j))
    for cname, pairs in given.items():
        for i, j in pairs:
            if (j, i) not in pairs and i != j:
                omega[cname][j - 1][i - 1] = scale(omega[cname][i - 1][j - 1], -1.0)

    try:
        bundle = FramedBundle(rank, charts, principal, transitions)
        conn = MetricConnection(bundle, omega)
    except BundleError as exc:
        raise ModelError(f"model {name!r} failed {exc.check or 'validation'}: {exc}", exc.check or "validation", exc.point) from None
    except FormError as exc:
        raise ModelError(f"model {name!r}: {exc}", "validation") from None

    model = ModelBundle(
        name,
        conn,
        int(ref.get("chi", 0)),
        str(ref.get("derivation", "")),
        ref.get("degree"),
        str(head.get("description", "")),
    )
    for c in validate_model(model):
        if not c.passed:
            raise ModelError(f"model {name!r} failed {c.name} (residual {c.residual:.3g})", c.name)
    return model
