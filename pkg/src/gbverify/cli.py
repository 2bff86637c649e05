"""Command-line entry point: ``gbverify``.

Exit status is 0 when every check passes, 1 when a verification check
fails, and 2 on usage or model-loading errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .euler import Check, EulerReport, default_resolution, gauss_bonnet
from .forms import integrate_top_form
from .models import ModelBundle, ModelError, get_model, load_model, model_names
from .suites import SUITES, thom_checks
from .thom import make_profile, thom_form, zero_section_restrict

THREADS_ENV = "GBVERIFY_THREADS"


@dataclass
class RunConfig:
    model: str | None = None
    resolution: int | None = None
    tolerance: float | None = None
    output: Path | None = None
    threads: int = 1
    suite: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.resolution is not None and self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.threads == 0:
            self.threads = os.cpu_count() or 1


def _resolve_model(spec: str) -> ModelBundle:
    path = Path(spec)
    if spec.endswith(".toml") or path.exists():
        return load_model(path)
    return get_model(spec)


def _suite_report(name: str, checks: list[Check], ms: float) -> dict:
    return {
        "model": f"suite:{name}",
        "rank": None,
        "q": None,
        "computed": None,
        "reference": None,
        "abs_error": None,
        "resolution": None,
        "duration_ms": ms,
        "checks": [c.to_json() for c in checks],
    }


def _print_checks(title: str, checks: list[Check]):
    for c in checks:
        flag = "PASS" if c.passed else "FAIL"
        print(f"  [{flag}] {title}:{c.name} residual={c.residual:.3e} tol={c.tolerance:.1e}")


def run_gauss_bonnet(cfg: RunConfig) -> dict:
    model = _resolve_model(cfg.model)
    rep = gauss_bonnet(model, cfg.resolution, cfg.threads, cfg.tolerance)
    print(f"{model.name}: computed={rep.computed:.9f} reference={rep.reference} abs_error={rep.abs_error:.3e} resolution={rep.resolution}")
    _print_checks(model.name, rep.checks)
    return rep.to_json()


def run_thom(cfg: RunConfig) -> dict:
    model = _resolve_model(cfg.model)
    if model.rank != 2:
        raise ModelError(f"Thom checks need a rank-2 model, {model.name!r} has rank {model.rank}", "rank")
    t0 = time.perf_counter()
    profile = make_profile()
    checks = thom_checks(model, profile)
    res = cfg.resolution or default_resolution(model.base.dim)
    restricted = zero_section_restrict(thom_form(model.connection, profile))
    value = integrate_top_form(restricted, res, cfg.threads)
    tol = cfg.tolerance or 1e-3
    checks.append(Check("restriction_integral", abs(value - model.chi), tol))
    rep = EulerReport(model.name, 2, 1, value, model.chi, res, (time.perf_counter() - t0) * 1e3, checks)
    print(f"{model.name} (thom): integral of zero-section restriction={value:.9f} reference={model.chi}")
    _print_checks(model.name, checks)
    return rep.to_json()


def run_suite(name: str) -> dict:
    t0 = time.perf_counter()
    checks = SUITES[name]()
    ms = (time.perf_counter() - t0) * 1e3
    print(f"suite {name}: {sum(c.passed for c in checks)}/{len(checks)} checks passed")
    _print_checks(name, checks)
    return _suite_report(name, checks, ms)


def run_all(cfg: RunConfig) -> list[dict]:
    reports = []
    for name in model_names():
        sub = RunConfig(name, None, None, None, cfg.threads)
        reports.append(run_gauss_bonnet(sub))
        model = get_model(name)
        if model.rank == 2 and model.base.dim == 2:
            reports.append(run_thom(sub))
    for suite in SUITES:
        reports.append(run_suite(suite))
    return reports


def _passed(report) -> bool:
    items = report if isinstance(report, list) else [report]
    return all(c["pass"] for r in items for c in r["checks"])


def _write(report, out: Path | None):
    if out is None:
        return
    Path(out).write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbverify", description="Numerical Gauss-Bonnet and Thom-form verification")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list-models", help="list built-in models")

    verify = sub.add_parser("verify", help="run verification checks")
    vsub = verify.add_subparsers(dest="target", required=True)

    def common(p, model=True):
        if model:
            p.add_argument("--model", required=True, help="catalog name or path to a .toml model file")
            p.add_argument("--resolution", type=int, default=None, help="cells per axis")
            p.add_argument("--tolerance", type=float, default=None, help="override the integral tolerance")
        p.add_argument("--json", dest="output", type=Path, default=None, help="write a JSON report here")
        p.add_argument("--threads", type=int, default=None, help=f"quadrature threads, 0 = all cores (default ${THREADS_ENV} or 1)")

    common(vsub.add_parser("gauss-bonnet", help="integrate the Euler form of a model"))
    common(vsub.add_parser("thom", help="check the Thom form of a rank-2 model"))
    props = vsub.add_parser("properties", help="run a randomized property suite")
    props.add_argument("--suite", required=True, choices=sorted(SUITES))
    common(props, model=False)
    common(vsub.add_parser("all", help="every model and every suite"), model=False)
    return parser


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"${THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "list-models":
        for name in model_names():
            m = get_model(name)
            print(f"{name:26s} rank={m.rank} dim={m.base.dim} chi={m.chi:+d}  {m.description}")
        return 0
    try:
        cfg = RunConfig(
            getattr(args, "model", None),
            getattr(args, "resolution", None),
            getattr(args, "tolerance", None),
            args.output,
            _threads(args.threads),
            getattr(args, "suite", None),
        )
        if args.target == "gauss-bonnet":
            report = run_gauss_bonnet(cfg)
        elif args.target == "thom":
            report = run_thom(cfg)
        elif args.target == "properties":
            report = run_suite(cfg.suite)
        else:
            report = run_all(cfg)
    except (ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write(report, cfg.output)
    ok = _passed(report)
    print("OK" if ok else "FAILED")
    return 0 if ok else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
