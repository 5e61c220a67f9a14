"""Scenario runner.

Usage::

    fragsim run scenarios/sec4_3.json [--out DIR] [--rtol R] [--atol A] [--t-end T] [--dump-generator]
    fragsim run-all scenarios/ [--out DIR] ...

Exit codes: 0 success, 2 invalid scenario, 3 integration failure.
``run-all`` exits 1 if any scenario failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import jsonschema
import numpy as np

from .errors import IntegrationError, ModelValidationError, MultiplicityError, ScenarioError
from .integrator import IntegratorConfig, integrate
from .observables import extract_series, total_mass
from .operator import build_generator
from .rates import KernelSpec, RateModel, classify_regime, theta
from .spectral import spectral_data_from_generator, trajectory_gap_series

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_SCHEMA = 2
EXIT_INTEGRATION = 3

_FAMILY = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "linear", "power", "tabulated"]},
        "c": {"type": "number", "minimum": 0},
        "p": {"type": "number"},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["name", "rates", "N", "initial"],
    "properties": {
        "name": {"type": "string", "pattern": r"^[A-Za-z0-9_.\-]+$"},
        "description": {"type": "string"},
        "rates": {
            "type": "object",
            "required": ["decay", "death", "frag"],
            "properties": {"decay": _FAMILY, "death": _FAMILY, "frag": _FAMILY},
            "additionalProperties": False,
        },
        "kernel": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["uniform-binary", "tabulated"]},
                "table": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
            },
            "additionalProperties": False,
        },
        "N": {"type": "integer", "minimum": 1},
        "initial": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["monodisperse"],
                    "properties": {
                        "monodisperse": {
                            "type": "object",
                            "required": ["size", "amount"],
                            "properties": {
                                "size": {"type": "integer", "minimum": 1},
                                "amount": {"type": "number", "minimum": 0},
                            },
                            "additionalProperties": False,
                        }
                    },
                    "additionalProperties": False,
                },
                {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            ]
        },
        "integrator": {
            "type": "object",
            "properties": {
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "dt_init": {"type": "number", "exclusiveMinimum": 0},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "atol": {"type": "number", "exclusiveMinimum": 0},
                "dt_min": {"type": "number", "exclusiveMinimum": 0},
                "dt_max": {"type": "number", "exclusiveMinimum": 0},
                "sample_every": {"type": "number", "exclusiveMinimum": 0},
                "error_control": {"enum": ["per-unit-step", "per-step"]},
            },
            "additionalProperties": False,
        },
        "spectral": {
            "type": "object",
            "properties": {
                "enabled": {"type": "boolean"},
                "fit_window": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    ]
                },
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass
class Scenario:
    name: str
    model: RateModel
    kernel: KernelSpec
    N: int
    f0: np.ndarray
    integrator: IntegratorConfig
    spectral_enabled: bool = True
    fit_window: Optional[Tuple[float, float]] = None
    raw: dict = field(default_factory=dict, repr=False)


def _field_path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse and fully validate a scenario; raise :class:`ScenarioError` on any problem."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None

    errors = sorted(jsonschema.Draft7Validator(SCENARIO_SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{source}: field {_field_path(e)}: {e.message}" for e in errors]
        raise ScenarioError("\n".join(lines))

    N = raw["N"]
    try:
        model = RateModel.from_dict(raw["rates"])
        kernel = KernelSpec.from_dict(raw.get("kernel", {"kind": "uniform-binary"}))
        theta(model, N)
        build_generator(model, kernel, N)
    except ModelValidationError as exc:
        raise ScenarioError(f"{source}: field rates/kernel: {exc}") from None

    init = raw["initial"]
    if isinstance(init, list):
        if len(init) != N:
            raise ScenarioError(f"{source}: field initial: expected {N} entries, got {len(init)}")
        f0 = np.array(init, dtype=float)
    else:
        size = init["monodisperse"]["size"]
        if size > N:
            raise ScenarioError(f"{source}: field initial.monodisperse.size: {size} exceeds N={N}")
        f0 = np.zeros(N)
        f0[size - 1] = init["monodisperse"]["amount"]

    try:
        cfg = IntegratorConfig(**raw.get("integrator", {}))
    except ValueError as exc:
        raise ScenarioError(f"{source}: field integrator: {exc}") from None

    spec = raw.get("spectral", {})
    window = spec.get("fit_window")
    if window is not None:
        if not window[0] < window[1]:
            raise ScenarioError(f"{source}: field spectral.fit_window: lower bound must be below upper bound")
        window = (float(window[0]), float(window[1]))
    return Scenario(
        name=raw["name"],
        model=model,
        kernel=kernel,
        N=N,
        f0=f0,
        integrator=cfg,
        spectral_enabled=spec.get("enabled", True),
        fit_window=window,
        raw=raw,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read: {exc.strerror}") from None
    return parse_scenario(text, source=str(path))


@dataclass
class RunResult:
    name: str
    status: int
    out_dir: Optional[Path] = None
    lambda1: Optional[float] = None
    final_mass: Optional[float] = None
    fitted_rate: Optional[float] = None
    wall_time: float = 0.0
    message: str = ""


def _write_trajectory(path, traj) -> None:
    N = traj.f.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write("t," + ",".join(f"f{n}" for n in range(1, N + 1)) + "\n")
        for t, row in zip(traj.t, traj.f):
            fh.write("%.12g," % t + ",".join("%.12g" % v for v in row) + "\n")


def execute(sc: Scenario, out_dir, dump_generator: bool = False) -> RunResult:
    """Run a parsed scenario and write every output into ``out_dir``."""
    start = time.perf_counter()
    out_dir = Path(out_dir)
    G = build_generator(sc.model, sc.kernel, sc.N)
    try:
        traj = integrate(G, sc.f0, sc.integrator)
    except IntegrationError as exc:
        return RunResult(sc.name, EXIT_INTEGRATION, message=str(exc), wall_time=time.perf_counter() - start)

    regime = classify_regime(sc.model, sc.N) if sc.N >= 2 else None
    manifest = {
        "scenario": sc.raw,
        "integrator": {
            "config": {k: getattr(sc.integrator, k) for k in sc.integrator.__dataclass_fields__},
            "accepted_steps": traj.accepted,
            "rejected_steps": traj.rejected,
            "min_component": float(traj.f.min()),
            "undershoot_tolerance": -1e-9 * float(np.abs(sc.f0) @ np.arange(1, sc.N + 1)),
        },
        "classification": regime.to_dict() if regime else None,
    }

    spectral = {"enabled": sc.spectral_enabled}
    result = RunResult(sc.name, EXIT_OK, out_dir=out_dir)
    gap = sd = None
    if sc.spectral_enabled:
        try:
            sd = spectral_data_from_generator(G, sc.kernel)
        except MultiplicityError as exc:
            spectral["skipped"] = f"dominant eigenvalue not simple: {exc}"
        else:
            spectral.update(sd.to_dict())
            result.lambda1 = sd.lambda1
            if regime is None or not regime.growth_theorem_applies:
                unmet = [
                    k
                    for k in ("analytic_domination", "frag_death_ratio_bounded", "theta_divergent", "strict_min_unique")
                    if regime is None or not getattr(regime, k)
                ]
                spectral["gap_analysis"] = "skipped: asynchronous-growth preconditions unmet: " + ", ".join(unmet)
            else:
                gap = trajectory_gap_series(traj, sd, sc.f0, sc.fit_window)
                spectral.update(gap.summary(sd))
                result.fitted_rate = gap.fitted_rate
    manifest["spectral"] = spectral

    series = extract_series(traj, sc.model)
    result.final_mass = float(total_mass(traj.f[-1]))
    manifest["final_mass"] = result.final_mass

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_trajectory(out_dir / "trajectory.csv", traj)
    for name, ts in series.items():
        ts.write_csv(out_dir / f"{name}.csv")
    if gap is not None:
        gap.write_csv(out_dir / "gap.csv")
        gap.write_summary(out_dir / "gap.json", sd)
    if dump_generator:
        with open(out_dir / "generator.txt", "w") as fh:
            G.dump(fh)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    result.wall_time = time.perf_counter() - start
    return result


def _apply_overrides(sc: Scenario, args) -> Scenario:
    changes = {}
    for attr in ("rtol", "atol", "t_end"):
        value = getattr(args, attr, None)
        if value is not None:
            changes[attr] = value
    if not changes:
        return sc
    try:
        cfg = replace(sc.integrator, **changes)
    except ValueError as exc:
        raise ScenarioError(f"invalid override: {exc}") from None
    raw = dict(sc.raw)
    raw["integrator"] = {**raw.get("integrator", {}), **changes}
    return replace(sc, integrator=cfg, raw=raw)


def run_scenario(path, out=None, args=None, dump_generator=False) -> RunResult:
    """Load, run and write one scenario; never raises for scenario-level failures."""
    start = time.perf_counter()
    name = Path(path).stem
    try:
        sc = load_scenario(path)
        if args is not None:
            sc = _apply_overrides(sc, args)
    except ScenarioError as exc:
        return RunResult(name, EXIT_SCHEMA, message=str(exc), wall_time=time.perf_counter() - start)
    out_dir = Path(out) if out is not None else Path("results") / sc.name
    return execute(sc, out_dir, dump_generator=dump_generator)


def _fmt(value, spec):
    return "n/a" if value is None else format(value, spec)


def format_table(results: List[RunResult]) -> str:
    header = f"{'scenario':<16} {'lambda1':>10} {'final_mass':>14} {'gap_rate':>10} {'wall_s':>8}  status"
    lines = [header]
    for r in results:
        status = "ok" if r.status == EXIT_OK else f"FAILED({r.status})"
        lines.append(
            f"{r.name:<16} {_fmt(r.lambda1, '.6g'):>10} {_fmt(r.final_mass, '.6g'):>14} "
            f"{_fmt(r.fitted_rate, '.4f'):>10} {r.wall_time:8.2f}  {status}"
        )
    return "\n".join(lines)


def run_all(directory, out=None, args=None, dump_generator=False) -> Tuple[List[RunResult], int]:
    """Run every ``*.json`` scenario in ``directory``; results keep file order."""
    paths = sorted(Path(directory).glob("*.json"))
    base = Path(out) if out is not None else Path("results")
    if not paths:
        return [], EXIT_OK
    workers = int(os.environ.get("FRAGSIM_THREADS", "0")) or len(paths)

    def one(p):
        return run_scenario(p, out=base / p.stem, args=args, dump_generator=dump_generator)

    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(paths)))) as pool:
        results = list(pool.map(one, paths))
    code = EXIT_OK if all(r.status == EXIT_OK for r in results) else EXIT_FAILED
    return results, code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragsim", description="Decay-fragmentation scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, target, helptext in (
        ("run", "file", "run one scenario file"),
        ("run-all", "dir", "run every scenario in a directory"),
    ):
        p = sub.add_parser(cmd, help=helptext)
        p.add_argument(target)
        p.add_argument("--out", help="output directory (default ./results/<name>)")
        p.add_argument("--rtol", type=float)
        p.add_argument("--atol", type=float)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--dump-generator", action="store_true", help="write the dense generator to generator.txt")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "run":
        res = run_scenario(args.file, out=args.out, args=args, dump_generator=args.dump_generator)
        if res.status != EXIT_OK:
            print(res.message, file=sys.stderr)
        else:
            print(format_table([res]))
        return res.status
    directory = Path(args.dir)
    if not directory.is_dir():
        print(f"{directory}: not a directory", file=sys.stderr)
        return EXIT_SCHEMA
    results, code = run_all(directory, out=args.out, args=args, dump_generator=args.dump_generator)
    print(format_table(results))
    for r in results:
        if r.status != EXIT_OK:
            print(f"{r.name}: {r.message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
