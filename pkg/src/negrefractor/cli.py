"""Command-line front end: config ingestion, solve/trace/export dispatch,
deterministic serialization.

Configs are strict JSON (unknown keys are rejected so typos cannot silently
change a run).  Angles are degrees in configs, radians internally.  On load,
all target coordinates are rescaled so the nearest target sits at distance 1;
the scale factor is echoed in the report.  Reports carry a SHA-256 over their
deterministic section; wall-clock timings live outside it.

Exit codes: 0 ok, 2 parse/schema, 3 validation, 4 non-convergence,
5 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__, fresnel, solver
from .fresnel import AdmissibilityMargin, MediumPair
from .geometry import make_cap
from .raytrace import energy_audit, trace_field
from .refractor import EmissionDensity, RefractorState, TargetSpec
from .solver import ProblemConfig, Tolerances, ValidationFailure

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGENCE = 4
EXIT_INTERNAL = 5


class SchemaError(ValueError):
    """Config file violates the strict schema."""


# ---------------------------------------------------------------------------
# deterministic JSON
# ---------------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite number in report: {x}")
    return format(float(x), ".17g")


def canonical_json(obj) -> str:
    """JSON text with floats at 17 significant digits and stable layout."""
    if isinstance(obj, dict):
        items = ",".join(
            f"{json.dumps(str(k))}:{canonical_json(v)}" for k, v in obj.items()
        )
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, np.ndarray):
        return canonical_json(obj.tolist())
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def report_bytes(report: dict) -> bytes:
    return canonical_json(report).encode()


def finalize_report(report: dict, wall_times: dict) -> str:
    body = report_bytes(report)
    sha = hashlib.sha256(body).hexdigest()
    return (
        '{"report":'
        + body.decode()
        + ',"report_sha256":'
        + json.dumps(sha)
        + ',"wall_times":'
        + canonical_json(wall_times)
        + "}"
    )


# ---------------------------------------------------------------------------
# strict schema
# ---------------------------------------------------------------------------

def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise SchemaError(f"unknown key(s) {sorted(unknown)} in {where}")


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise SchemaError(f"missing required key '{key}' in {where}")
    return d[key]


def _number(v, key: str):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"key '{key}' must be a number, got {type(v).__name__}")
    return float(v)


def load_config(path: str):
    """Parse and validate a config file into a ProblemConfig.

    Returns (config, echo) where echo is the deterministic config record for
    the report (including the normalization scale applied to lengths).
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("config root must be an object")
    _check_keys(
        raw,
        {
            "kappa", "sigma", "alpha_parallel", "dimension", "source",
            "epsilon", "targets", "b1", "tau", "r0", "quadrature_level",
            "tolerances", "seed",
        },
        "config root",
    )
    kappa = _number(_need(raw, "kappa", "config root"), "kappa")
    sigma = _number(raw.get("sigma", 1.0), "sigma")
    alpha = _number(raw.get("alpha_parallel", 0.5), "alpha_parallel")
    dim = _need(raw, "dimension", "config root")
    if dim not in (2, 3):
        raise SchemaError(f"dimension must be 2 or 3, got {dim!r}")

    source = _need(raw, "source", "config root")
    if not isinstance(source, dict):
        raise SchemaError("source must be an object")
    _check_keys(source, {"axis", "half_angle_deg", "density"}, "source")
    axis = _need(source, "axis", "source")
    if not isinstance(axis, list) or len(axis) != dim:
        raise SchemaError(f"source.axis must be a list of {dim} numbers")
    half_angle = np.deg2rad(_number(_need(source, "half_angle_deg", "source"), "half_angle_deg"))
    density_spec = source.get("density", "uniform")
    if density_spec == "uniform":
        density = EmissionDensity.uniform(1.0)
    elif isinstance(density_spec, dict):
        _check_keys(density_spec, {"table"}, "source.density")
        table = _need(density_spec, "table", "source.density")
        if not isinstance(table, list) or not table:
            raise SchemaError("source.density.table must be a nonempty list")
        density = EmissionDensity.from_table([_number(v, "table entry") for v in table])
    else:
        raise SchemaError('source.density must be "uniform" or {"table": [...]}')

    epsilon = _number(_need(raw, "epsilon", "config root"), "epsilon")
    targets_raw = _need(raw, "targets", "config root")
    if not isinstance(targets_raw, list) or not targets_raw:
        raise SchemaError("targets must be a nonempty list")
    points, weights = [], []
    for i, entry in enumerate(targets_raw):
        if not isinstance(entry, dict):
            raise SchemaError(f"targets[{i}] must be an object")
        _check_keys(entry, {"P", "g"}, f"targets[{i}]")
        P = _need(entry, "P", f"targets[{i}]")
        if not isinstance(P, list) or len(P) != dim:
            raise SchemaError(f"targets[{i}].P must be a list of {dim} numbers")
        points.append([_number(v, "P entry") for v in P])
        weights.append(_number(_need(entry, "g", f"targets[{i}]"), "g"))

    b1 = _number(_need(raw, "b1", "config root"), "b1")
    tau = _number(_need(raw, "tau", "config root"), "tau")
    r0 = _number(_need(raw, "r0", "config root"), "r0")
    level = _need(raw, "quadrature_level", "config root")
    if not isinstance(level, int) or isinstance(level, bool) or level < 1:
        raise SchemaError("quadrature_level must be a positive integer")

    tol_raw = raw.get("tolerances", {})
    if not isinstance(tol_raw, dict):
        raise SchemaError("tolerances must be an object")
    _check_keys(tol_raw, {"measure_tol", "b_tol", "max_outer"}, "tolerances")
    tolerances = Tolerances(
        measure_tol=_number(tol_raw.get("measure_tol", 1e-4), "measure_tol"),
        b_tol=_number(tol_raw.get("b_tol", 1e-10), "b_tol"),
        max_outer=int(tol_raw.get("max_outer", 200)),
    )
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise SchemaError("seed must be an integer")

    # normalization: nearest target distance becomes the length unit
    pts = np.asarray(points, dtype=float)
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms <= 0.0):
        raise SchemaError("target points must be nonzero")
    scale = float(norms.min())
    pts = pts / scale

    config = ProblemConfig(
        domain=make_cap(axis, half_angle, dim),
        density=density,
        medium=MediumPair(kappa=kappa, sigma=sigma, alpha=alpha),
        margin=AdmissibilityMargin(epsilon),
        targets=TargetSpec(pts, np.asarray(weights, dtype=float)),
        b1=b1 / scale,
        tau=tau,
        r0=r0 / scale,
        quadrature_level=level,
        tolerances=tolerances,
        seed=seed,
    )
    echo = dict(raw)
    echo["normalization_scale"] = scale
    return config, echo


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def export_surface(state: RefractorState, rule, path: str, fmt: str) -> None:
    """Write the envelope surface: OBJ triangle mesh (n=3) or CSV polyline (n=2)."""
    from .refractor import assign_envelope, sheet_radii

    H = sheet_radii(state, rule.nodes)
    rho, _, _ = assign_envelope(H, state.envelope_sense, state.tie_tol)
    if fmt == "csv":
        if rule.domain.dim != 2:
            raise ValueError("csv polyline export is for 2-D surfaces")
        angles = np.arctan2(rule.nodes[:, 1], rule.nodes[:, 0])
        with open(path, "w") as fh:
            fh.write("angle,rho\n")
            for a, r in zip(angles, rho):
                fh.write(f"{_fmt_float(a)},{_fmt_float(r)}\n")
        return
    if fmt != "obj":
        raise ValueError(f"unknown export format {fmt!r}")
    if rule.domain.dim != 3:
        raise ValueError("obj export is for 3-D surfaces")
    n_polar, n_az = rule.grid_shape
    verts = rho[:, None] * rule.nodes
    lines = ["# envelope refractor surface"]
    for v in verts:
        lines.append(f"v {_fmt_float(v[0])} {_fmt_float(v[1])} {_fmt_float(v[2])}")
    for i in range(n_polar - 1):
        for k in range(n_az):
            a = i * n_az + k + 1
            b = i * n_az + (k + 1) % n_az + 1
            c = (i + 1) * n_az + k + 1
            d = (i + 1) * n_az + (k + 1) % n_az + 1
            lines.append(f"f {a} {b} {d}")
            lines.append(f"f {a} {d} {c}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trace_csv(state: RefractorState, rule, margin, path: str) -> None:
    Z, m_dir, assigned, tie, focus_err, r, t = trace_field(state, rule, margin)
    dim = rule.domain.dim
    cols = (
        [f"x{i}" for i in range(dim)]
        + [f"z{i}" for i in range(dim)]
        + [f"m{i}" for i in range(dim)]
        + ["active", "focus_error", "r", "t", "skipped"]
    )
    ok = ~tie
    best_err = np.full(rule.count, np.nan)
    if np.any(ok):
        idx = np.nonzero(ok)[0]
        best_err[idx] = focus_err[idx, assigned[idx]]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(rule.count):
            row = list(rule.nodes[i]) + list(Z[i]) + list(m_dir[i])
            vals = [(_fmt_float(v) if v == v else "nan") for v in row]
            vals.append(str(int(assigned[i])))
            vals.append(_fmt_float(best_err[i]) if ok[i] else "nan")
            vals.append(_fmt_float(r[i]) if ok[i] else "nan")
            vals.append(_fmt_float(t[i]) if ok[i] else "nan")
            vals.append("true" if tie[i] else "false")
            fh.write(",".join(vals) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _versions() -> dict:
    return {
        "negrefractor": __version__,
        "numpy": np.__version__,
        "python": ".".join(map(str, sys.version_info[:3])),
    }


def cmd_validate(args) -> int:
    config, echo = load_config(args.config)
    report = solver.validate(config)
    doc = {"config": echo, "validation": report.to_dict(), "versions": _versions()}
    text = finalize_report(doc, {})
    _write_or_print(text, args.out)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _state_from_report(config: ProblemConfig, report_path: str) -> RefractorState:
    with open(report_path) as fh:
        doc = json.load(fh)
    b = np.asarray(doc["report"]["solve"]["b"], dtype=float)
    return RefractorState(config.medium, config.targets, b)


def _write_or_print(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    config, echo = load_config(args.config)
    rule = config.rule()
    t1 = time.perf_counter()
    report = solver.solve_discrete(config, rule)
    t2 = time.perf_counter()
    ok_weak, certificate = solver.verify_weak(report.state, config, rule)
    audit = energy_audit(report.state, rule, config.density)
    t3 = time.perf_counter()
    doc = {
        "config": echo,
        "validation": report.validation.to_dict(),
        "solve": report.to_dict(),
        "weak_certificate": {"ok": ok_weak, "entries": certificate},
        "audit": audit.to_dict(),
        "versions": _versions(),
    }
    del doc["solve"]["validation"]  # already at top level
    text = finalize_report(
        doc,
        {
            "setup_s": t1 - t0,
            "solve_s": t2 - t1,
            "audit_s": t3 - t2,
        },
    )
    _write_or_print(text, args.out)
    if args.export:
        export_surface(report.state, rule, args.export, args.export_format)
    return EXIT_OK if report.converged else EXIT_NONCONVERGENCE


def cmd_trace(args) -> int:
    config, echo = load_config(args.config)
    rule = config.rule()
    state = _state_from_report(config, args.state)
    write_trace_csv(state, rule, None, args.out_csv)
    audit = energy_audit(state, rule, config.density)
    doc = {"config": echo, "audit": audit.to_dict(), "versions": _versions()}
    _write_or_print(finalize_report(doc, {}), args.out)
    return EXIT_OK


def cmd_fresnel_table(args) -> int:
    medium = MediumPair(kappa=args.kappa, sigma=args.sigma, alpha=args.alpha)
    margin = AdmissibilityMargin(args.epsilon)
    t_min, t_max = margin.window(args.kappa)
    if medium.regime is fresnel.Regime.CRITICAL:
        t_min = -1.0 + args.epsilon
    cs = np.linspace(t_min, t_max, args.samples)
    rows = ["c,p,q,r,t"]
    for c in cs:
        if medium.regime is fresnel.Regime.CRITICAL:
            p = q = 0.0
            r = 0.0
        else:
            p = fresnel.p_coefficient(float(c), medium)
            q = fresnel.q_coefficient(float(c), medium)
            r = fresnel.reflectance(float(c), medium, margin)
        rows.append(
            ",".join(_fmt_float(v) for v in (c, p, q, r, 1.0 - r))
        )
    _write_or_print("\n".join(rows), args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    config, _ = load_config(args.config)
    rule = config.rule()
    state = _state_from_report(config, args.state)
    export_surface(state, rule, args.out, args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="negrefractor",
        description="Near-field refractor synthesis in negative-index media",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config against the standing assumptions")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("solve", help="synthesize the refractor and write the report")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--export", default=None, help="also write the surface mesh here")
    p.add_argument("--export-format", default="obj", choices=["obj", "csv"])
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("trace", help="ray-trace a solved state and audit the energy ledger")
    p.add_argument("config")
    p.add_argument("--state", required=True, help="solve report JSON")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("fresnel-table", help="tabulate Fresnel coefficients over the window")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_fresnel_table)

    p = sub.add_parser("export", help="write the surface mesh of a solved state")
    p.add_argument("config")
    p.add_argument("--state", required=True)
    p.add_argument("--format", default="obj", choices=["obj", "csv"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (SchemaError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (solver.InfeasibleGeometryError, ValueError) as exc:
        print(f"invalid problem: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
