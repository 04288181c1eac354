"""Batch command-line front door.

Subcommands: hierarchy, evolve, backlund, soliton, verify.  Every run that
emits files writes a manifest.json listing the outputs with content digests;
data files are byte-stable across identical invocations (the manifest's
wall-clock field is the one run-dependent value).

Exit codes: 0 success, 1 usage error, 2 validation or numerical failure.
"""

from __future__ import annotations

import argparse
import pathlib
import sys
import time

import numpy as np

from . import backlund, flows, geometry, hierarchy, serialize, verify
from .backlund import SimpleFactor
from .errors import AffineKdvError
from .geometry import CurvatureField, PlaneCurve
from .numerics import Grid


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="affinekdv",
                description="central affine curve flows and their KdV structure")
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("hierarchy", help="print the recursion table and flows")
    h.add_argument("--order", type=int, default=3)
    h.add_argument("--format", choices=("text", "json"), default="text")
    h.add_argument("--out", default=None, help="write to a file instead of stdout")

    e = sub.add_parser("evolve", help="evolve a closed curve under a flow")
    e.add_argument("--input", required=True,
                   help="curve CSV path, or builtin:circle / builtin:ellipse")
    e.add_argument("--flow", type=int, choices=(1, 3, 5, 7), default=3)
    e.add_argument("--T", type=float, required=True)
    e.add_argument("--n", type=int, default=256)
    e.add_argument("--period", type=float, default=None,
                   help="override the inferred parameter period of the input")
    e.add_argument("--snapshots", type=int, default=6)
    e.add_argument("--method", choices=("frame", "direct", "both"), default="frame")
    e.add_argument("--dt", type=float, default=None)
    e.add_argument("--scheme", choices=("auto", "etdrk4", "rk4"), default="auto")
    e.add_argument("--svg", action="store_true")
    e.add_argument("--out", required=True)

    b = sub.add_parser("backlund", help="apply Backlund steps and certify them")
    b.add_argument("--seed", default="stationary",
                   help="stationary | circle | file:<curve.csv>")
    b.add_argument("--k", type=float, required=True)
    b.add_argument("--xi", type=float, default=0.0)
    b.add_argument("--k2", type=float, default=None)
    b.add_argument("--xi2", type=float, default=0.0)
    b.add_argument("--grid-n", type=int, default=1024)
    b.add_argument("--grid-period", type=float, default=60.0)
    b.add_argument("--t", type=float, default=0.08,
                   help="sample time (multiple of 0.02; 0.005 for circle seeds)")
    b.add_argument("--svg", action="store_true")
    b.add_argument("--out", required=True)

    s = sub.add_parser("soliton", help="closed-form soliton curve catalog")
    s.add_argument("--catalog", action="store_true")
    s.add_argument("--k", type=float, default=None)
    s.add_argument("--xi", type=float, default=0.0)
    s.add_argument("--k2", type=float, default=None)
    s.add_argument("--xi2", type=float, default=0.0)
    s.add_argument("--t", type=float, default=0.0)
    s.add_argument("--grid-n", type=int, default=1024)
    s.add_argument("--grid-half-width", type=float, default=20.0)
    s.add_argument("--out", default=None)

    v = sub.add_parser("verify", help="run the verification suite")
    v.add_argument("--suite", default="all",
                   choices=("all", "symbolic", "flows", "backlund", "geometry",
                            "hamiltonian", "determinism"))
    v.add_argument("--out", default=None, help="directory for the JSON report")
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _builtin_curve(name: str, m: int = 512):
    s = (2 * np.pi / m) * np.arange(m)
    if name == "circle":
        return s, np.column_stack([np.cos(s), np.sin(s)])
    if name == "ellipse":
        return s, np.column_stack([np.cos(s), 2.0 * np.sin(s)])
    raise UsageError(f"unknown builtin curve {name!r}")


def _load_curve(spec: str, n: int, period=None) -> PlaneCurve:
    if spec.startswith("builtin:"):
        s, pts = _builtin_curve(spec.split(":", 1)[1])
    else:
        s, pts = serialize.read_curve_csv(spec)
        if period is not None:
            s = s * (period / (s[1] - s[0]) / len(s))
    return geometry.reparametrize(pts, s=s, n=n)


def _manifest(outdir: pathlib.Path, command, config, results, status, t0):
    files = {}
    for p in sorted(outdir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        files[p.name] = serialize.sha256_file(p)
    doc = {
        "schema": 1,
        "command": command,
        "config": config,
        "files": files,
        "results": results,
        "status": status,
        "wall_clock_s": round(time.perf_counter() - t0, 3),
    }
    (outdir / "manifest.json").write_text(serialize.json_dumps_stable(doc))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_hierarchy(args) -> int:
    J = args.order
    table = hierarchy.generate(J + 1)
    if args.format == "json":
        doc = {"order": J, "entries": [], "flows": [], "hamiltonians": []}
        for j in range(J + 1):
            doc["entries"].append({
                "j": j,
                "A": table.a(j).json_terms(),
                "B": table.b(j).json_terms(),
                "C": table.c(j).json_terms(),
            })
            doc["flows"].append({
                "order": 2 * j + 1,
                "rhs": hierarchy.flow_rhs(j).json_terms(),
                "rhs_text": str(hierarchy.flow_rhs(j)),
            })
            ham = hierarchy.hamiltonian(j)
            doc["hamiltonians"].append({
                "order": ham.order,
                "density": ham.density.json_terms(),
                "gradient": ham.gradient.json_terms(),
                "gradient_text": str(ham.gradient),
            })
        text = serialize.json_dumps_stable(doc)
    else:
        lines = []
        for j in range(J + 1):
            lines.append(f"j={j}:")
            lines.append(f"  A = {table.a(j)}")
            lines.append(f"  B = {table.b(j)}")
            lines.append(f"  C = {table.c(j)}")
            lines.append(f"  flow_{2 * j + 1} = {hierarchy.flow_rhs(j)}")
            ham = hierarchy.hamiltonian(j)
            lines.append(f"  H_{ham.order} density = {ham.density}")
            lines.append(f"  H_{ham.order} gradient = {ham.gradient}")
        text = "\n".join(lines) + "\n"
    if args.out:
        pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        pathlib.Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_evolve(args) -> int:
    t0 = time.perf_counter()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    j = (args.flow - 1) // 2
    curve = _load_curve(args.input, args.n, args.period)
    kwargs = {}
    if args.dt is not None:
        kwargs["dt"] = args.dt
    if args.scheme != "auto":
        kwargs["scheme"] = args.scheme

    trajs = {}
    if args.method in ("frame", "both"):
        trajs["frame"] = flows.evolve_curve_frame(curve, j, args.T,
                                                  snapshots=args.snapshots, **kwargs)
    if args.method in ("direct", "both"):
        trajs["direct"] = flows.evolve_curve_direct(
            curve, j, args.T, snapshots=args.snapshots,
            **({"dt": args.dt} if args.dt is not None else {}))

    results = {}
    for method, traj in trajs.items():
        prefix = f"{method}_" if args.method == "both" else ""
        for idx, (t, state) in enumerate(zip(traj.times, traj.states)):
            serialize.write_curve_csv(out / f"{prefix}snap{idx:03d}_curve.csv", state)
            serialize.write_curvature_csv(out / f"{prefix}snap{idx:03d}_curvature.csv",
                                          geometry.curvature(state))
            if args.svg:
                serialize.write_svg_polyline(out / f"{prefix}snap{idx:03d}.svg",
                                             state.gamma, close=True)
        results[method] = {
            "times": list(traj.times),
            "conservation_drift": flows.conservation_drift(traj.conservation),
            "dt": traj.meta["dt"],
            "scheme": traj.meta["scheme"],
            "normalization_drift": max(traj.meta["normalization_drift"]),
        }
        if "closure_defects" in traj.meta:
            results[method]["closure_defect"] = max(traj.meta["closure_defects"])
    if args.method == "both":
        gap = max(float(np.max(np.abs(a.gamma - b.gamma)))
                  for a, b in zip(trajs["frame"].states, trajs["direct"].states))
        results["cross_method_gap"] = gap

    config = {"input": args.input, "flow": args.flow, "T": args.T, "n": args.n,
              "snapshots": args.snapshots, "method": args.method,
              "grid": serialize.grid_to_json(curve.grid)}
    _manifest(out, ["evolve"], config, _jsonable(results), "ok", t0)
    return 0


def _cmd_backlund(args) -> int:
    t0 = time.perf_counter()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # time-derivative stencil width scales with the fastest frame rate k^3
    kmax = max(abs(args.k), abs(args.k2 or 0.0), 1.0)
    halvings = int(np.ceil(np.log2(max(1.0, kmax ** 3))))
    delta = 0.02 / 2 ** halvings
    t_center = args.t
    steps_delta = t_center / delta
    if abs(steps_delta - round(steps_delta)) > 1e-9 or t_center < 2 * delta:
        raise UsageError(f"--t must be a multiple of {delta} and at least {2 * delta}")
    t_max = t_center + 2 * delta

    spectral_x = False
    if args.seed == "stationary":
        grid = Grid(n=args.grid_n, period=args.grid_period, x0=-args.grid_period / 2)
        background = backlund.stationary_background(grid, t_max, dt=delta / 4)
        spectral_x = True
    elif args.seed == "circle":
        grid = Grid(n=args.grid_n, period=2 * np.pi)
        background = backlund.circle_background(grid, t_max, dt=delta / 4)
    elif args.seed.startswith("file:"):
        curve = _load_curve(args.seed.split(":", 1)[1], args.grid_n)
        snapshots = int(round(t_max / delta)) + 1
        traj = flows.evolve_curve_frame(curve, 1, t_max, snapshots=snapshots)
        per = traj.meta["steps_per_snapshot"]
        curves = {idx * per: st.gamma for idx, st in enumerate(traj.states)}
        background = backlund.NumericKdvSolution(
            traj.dense, frame0=geometry.frame(curve).samples[0], curves=curves)
    else:
        raise UsageError(f"unknown seed {args.seed!r}")

    factor = SimpleFactor(args.xi, args.k)
    cert = backlund.bt_certificate(background, factor, t_center, delta=delta,
                                   spectral_x=spectral_x)
    times5 = [t_center + jj * delta for jj in (-2, -1, 0, 1, 2)]
    level = backlund.NumericDressedSolution(background, factor, times5)
    final = level
    if args.k2 is not None:
        factor2 = SimpleFactor(args.xi2, args.k2)
        cert2 = backlund.bt_certificate(level, factor2, t_center, delta=delta,
                                        spectral_x=spectral_x)
        final = backlund.NumericDressedSolution(level, factor2, times5)
    else:
        cert2 = None

    gamma = final.gamma_slice(t_center)
    qrow = final.q_slice(t_center)
    curve_out = PlaneCurve(grid=background.grid, gamma=gamma, closed=False)
    serialize.write_curve_csv(out / "curve.csv", curve_out)
    serialize.write_curvature_csv(out / "curvature.csv",
                                  CurvatureField(grid=background.grid, q=qrow))
    if args.svg:
        serialize.write_svg_polyline(out / "curve.svg", gamma)

    cert_doc = {"schema": 1, "factor": {"xi": args.xi, "k": args.k},
                "time": t_center, "residuals": _jsonable(cert)}
    if cert2 is not None:
        cert_doc["second_factor"] = {"xi": args.xi2, "k": args.k2}
        cert_doc["second_residuals"] = _jsonable(cert2)
    (out / "certificate.json").write_text(serialize.json_dumps_stable(cert_doc))

    tol = 1e-5
    worst = max(cert.values())
    if cert2 is not None:
        worst = max(worst, max(cert2.values()))
    status = "ok" if worst <= tol else "residual-over-tolerance"
    config = {"seed": args.seed, "k": args.k, "xi": args.xi, "k2": args.k2,
              "xi2": args.xi2, "t": t_center,
              "grid": serialize.grid_to_json(background.grid)}
    _manifest(out, ["backlund"], config, _jsonable({"certificate": cert,
                                                    "certificate2": cert2}),
              status, t0)
    return 0 if status == "ok" else 2


def _cmd_soliton(args) -> int:
    t0 = time.perf_counter()
    levels = []
    if args.k is not None:
        levels.append((args.xi, args.k))
    if args.k2 is not None:
        levels.append((args.xi2, args.k2))

    if args.catalog:
        doc = {
            "schema": 1,
            "families": [
                {
                    "name": "one-soliton",
                    "levels": 1,
                    "curve": "(tanh(k x + k^3 t), x tanh(k x + k^3 t) - 1/k)",
                    "curvature": "-2 k^2 sech^2(k x + k^3 t)",
                    "smooth": "all real k != 0",
                },
                {
                    "name": "two-soliton",
                    "levels": 2,
                    "construction": "second dressing step on the one-soliton frame",
                    "smooth": "0 < k1 < k2 with xi1 = xi2 = 0",
                },
                {
                    "name": "rational",
                    "levels": 1,
                    "construction": "k = 0 step; curvature 2 xi^2/(1 + xi x)^2",
                    "smooth": "x != -1/xi",
                },
            ],
        }
        if levels:
            doc["requested"] = backlund.soliton_family(levels)
        text = serialize.json_dumps_stable(doc)
        if args.out:
            outpath = pathlib.Path(args.out)
            outpath.parent.mkdir(parents=True, exist_ok=True)
            outpath.write_text(text)
        else:
            sys.stdout.write(text)
        return 0

    if not levels:
        raise UsageError("soliton needs --catalog or at least --k")
    if args.out is None:
        raise UsageError("soliton sampling needs --out")
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    half = args.grid_half_width
    grid = Grid(n=args.grid_n, period=2 * half, x0=-half)
    xs = grid.nodes
    gamma, qrow = backlund.soliton_curve(levels, xs, args.t)
    serialize.write_curve_csv(out / "curve.csv",
                              PlaneCurve(grid=grid, gamma=gamma, closed=False))
    serialize.write_curvature_csv(out / "curvature.csv",
                                  CurvatureField(grid=grid, q=qrow))
    meta = backlund.soliton_family(levels)
    (out / "family.json").write_text(serialize.json_dumps_stable(meta))
    config = {"levels": [{"xi": xi, "k": k} for xi, k in levels], "t": args.t,
              "grid": serialize.grid_to_json(grid)}
    _manifest(out, ["soliton"], config, _jsonable(meta), "ok", t0)
    return 0


def _cmd_verify(args) -> int:
    t0 = time.perf_counter()
    outdir = pathlib.Path(args.out) if args.out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    results = verify.run_suite(args.suite, workdir=outdir)
    all_ok = all(r.passed for r in results)
    for r in results:
        print(r.line())
    doc = {
        "schema": 1,
        "suite": args.suite,
        "checks": [
            {"name": r.name, "passed": r.passed, "detail": r.detail,
             "measured": _jsonable(r.measured)}
            for r in results
        ],
        "all_passed": all_ok,
    }
    if outdir:
        (outdir / "report.json").write_text(serialize.json_dumps_stable(doc))
        _manifest(outdir, ["verify"], {"suite": args.suite},
                  {"all_passed": all_ok}, "ok" if all_ok else "check-failed", t0)
    return 0 if all_ok else 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "hierarchy":
            return _cmd_hierarchy(args)
        if args.command == "evolve":
            return _cmd_evolve(args)
        if args.command == "backlund":
            return _cmd_backlund(args)
        if args.command == "soliton":
            return _cmd_soliton(args)
        if args.command == "verify":
            return _cmd_verify(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except AffineKdvError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
