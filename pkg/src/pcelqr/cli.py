"""Command-line front end: ``pcelqr <command> SCENARIO [options]``.

Exit codes: 0 success, 1 a ``validate`` check failed, 2 scenario or command
line parse error, 3 scenario/argument validation error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import (
    check_certificate,
    check_closed_form,
    check_cost_identity,
    check_dynamics,
    check_mc_finite,
    check_mc_stationary,
    check_riccati,
    check_shifts,
    check_stacked_qp,
    check_stationarity,
    check_stationary_cost,
    check_truncation,
    check_w2,
    w2_table,
)
from .errors import DimensionError, InvalidCostError, NumericalError, ScenarioError
from .finite import min_cost_decomposition, solve_finite, truncation_error
from .infinite import stationary_pair
from .linalg import stationary_gains
from .mc import emit_histogram, sample_stationary, simulate_closed_loop
from .scenario_io import ScenarioParseError, dump_document, example_document, load_scenario, parse_document
from .stationary import build_truncated_stationary, required_dim_closed_form, required_dim_lyapunov, stationary_cost

log = logging.getLogger("pcelqr")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3, 4


class OutputExistsError(ScenarioError):
    pass


def _num(v) -> str:
    """Full double precision (17 significant digits)."""
    return format(float(v), ".17g")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


class Outputs:
    """Collects text artifacts and writes them with a checksum manifest."""

    def __init__(self, out_dir: Path, overwrite: bool):
        self.dir = out_dir
        self.overwrite = overwrite
        self.files: dict[str, str] = {}

    def add_json(self, name: str, obj) -> None:
        self.files[name] = json.dumps(_jsonable(obj), indent=2) + "\n"

    def add_csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.files[name] = buf.getvalue()

    def write(self, manifest: dict) -> None:
        names = list(self.files) + ["manifest.json"]
        if not self.overwrite:
            clash = [n for n in names if (self.dir / n).exists()]
            if clash:
                raise OutputExistsError(
                    f"output files already exist in {self.dir}: {', '.join(clash)} (pass --overwrite)"
                )
        self.dir.mkdir(parents=True, exist_ok=True)
        sums = {}
        for name, text in self.files.items():
            data = text.encode()
            (self.dir / name).write_bytes(data)
            sums[name] = hashlib.sha256(data).hexdigest()
        manifest = dict(manifest, outputs=sums)
        (self.dir / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n")


def _trajectory_rows(sol):
    basis = sol.basis
    n_x, n_u = sol.x_coeffs.shape[1], sol.u_coeffs.shape[1]
    for k in range(sol.N + 1):
        for s in range(basis.L):
            j = basis.source_index(s)
            for i in range(max(n_x, n_u)):
                x = _num(sol.x_coeffs[k][i, s]) if i < n_x else ""
                u = _num(sol.u_coeffs[k][i, s]) if (k < sol.N and i < n_u) else ""
                yield [k, s, j, i, x, u]


def cmd_solve_finite(args, scenario, out: Outputs) -> int:
    if args.N is not None:
        scenario = scenario.with_horizon(args.N)
    sol = solve_finite(scenario)
    dec = min_cost_decomposition(sol)
    lad = sol.ladder
    out.add_csv("trajectory.csv", ["k", "slot", "index_j", "component", "x_coeff", "u_coeff"],
                _trajectory_rows(sol))
    out.add_json("summary.json", {
        "N": sol.N,
        "L": sol.basis.L,
        "total_cost": sol.total_cost,
        "block_costs": sol.block_costs,
        "basis_norms": sol.basis.norms,
        "cost_decomposition": {"constant": dec.constant, "initial": dec.initial,
                               "disturbance": dec.disturbance, "total": dec.total},
        "gains": [{"k": k, "K": lad.K[sol.N - k], "F": lad.F[sol.N - k]} for k in range(sol.N)],
    })
    print(f"N={sol.N}  L={sol.basis.L}  total cost={sol.total_cost:.12g}")
    return EXIT_OK


def cmd_solve_infinite(args, scenario, out: Outputs) -> int:
    gains = stationary_gains(scenario.sys, scenario.cost)
    rep = stationary_pair(scenario.sys, scenario.cost, scenario.dist, gains=gains)
    out.add_json("infinite.json", {
        "K": gains.K, "F": gains.F, "P": gains.P, "G": gains.G, "S_delta": gains.S_delta,
        "A_cl": gains.A_cl, "spectral_radius": gains.rho, "eig_cond": gains.eig_cond,
        "riccati_iterations": gains.iterations, "riccati_residual": gains.riccati_residual(),
        "stationary_cost": stationary_cost(gains, scenario.dist),
        "mean_x": rep.mean_x, "mean_u": rep.mean_u, "cov_x": rep.cov_x, "cov_u": rep.cov_u,
    })
    print(f"K={np.array2string(gains.K, precision=6)}  rho={gains.rho:.6g}")
    print(f"E[X]={np.array2string(rep.mean_x, precision=6)}  E[U]={np.array2string(rep.mean_u, precision=6)}")
    return EXIT_OK


def cmd_stationary(args, scenario, out: Outputs) -> int:
    gains = stationary_gains(scenario.sys, scenario.cost)
    reports, rows = [], []
    for p in args.p:
        ap = build_truncated_stationary(gains, scenario.dist, p)
        mom = ap.moments()
        reports.append({"p": p, "bound_closed_form": ap.bound_closed_form, "bound_lyapunov": ap.bound_lyapunov,
                        "bound_l2": ap.bound_l2, **mom})
        n_x, n_u = ap.x_coeffs.shape[0], ap.u_coeffs.shape[0]
        for s in range(ap.x_coeffs.shape[1]):
            for i in range(max(n_x, n_u)):
                rows.append([p, s, i, _num(ap.x_coeffs[i, s]) if i < n_x else "",
                             _num(ap.u_coeffs[i, s]) if i < n_u else ""])
        print(f"p={p:<4d} bound={ap.w2_bound:.4g}  lyapunov={ap.bound_lyapunov:.4g}  l2={ap.bound_l2:.4g}")
    out.add_json("stationary.json", reports)
    out.add_csv("stationary_coeffs.csv", ["p", "slot", "component", "x_coeff", "u_coeff"], rows)
    if args.samples:
        draws = sample_stationary(gains, scenario.dist, args.p, args.samples, args.seed)
        hist = []
        for p in args.p:
            X, U = draws[p]
            for var, arr in (("x", X), ("u", U)):
                for i in range(arr.shape[1]):
                    for b in emit_histogram(arr[:, i], args.bins).rows():
                        hist.append([p, var, i, _num(b["left"]), _num(b["right"]), _num(b["mass"]),
                                     _num(b["density"])])
        out.add_csv("histograms.csv", ["p", "variable", "component", "left", "right", "mass", "density"], hist)
        out.add_json("w2.json", w2_table(gains, scenario.dist, args.p, args.samples, args.seed))
    return EXIT_OK


def cmd_approx_dim(args, scenario, out: Outputs) -> int:
    gains = stationary_gains(scenario.sys, scenario.cost)
    rows = []
    for d in args.delta:
        cf = None if gains.defective else required_dim_closed_form(gains, scenario.dist, d)
        ly = required_dim_lyapunov(gains, scenario.dist, d)
        rows.append({"delta": d, "p_closed_form": cf, "p_lyapunov": ly})
        print(f"delta={d:<10g} p_closed_form={cf if cf is not None else 'n/a (defective)'}  p_lyapunov={ly}")
    out.add_json("approx_dim.json", {"rho": gains.rho, "eig_cond": gains.eig_cond, "K_norm": gains.K_norm,
                                     "dimensions": rows})
    return EXIT_OK


def cmd_truncation(args, scenario, out: Outputs) -> int:
    sol = solve_finite(scenario)
    rows, summary = [], []
    for p in args.p:
        if not 0 <= p <= sol.N:
            raise ScenarioError(f"--p {p} outside [0, {sol.N}]")
        rep = truncation_error(sol, p)
        rows.extend([p, k, _num(v)] for k, v in enumerate(rep.delta_norms))
        summary.append({"p": p, "max_delta_norm": float(rep.delta_norms.max())})
        print(f"p={p:<4d} max |dX_k| = {rep.delta_norms.max():.6g}")
    out.add_csv("truncation.csv", ["p", "k", "delta_norm"], rows)
    out.add_json("truncation.json", summary)
    return EXIT_OK


def cmd_validate(args, scenario, out: Outputs) -> int:
    gains = stationary_gains(scenario.sys, scenario.cost)
    rep = stationary_pair(scenario.sys, scenario.cost, scenario.dist, gains=gains)
    sol = solve_finite(scenario)
    steps = [
        lambda: check_riccati(gains),
        lambda: check_dynamics(sol),
        lambda: check_closed_form(sol),
        lambda: check_stacked_qp(sol),
        lambda: check_cost_identity(sol),
        lambda: check_truncation(sol),
        lambda: check_shifts(sol, seed=args.seed),
        lambda: check_mc_finite(sol, args.samples, args.seed),
        lambda: check_mc_stationary(scenario, gains, rep, args.samples, args.seed),
        lambda: check_stationarity(rep, scenario.dist),
        lambda: check_certificate(scenario, gains, min(args.samples, 1000), 60, args.seed),
        lambda: check_w2(gains, scenario.dist, samples=args.samples, seed=args.seed),
        lambda: check_stationary_cost(rep, scenario.dist),
    ]
    results = []
    for step in steps:
        r = step()
        log.info("%s done", r.name)
        print(r.line())
        results.append(r)
    out.add_json("checks.json", [r.__dict__ for r in results])
    if args.paths:
        batch = simulate_closed_loop(scenario, sol.ladder, args.samples, args.seed)
        out.add_csv("paths.csv", batch.path_header(), batch.path_rows(args.paths))
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS = {
    "solve-finite": cmd_solve_finite,
    "solve-infinite": cmd_solve_infinite,
    "stationary": cmd_stationary,
    "approx-dim": cmd_approx_dim,
    "truncation": cmd_truncation,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcelqr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pcelqr {__version__}")
    parser.add_argument("--dump-schema-example", nargs="?", const="-", metavar="PATH",
                        help="write the bundled example scenario (canonical form) to PATH or stdout")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("-o", "--out", type=Path, default=None, help="output directory (default: out/<command>)")
        p.add_argument("--overwrite", action="store_true", help="replace existing output files")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = common(sub.add_parser("solve-finite", help="finite-horizon PCE solution"))
    p.add_argument("--N", type=int, default=None, help="override the scenario horizon")
    common(sub.add_parser("solve-infinite", help="stationary gains and limiting moments"))
    p = common(sub.add_parser("stationary", help="truncated stationary approximations"))
    p.add_argument("--p", type=int, nargs="+", default=[0, 2, 5, 11])
    p.add_argument("--samples", type=int, default=0, help="draw samples for histograms and W2")
    p.add_argument("--bins", type=int, default=50)
    p = common(sub.add_parser("approx-dim", help="approximation dimensions for tolerances"))
    p.add_argument("--delta", type=float, nargs="+", default=[0.1, 0.01])
    p = common(sub.add_parser("truncation", help="moving-window truncation errors"))
    p.add_argument("--p", type=int, nargs="+", default=[2, 5])
    p = common(sub.add_parser("validate", help="run all invariant checks"))
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--paths", type=int, default=0, metavar="COUNT",
                   help="also dump the first COUNT simulated closed-loop paths")
    return parser


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _check_args(args) -> None:
    if getattr(args, "N", None) is not None and args.N < 1:
        raise ScenarioError("--N must be >= 1")
    if getattr(args, "delta", None) and any(d <= 0 for d in args.delta):
        raise ScenarioError("--delta values must be positive")
    if getattr(args, "p", None) and any(p < 0 for p in args.p):
        raise ScenarioError("--p values must be >= 0")
    if args.command == "validate" and args.samples < 2:
        raise ScenarioError("--samples must be >= 2")
    if args.command == "stationary" and (args.samples < 0 or args.bins < 2):
        raise ScenarioError("--samples must be >= 0 and --bins >= 2")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.dump_schema_example is not None:
        text = json.dumps(dump_document(parse_document(example_document())), indent=2) + "\n"
        if args.dump_schema_example == "-":
            sys.stdout.write(text)
        else:
            Path(args.dump_schema_example).write_text(text)
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_VALIDATION
    try:
        _check_args(args)
        scenario = load_scenario(args.scenario)
        out = Outputs(args.out or Path("out") / args.command, args.overwrite)
        if not args.overwrite and (out.dir / "manifest.json").exists():
            raise OutputExistsError(f"{out.dir} already holds a run (pass --overwrite)")
        status = COMMANDS[args.command](args, scenario, out)
        manifest = {
            "command": args.command,
            "argv": list(sys.argv[1:] if argv is None else argv),
            "scenario": {"path": str(args.scenario), "sha256": _sha256(Path(args.scenario))},
            "seed": args.seed,
            "version": __version__,
            "numpy": np.__version__,
            "status": status,
        }
        out.write(manifest)
        log.info("wrote %d files to %s", len(out.files) + 1, out.dir)
        return status
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ScenarioError, DimensionError, InvalidCostError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
