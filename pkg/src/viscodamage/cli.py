"""Command line entry point: simulate, verify, optimize, extend-coeff.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config, provenance
from .control import ControlSpace, beta_continuation, read_coefficients, write_coefficients
from .grid import write_snapshot
from .material import coefficient_preset, extend_coefficient
from .problems import cosine_profile
from .stepper import energy_audit, write_energy_csv
from .verify import (
    PerturbationSpec,
    PreconditionError,
    beta_sweep,
    continuous_dependence_test,
    extension_report,
    gradient_fd_check,
    oracle_agreement,
    penalty_axioms,
    tau_sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("viscodamage")


def _write_json(path: Path, prov: str, data: dict) -> None:
    path.write_text(json.dumps({"provenance": prov, **data}, indent=2, sort_keys=True, default=float) + "\n")


def _load(args) -> RunConfig:
    if args.config is None:
        cfg = parse_config("", "<defaults>")
        source = "<defaults>"
    else:
        rc = RunConfig.from_file(args.config)
        cfg, source = rc.cfg, rc.source
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative", None, "<command line>")
        cfg["seed"] = args.seed
    return RunConfig(cfg, source)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    rc = _load(args)
    prov = rc.provenance
    problem = rc.problem()
    load = None
    cf = rc["forcing"]["control_file"]
    if cf is not None:
        try:
            basis, coeffs = read_coefficients(cf)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"forcing.control_file: {exc}", None, rc.source)
        if abs(basis.T - problem.T) > 1e-12 * problem.T:
            raise ConfigError("forcing.control_file: basis horizon differs from time.T", None, rc.source)
        load = ControlSpace(basis, problem.grid, problem.tau, -np.inf, np.inf, np.inf).load(coeffs)
    out = _out_dir(args)
    traj = problem.run(rc["time"]["beta"], boundary_load=load, snapshot_every=rc["output"]["snapshot_every"], newton_max_iter=rc["time"]["newton_max_iter"])
    write_energy_csv(out / "energy.csv", traj, prov)
    grid = problem.grid
    if rc["output"]["snapshots"]:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)
        every = rc["output"]["snapshot_every"]
        last = traj.n_levels - 1
        for k in range(traj.n_levels):
            if k % every == 0 or k == last:
                t = k * traj.tau
                write_snapshot(snap / f"chi_{k:06d}.txt", grid, traj.chi[k], "chi", t, prov)
                if k in traj.u:
                    write_snapshot(snap / f"u_{k:06d}.txt", grid, traj.u[k], "u", t, prov)
    summary = {"steps": traj.n_levels - 1, "completed": traj.completed, "failure": traj.failed}
    code = EXIT_OK
    if traj.completed:
        audit = energy_audit(traj)
        chi = traj.chi_array()
        summary.update(
            energy_audit_ok=audit.ok,
            min_relative_slack=float(audit.relative.min()) if audit.relative.size else 0.0,
            violating_steps=audit.violations,
            chi_min=float(chi.min()),
            chi_max=float(chi.max()),
            final_total_energy=traj.records[-1].total,
        )
        if not audit.ok:
            code = EXIT_VERIFY
    else:
        code = EXIT_NUMERICAL
        print(f"numerical failure: {traj.failed}", file=sys.stderr)
    _write_json(out / "summary.json", prov, summary)
    print(json.dumps(summary, indent=2, default=float))
    return code


def _oracle_suite(rc: RunConfig) -> dict:
    problem = rc.problem()
    pen = penalty_axioms(seed=rc["seed"])
    ext = {n: extension_report(coefficient_preset(n)) for n in ("quadratic", "constant", "cubic")}
    orc = oracle_agreement(problem.disc, rc["verify"]["oracle_instances"], seed=rc["seed"])
    fd = gradient_fd_check(problem.disc, seed=rc["seed"])
    checks = {f"penalty_{k}": v for k, v in pen.items()}
    checks.update({f"extension_{n}": all(r.values()) for n, r in ext.items()})
    checks["oracle_agreement"] = orc["max_error"] <= 1e-9
    checks["gradient_fd"] = fd["max_relative_error"] <= 1e-5
    return {"checks": checks, "oracle_max_error": orc["max_error"], "fd_max_relative_error": fd["max_relative_error"], "passed": all(checks.values())}


def cmd_verify(args) -> int:
    rc = _load(args)
    prov = rc.provenance
    which = ["oracles", "beta", "tau", "contdep"] if args.which == "all" else [args.which]
    problem = rc.problem()
    if "contdep" in which and not problem.material.d_is_one:
        raise PreconditionError("theorem precondition violated: continuous dependence requires d = 1 (material.d)")
    out = _out_dir(args)
    v, beta = rc["verify"], rc["time"]["beta"]
    results, numerical = {}, False
    for w in which:
        if w == "oracles":
            results[w] = _oracle_suite(rc)
        elif w == "beta":
            rep = beta_sweep(problem, v["beta_list"], workers=args.threads)
            (out / "verify_beta.csv").write_text(f"# {prov}\n" + rep.to_csv())
            numerical |= bool(rep.failures)
            results[w] = json.loads(rep.summary())
        elif w == "tau":
            rep = tau_sweep(problem, v["tau_list"], v["tau_reference"], beta, workers=args.threads)
            (out / "verify_tau.csv").write_text(f"# {prov}\n" + rep.to_csv())
            numerical |= bool(rep.failures)
            results[w] = json.loads(rep.summary())
        else:
            grid = problem.grid
            if v["perturb"] == "traction":
                side, vec = ("top", [0.0, 1.0]) if grid.dim == 2 else ("right", [1.0])
                direction = grid.facet_traction(lambda x, n: np.tile(vec, (x.shape[0], 1)), sides=[side])
            else:
                direction = cosine_profile(grid, -1.0, 0.0)
            try:
                res = continuous_dependence_test(problem, PerturbationSpec(v["perturb"], direction, v["deltas"]), beta)
            except RuntimeError as exc:
                numerical = True
                res = {"passed": False, "error": str(exc)}
            results[w] = res
    _write_json(out / "verify_summary.json", prov, results)
    print(json.dumps({k: bool(r.get("passed")) for k, r in results.items()}, indent=2))
    if numerical:
        return EXIT_NUMERICAL
    return EXIT_OK if all(r.get("passed") for r in results.values()) else EXIT_VERIFY


def cmd_optimize(args) -> int:
    rc = _load(args)
    if args.adapted and rc["control"]["anchor"] is None:
        raise ConfigError("control.anchor: --adapted requires an anchor control", None, rc.source)
    prov = rc.provenance
    cp = rc.control_problem(workers=args.threads)
    out = _out_dir(args)
    rep = beta_continuation(cp, adapted=args.adapted)
    rep.to_csv(out / "continuation.csv", prov)
    summary = {"adapted": args.adapted, "checks": rep.checks, "levels": len(rep.rows)}
    if rep.results:
        best = rep.results[-1]
        write_coefficients(out / "control.txt", cp.space.basis, best.coeffs, prov)
        summary.update(j_star=best.value, coeffs=[float(c) for c in best.coeffs], beta=best.beta)
        if best.anchor_distance is not None:
            summary["anchor_distance"] = best.anchor_distance
    _write_json(out / "optimize_summary.json", prov, summary)
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK if rep.checks["complete"] else EXIT_NUMERICAL


def cmd_extend_coeff(args) -> int:
    rc = _load(args)
    prov = rc.provenance
    m = rc["material"]
    try:
        c_tilde = coefficient_preset(m["coefficient"], **m["coefficient_params"])
        c1, c2 = extend_coefficient(c_tilde, m["delta"])
        report = extension_report(c_tilde, m["delta"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"material: {exc}", None, rc.source)
    out = _out_dir(args)
    x = np.linspace(-1.0, 2.0 + m["delta"], 301)
    lines = [f"# {prov}", "x,c1,c2,c"]
    lines += [f"{a!r},{b!r},{c!r},{d!r}" for a, b, c, d in zip(x.tolist(), c1(x).tolist(), c2(x).tolist(), (c1(x) + c2(x)).tolist())]
    (out / "extension.csv").write_text("\n".join(lines) + "\n")
    data = {"coefficient": m["coefficient"], "delta": m["delta"], "c1": c1.to_dict(), "c2": c2.to_dict(), "checks": report}
    _write_json(out / "extension.json", prov, data)
    print(json.dumps(data, indent=2))
    return EXIT_OK if all(report.values()) else EXIT_VERIFY


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (see docs/CONFIG.md)")
    common.add_argument("--out-dir", default="out", help="directory for artifacts (default: out)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes for sweeps and optimizer polls")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="viscodamage", description="Phase-field damage in Kelvin-Voigt media.")
    p.add_argument("--version", action="version", version=f"viscodamage {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run the time stepper")
    s.set_defaults(func=cmd_simulate, needs_config=True)
    s = sub.add_parser("verify", parents=[common], help="run verification suites")
    s.add_argument("--which", choices=["beta", "tau", "contdep", "oracles", "all"], default="all")
    s.set_defaults(func=cmd_verify, needs_config=True)
    s = sub.add_parser("optimize", parents=[common], help="beta continuation of the control problem")
    s.add_argument("--adapted", action="store_true", help="solve the adapted problem around control.anchor")
    s.set_defaults(func=cmd_optimize, needs_config=True)
    s = sub.add_parser("extend-coeff", parents=[common], help="emit the convex-concave split of a coefficient")
    s.set_defaults(func=cmd_extend_coeff, needs_config=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.needs_config and args.config is None:
        print(f"error: {args.command} requires --config", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
