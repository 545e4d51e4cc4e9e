"""Command-line harness for the experiments.

Subcommands: static-accuracy, manufactured, plane-source, probe-bounds,
oracle-check.  Every flag can also be supplied through a flat key=value
config file (--config FILE); command-line values override file values.
With --check the command exits nonzero when a result misses its tolerance;
solver failures always exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import entropy as ent
from .basis import gauss_lobatto, legendre_basis
from .closure import (ClosureContext, euler_reg_closure, euler_reg_multiplier,
                      flux, m1_moment_ratio, m1_multiplier_from_ratio,
                      pn_filter_closure, regularized_moments)
from .dual import RegularizationConfig, solve_dual
from .experiments import (MANUFACTURED_REFERENCE_ERRORS, STATIC_REFERENCE_DX,
                          STATIC_REFERENCE_ERRORS, ConvergenceRow,
                          ManufacturedConfig, PlaneSourceConfig, StaticTestConfig,
                          convergence_csv, history_csv, profile_csv,
                          render_convergence_table, run_bound_probes,
                          run_manufactured, run_plane_source, run_static_accuracy,
                          wave_front_position)


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _gamma_rule(name: str, degree: int, fixed: float | None):
    if name == "fixed":
        if fixed is None:
            raise SystemExit("--gamma-rule fixed needs --gamma")
        return lambda dx: fixed
    if name == "dx^k":
        return lambda dx: dx ** degree
    if name == "0.1*dx^k":
        return lambda dx: 0.1 * dx ** degree
    raise SystemExit(f"unknown gamma rule {name!r}")


def _write(out_dir: str | None, name: str, text: str):
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as handle:
        handle.write(text)
    print(f"wrote {path}")


def _add_common(sp: argparse.ArgumentParser):
    sp.add_argument("--entropy", default="mb",
                    choices=["mb", "be", "fd", "quadratic"],
                    help="entropy model (mb = Maxwell-Boltzmann)")
    sp.add_argument("--order", type=int, default=None,
                    help="velocity basis order N (n = N+1 moments)")
    sp.add_argument("--quad-q", type=int, default=40,
                    help="velocity quadrature points")
    sp.add_argument("--gamma", type=str, default=None,
                    help="regularization strength (comma list for plane-source sweeps)")
    sp.add_argument("--tau", type=float, default=None, help="stopping tolerance")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--out", type=str, default=None, help="output directory for CSVs")
    sp.add_argument("--check", action="store_true",
                    help="verify results against tolerances; nonzero exit on breach")
    sp.add_argument("--config", type=str, default=None,
                    help="flat key=value file supplying flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regmn",
        description="Regularized entropy-based moment closures: experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("static-accuracy", help="edge-projection accuracy table")
    _add_common(sp)
    sp.add_argument("--dg-degree", type=int, default=None,
                    help="projection degree k (default: run k = 2, 3, 4)")
    sp.add_argument("--steepness", type=float, default=200.0)
    sp.add_argument("--dx-exp-min", type=int, default=1)
    sp.add_argument("--dx-exp-max", type=int, default=9)
    sp.add_argument("--spatial-q", type=int, default=20)
    sp.add_argument("--gamma-rule", default="dx^k",
                    choices=["fixed", "dx^k", "0.1*dx^k"])

    sp = sub.add_parser("manufactured", help="manufactured-solution convergence table")
    _add_common(sp)
    sp.add_argument("--dg-degree", type=int, default=None,
                    help="DG degree parameter k (default: run k = 2, 3, 4)")
    sp.add_argument("--steepness", type=float, default=5.0)
    sp.add_argument("--cells", type=str, default="40,80,160,320",
                    help="comma list of cell counts")
    sp.add_argument("--tfinal", type=float, default=float(np.pi / 5.0))
    sp.add_argument("--gamma-rule", default="0.1*dx^k",
                    choices=["fixed", "dx^k", "0.1*dx^k"])

    sp = sub.add_parser("plane-source", help="plane-source benchmark profiles")
    _add_common(sp)
    sp.add_argument("--dg-degree", type=int, default=4)
    sp.add_argument("--cells", type=str, default="400")
    sp.add_argument("--tfinal", type=float, default=1.0)

    sp = sub.add_parser("probe-bounds", help="error-bound probes of the moment map")
    _add_common(sp)
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--bound-radius", type=float, default=5.0,
                    help="multiplier-norm bound M of the sampled moment set")
    sp.add_argument("--delta", type=float, default=1e-3)
    sp.add_argument("--tau-loose", type=float, default=1e-4)

    sp = sub.add_parser("oracle-check", help="analytic-closure cross checks")
    _add_common(sp)
    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Expand --config FILE into flags placed before the CLI flags."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise SystemExit("--config needs a file path")
    path = argv[i + 1]
    extra: list[str] = []
    with open(path) as handle:
        for line in handle:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"bad config line (need key=value): {line!r}")
            key, value = (tok.strip() for tok in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() == "true":
                extra.append(flag)
            elif value.lower() == "false":
                continue
            else:
                extra.extend([flag, value])
    # subcommand first, then file-provided flags, then CLI flags (override)
    return [argv[0]] + extra + argv[1:]


def _cmd_static(args) -> int:
    degrees = [args.dg_degree] if args.dg_degree else [2, 3, 4]
    order = 7 if args.order is None else args.order
    dx_list = [0.5 ** e for e in range(args.dx_exp_min, args.dx_exp_max + 1)]
    fixed = _parse_floats(args.gamma)[0] if args.gamma else None
    results: dict[int, list[ConvergenceRow]] = {}
    status = 0
    for k in degrees:
        cfg = StaticTestConfig(
            steepness=args.steepness, basis_order=order, degree=k, dx_list=dx_list,
            q_velocity=args.quad_q, q_spatial=args.spatial_q,
            gamma_rule=_gamma_rule(args.gamma_rule, k, fixed),
            tau_rule=(lambda dx: args.tau) if args.tau else _gamma_rule(args.gamma_rule, k, fixed))
        rows = run_static_accuracy(cfg)
        results[k] = rows
        _write(args.out, f"static_accuracy_k{k}.csv", convergence_csv(rows))
        if any(row.failed for row in rows):
            status = 1
    print(render_convergence_table(results))
    if args.check:
        for k, rows in results.items():
            if k not in STATIC_REFERENCE_ERRORS:
                continue
            for row in rows:
                exps = [round(-np.log2(d)) for d in STATIC_REFERENCE_DX]
                exp = round(-np.log2(row.resolution))
                if exp not in exps:
                    continue
                ref = STATIC_REFERENCE_ERRORS[k][exps.index(exp)]
                if row.failed or not ref / 2 <= row.error <= ref * 2:
                    print(f"check FAIL: k={k} dx=2^-{exp}: error {row.error:.3e} "
                          f"vs reference {ref:.3e}")
                    status = 1
        print("check PASS" if status == 0 else "check FAIL")
    return status


def _cmd_manufactured(args) -> int:
    degrees = [args.dg_degree] if args.dg_degree else [2, 3, 4]
    order = 3 if args.order is None else args.order
    cells = _parse_ints(args.cells)
    fixed = _parse_floats(args.gamma)[0] if args.gamma else None
    results: dict[int, list[ConvergenceRow]] = {}
    status = 0
    for k in degrees:
        rule = _gamma_rule(args.gamma_rule, k, fixed)
        factor = rule(1.0)  # rules here are scale factors times dx^k
        cfg = ManufacturedConfig(basis_order=order, steepness=args.steepness,
                                 t_final=args.tfinal, nx_list=cells, degree=k,
                                 rule_factor=factor, q_velocity=args.quad_q)
        rows = run_manufactured(cfg)
        results[k] = rows
        _write(args.out, f"manufactured_k{k}.csv", convergence_csv(rows))
    print(render_convergence_table(results, resolution_label="cells"))
    if args.check:
        for k, rows in results.items():
            ref_table = MANUFACTURED_REFERENCE_ERRORS.get(k, {})
            for row in rows:
                ref = ref_table.get(int(row.resolution))
                if ref is None:
                    continue
                if row.failed or not ref / 2 <= row.error <= ref * 2:
                    print(f"check FAIL: k={k} cells={int(row.resolution)}: "
                          f"error {row.error:.3e} vs reference {ref:.3e}")
                    status = 1
        print("check PASS" if status == 0 else "check FAIL")
    return status


def _cmd_plane_source(args) -> int:
    order = 5 if args.order is None else args.order
    gammas = _parse_floats(args.gamma) if args.gamma else [1e-6]
    tau = 1e-7 if args.tau is None else args.tau
    cells = _parse_ints(args.cells)[0]
    status = 0
    for gamma in gammas:
        cfg = PlaneSourceConfig(basis_order=order, num_cells=cells,
                                degree=args.dg_degree, gamma=gamma, tau=tau,
                                t_final=args.tfinal, q_velocity=args.quad_q)
        result = run_plane_source(cfg)
        tag = f"{gamma:.0e}".replace("-0", "-").replace("+0", "+")
        _write(args.out, f"plane_source_gamma{tag}.csv",
               profile_csv(result.x, result.profile))
        _write(args.out, f"plane_source_mass_gamma{tag}.csv",
               history_csv(result.times, result.mass, "mass"))
        _write(args.out, f"plane_source_entropy_gamma{tag}.csv",
               history_csv(result.times, result.entropy, "entropy"))
        mass_drift = abs(result.mass[-1] - result.mass[0]) / abs(result.mass[0])
        asym = float(np.max(np.abs(result.profile[:, 0] - result.profile[::-1, 0])))
        print(f"gamma={gamma:g}: peak={result.profile[:, 0].max():.4f} "
              f"mass drift={mass_drift:.2e} asymmetry={asym:.2e}")
        if args.check and (mass_drift > 1e-10 or asym > 1e-10):
            print("check FAIL: mass drift or asymmetry above 1e-10")
            status = 1
    if args.check and status == 0:
        print("check PASS")
    return status


def _cmd_probe_bounds(args) -> int:
    order = 3 if args.order is None else args.order
    gamma = _parse_floats(args.gamma)[0] if args.gamma else 1e-3
    model = ent.EntropyModel.from_name(args.entropy)
    report = run_bound_probes(basis_order=order, m_bound=args.bound_radius,
                              delta=args.delta, gamma=gamma, samples=args.samples,
                              seed=args.seed, tau_loose=args.tau_loose,
                              q_velocity=args.quad_q, model=model)
    print(f"samples={report.samples} failures={report.failures}")
    print(f"tight-solve worst ratio vs (delta + M*gamma):        {report.max_ratio:.6f}")
    print(f"loose-solve worst ratio vs (2delta + M*gamma + 2tau): {report.max_ratio_tau:.6f}")
    _write(args.out, "probe_bounds.csv",
           "samples,failures,max_ratio,max_ratio_tau\n"
           f"{report.samples},{report.failures},{report.max_ratio:.12e},"
           f"{report.max_ratio_tau:.12e}\n")
    if args.check:
        ok = (report.failures == 0 and report.max_ratio <= 1.0
              and report.max_ratio_tau <= 1.0)
        print("check PASS" if ok else "check FAIL")
        return 0 if ok else 1
    return 0


def _cmd_oracle_check(args) -> int:
    """Cross-check the dual-solver closures against the analytic forms."""
    q = args.quad_q
    status = 0

    # filter closure: quadratic entropy, orthonormal basis
    basis = legendre_basis(3, gauss_lobatto(q), orthonormal=True)
    model = ent.EntropyModel.quadratic()
    gamma = 0.7
    ctx = ClosureContext(basis=basis, model=model,
                         cfg=RegularizationConfig(gamma=gamma, tau=1e-13))
    rng = np.random.default_rng(args.seed)
    worst_pn = 0.0
    for _ in range(5):
        v = rng.standard_normal(basis.n)
        worst_pn = max(worst_pn, float(np.max(np.abs(
            flux(v, ctx) - pn_filter_closure(v, gamma, basis, model)))))
    print(f"filter closure max deviation:    {worst_pn:.3e} (tol 1e-10)")

    # two-moment closure with regularized first-order constraint
    basis2 = legendre_basis(1, gauss_lobatto(q))
    mb = ent.EntropyModel.maxwell_boltzmann()
    worst_m1 = 0.0
    for alpha1 in (0.5, -1.25, 2.0):
        for gamma in (1e-3, 0.1):
            v0 = 1.3
            ratio = m1_moment_ratio(alpha1, gamma, v0)
            cfg = RegularizationConfig(gamma=gamma, mask=np.array([0.0, 1.0]), tau=1e-13)
            sol = solve_dual(np.array([v0, ratio * v0]), cfg, basis2, mb)
            worst_m1 = max(worst_m1, abs(sol.alpha[1] - alpha1))
            worst_m1 = max(worst_m1, abs(
                m1_multiplier_from_ratio(ratio, gamma, v0) - alpha1))
    print(f"two-moment multiplier deviation: {worst_m1:.3e} (tol 1e-8)")

    # three-moment closure on a wide interval approximating V = R
    interval = gauss_lobatto(500).scaled(-16.0, 16.0)
    from .basis import monomial_basis
    basis3 = monomial_basis(2, interval)
    worst_euler = 0.0
    for (v0, v1, v2) in ((1.0, 0.0, 1.0), (1.0, 0.3, 1.2), (2.0, -0.4, 3.0)):
        for gamma in (0.05, 0.5, 2.0):
            cfg = RegularizationConfig(gamma=gamma, mask=np.array([0.0, 0.0, 1.0]),
                                       tau=1e-12, max_iter=500)
            ctx3 = ClosureContext(basis=basis3, model=mb, cfg=cfg)
            vh = regularized_moments(np.array([v0, v1, v2]), ctx3)
            ref = euler_reg_closure(v0, v1, v2, gamma)
            worst_euler = max(worst_euler, abs(vh[2] - ref) / abs(ref))
    print(f"three-moment closure deviation:  {worst_euler:.3e} (tol 1e-6, relative)")

    if args.check:
        ok = worst_pn <= 1e-10 and worst_m1 <= 1e-8 and worst_euler <= 1e-6
        print("check PASS" if ok else "check FAIL")
        return 0 if ok else 1
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv:
        argv = _apply_config_file(argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "static-accuracy":
            return _cmd_static(args)
        if args.command == "manufactured":
            return _cmd_manufactured(args)
        if args.command == "plane-source":
            return _cmd_plane_source(args)
        if args.command == "probe-bounds":
            return _cmd_probe_bounds(args)
        if args.command == "oracle-check":
            return _cmd_oracle_check(args)
    except Exception as exc:  # solver failures and bad configs exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise SystemExit("unreachable")


if __name__ == "__main__":
    sys.exit(main())
