"""Command-line entry point: ``levsplit {run,compare,order,scan}``.

Exit status is 0 on success, 2 when a simulation diverges and 1 on usage or
I/O errors. Every option may also be given in a ``--config`` file of
``key = value`` lines (``#`` starts a comment); command-line flags win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from levsplit.errors import DivergenceError, LevsplitError
from levsplit.harness import (
    DEFAULT_SPIN,
    DEFAULT_TILT,
    EQUILIBRIUM_HEIGHT,
    INTEGRATORS,
    ModelConfig,
    RunConfig,
    TrajectoryRecord,
    certified_spin,
    compare_to_reference,
    convergence_order,
    levitron_initial_state,
    spin_scan,
    stable_window,
)
from levsplit.hamiltonian import PhaseState
from levsplit.integrators import INIT_CHOICES, IterationConfig

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; keys use flag spelling with or without dashes."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _add_model_args(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("levitron", "oscillator"), default="levitron")
    g.add_argument("--a", type=float, default=ModelConfig.a, help="transverse inertia (levitron)")
    g.add_argument("--c", type=float, default=ModelConfig.c, help="axial inertia (levitron)")
    g.add_argument("--M", default="auto", help="magnetic strength, or 'auto' to balance gravity")
    g.add_argument("--z-star", type=float, default=EQUILIBRIUM_HEIGHT, help="equilibrium height for M=auto")
    g.add_argument("--mass", type=float, default=1.0, help="oscillator mass")
    g.add_argument("--stiffness", type=float, default=1.0, help="oscillator stiffness")
    g = p.add_argument_group("initial state")
    g.add_argument("--q0", type=_floats, help="six comma-separated coordinates")
    g.add_argument("--p0", type=_floats, help="six comma-separated momenta")
    g.add_argument("--p6", type=float, default=DEFAULT_SPIN, help="spin momentum for the default levitron start")
    g.add_argument("--tilt", type=float, default=DEFAULT_TILT, help="initial q4 for the default levitron start")


def _add_integrator_args(p, steps=True):
    g = p.add_argument_group("integrator")
    g.add_argument("--integrator", choices=INTEGRATORS, default="rk4")
    g.add_argument("--order", type=int, default=4, help="order of mpe / iterative-mpe (even, 2-16)")
    g.add_argument("--iters", type=int, default=4, help="maximum fixed-point sweeps per step")
    g.add_argument("--init", choices=INIT_CHOICES, default="previous-step")
    g.add_argument("--tol", type=float, default=1e-4)
    if steps:
        g.add_argument("--dt", type=float, default=1e-3)
        g.add_argument("--steps", type=int, default=1000)
        g.add_argument("--stride", type=int, default=1)
        g.add_argument("--escape", type=float, default=1.0, help="divergence radius for the top")
        g.add_argument("--bound", type=float, default=0.5, help="stability bound on |q3 - q3(0)|")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="levsplit", description="Levitron integrator benchmarks: run, compare, order, scan.")
    parser.add_argument("--config", help="key=value file mirroring the flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.subcommands = sub.choices

    p = sub.add_parser("run", help="integrate one trajectory and write it as CSV")
    _add_model_args(p)
    _add_integrator_args(p)
    p.add_argument("--out", help="trajectory CSV")
    p.add_argument("--ref", help="reference trajectory CSV to compare against")
    p.add_argument("--err-out", help="error CSV (default: <out>.err.csv when --ref is given)")

    p = sub.add_parser("compare", help="error of a trajectory CSV against a reference CSV")
    p.add_argument("run_csv")
    p.add_argument("ref_csv")
    p.add_argument("--out", help="error CSV (default: stdout)")
    p.add_argument("--bound", type=float, default=0.5)

    p = sub.add_parser("order", help="estimate the convergence order of an integrator")
    _add_model_args(p)
    _add_integrator_args(p, steps=False)
    p.add_argument("--dts", type=_floats, default=[0.1, 0.05, 0.025, 0.0125], help="comma-separated step sizes")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV of h,error,used")

    p = sub.add_parser("scan", help="stability of the levitron across spin values")
    _add_model_args(p)
    _add_integrator_args(p)
    p.add_argument("--p6-min", type=float, default=0.0)
    p.add_argument("--p6-max", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=11)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="scan CSV")
    return parser


def _model_config(args) -> ModelConfig:
    m = None if str(args.M).lower() == "auto" else float(args.M)
    return ModelConfig(args.model, args.a, args.c, m, args.z_star, args.mass, args.stiffness)


def _initial_state(args, model: ModelConfig) -> PhaseState:
    if args.q0 is None and args.p0 is None:
        if model.kind == "levitron":
            return levitron_initial_state(args.p6, z=model.z_star, tilt=args.tilt)
        return model.default_state()
    base = model.default_state()
    q = base.q if args.q0 is None else args.q0
    p = base.p if args.p0 is None else args.p0
    if len(q) != 6 or len(p) != 6:
        raise UsageError("--q0 and --p0 need six values each")
    return PhaseState(q, p)


def _iteration(args) -> IterationConfig:
    return IterationConfig(max_iters=args.iters, tol=args.tol, init=args.init)


def _run_config(args) -> RunConfig:
    model = _model_config(args)
    return RunConfig(model=model, integrator=args.integrator, order=args.order, h=args.dt,
                     steps=args.steps, iteration=_iteration(args), initial_state=_initial_state(args, model),
                     stride=args.stride, out=args.out, ref=getattr(args, "ref", None),
                     escape=args.escape, bound=args.bound)


def cmd_run(args) -> int:
    from levsplit.harness import run_simulation

    config = _run_config(args)
    try:
        record = run_simulation(config)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    final = record.final
    print(f"t_end={final.t:.6g} samples={len(record)} H0={record.H[0]:.12g} H_end={record.H[-1]:.12g}")
    if config.ref:
        summary = compare_to_reference(record, TrajectoryRecord.from_csv(config.ref), config.bound)
        err_out = args.err_out or (f"{args.out}.err.csv" if args.out else None)
        if err_out:
            summary.to_csv(err_out)
        print(f"mean_error={summary.mean_error:.6e} max_error={summary.max_error:.6e} stable={summary.stable}")
    return EXIT_OK


def cmd_compare(args) -> int:
    run = TrajectoryRecord.from_csv(args.run_csv)
    ref = TrajectoryRecord.from_csv(args.ref_csv)
    summary = compare_to_reference(run, ref, args.bound)
    if args.out:
        summary.to_csv(args.out)
        print(f"mean_error={summary.mean_error:.6e} max_error={summary.max_error:.6e} stable={summary.stable}")
    else:
        sys.stdout.write("t,err\n")
        for t, e in zip(summary.t, summary.err):
            sys.stdout.write(f"{t:.16e},{e:.16e}\n")
        sys.stdout.write(f"# mean_error={summary.mean_error:.16e}\n# max_error={summary.max_error:.16e}\n")
    return EXIT_OK


def cmd_order(args) -> int:
    model_cfg = _model_config(args)
    state = _initial_state(args, model_cfg)
    model = model_cfg.build(state)
    est = convergence_order(model, args.integrator, args.dts, args.horizon, state, order=args.order,
                            iteration=_iteration(args), workers=args.workers)
    lines = ["h,error,used"] + [f"{h:.16e},{e:.16e},{int(u)}" for h, e, u in zip(est.h, est.errors, est.used)]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    print(f"slope={est.slope:.4f}")
    return EXIT_OK


def cmd_scan(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    config = _run_config(args)
    spins = np.linspace(args.p6_min, args.p6_max, args.samples)
    rows = spin_scan(config, spins, out=args.out, workers=args.workers)
    if not args.out:
        print("p6,stable,survival_time")
        for r in rows:
            print(f"{r.p6:.16e},{int(r.stable)},{r.survival_time:.16e}")
    window = stable_window(rows)
    if window is None:
        print("no stable spin found")
    else:
        print(f"first_stable={window[0]:.6g} last_stable={window[1]:.6g} certified={certified_spin(rows):.6g}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "order": cmd_order, "scan": cmd_scan}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            file_values = read_config_file(known.config)
            # re-parse with the file values as defaults so explicit flags override them
            args = parser.parse_args(argv)
            sub = parser.subcommands[args.command]
            dests = {a.dest: a for a in sub._actions}
            unknown = sorted(set(file_values) - set(dests))
            if unknown:
                raise UsageError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
            # argparse converts string defaults with the option's type
            sub.set_defaults(**file_values)
        args = parser.parse_args(argv)
    except (UsageError, OSError) as exc:
        print(f"levsplit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # argparse exits on --help and on bad arguments; report the status instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, OSError, ValueError, LevsplitError) as exc:
        print(f"levsplit: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
