"""Command-line front end: ``gchs {check,audit,simulate,bracket} SCENARIO``.

Exit codes: 0 success, 1 usage error, 2 scenario or expression error,
3 numeric failure, 4 a FORCED identity failed.  Data goes to stdout or
``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .audit import run_audit
from .dynamics import CONVENTIONS, IntegrationError, integrate
from .expr import ExprError, NumericDomainError
from .manifold import FrameError, ManifoldError, gpwb_decomposed, w_dynamics, gpwb
from .scenario import ScenarioError, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_SCENARIO, EXIT_NUMERIC, EXIT_FORCED = 0, 1, 2, 3, 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _err(msg: str):
    print(msg, file=sys.stderr)


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def _load(path, require_hamiltonian=True):
    try:
        return load_scenario(path, require_hamiltonian)
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def cmd_check(args) -> int:
    sc = _load(args.scenario)
    sys.stdout.write(sc.echo())
    return EXIT_OK


def cmd_audit(args) -> int:
    sc = _load(args.scenario)
    if sc.audit is None:
        _err(f"{args.scenario}: scenario has no [audit] section")
        return EXIT_SCENARIO
    seed = sc.audit.seed if args.seed is None else args.seed
    samples = sc.audit.samples if args.samples is None else args.samples
    report = run_audit(sc.audit_problem(), samples, seed, sc.audit.identities, threads=args.threads)
    with _output(args.out) as fh:
        report.to_csv(fh)
    failed = [r.identity_id for r in report.results if r.verdict == "fail"]
    _err(f"{sc.name}: seed={seed} samples={samples} usable={report.usable_fraction:.1%} "
         f"forced failures={len(failed)}")
    if report.unusable:
        _err("more than half of the sample points were rejected")
        return EXIT_NUMERIC
    if failed:
        _err("FORCED identities failed: " + ", ".join(failed))
        return EXIT_FORCED
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load(args.scenario)
    if sc.simulate is None:
        _err(f"{args.scenario}: scenario has no [simulate] section")
        return EXIT_SCENARIO
    cfg = sc.trajectory_config(args.convention)
    try:
        traj = integrate(cfg)
    except IntegrationError as exc:
        _err(f"integration failed: {exc} (last good t = {_fmt(exc.t_last)})")
        return EXIT_NUMERIC
    M = sc.manifold
    names = [f"x{i + 1}" for i in range(M.n)]
    obs = list(traj.observables)
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *names, "w", "H", "s", "I", *obs])
        cols = [traj.t[:, None], traj.x, traj.w[:, None], traj.H[:, None], traj.s[:, None], traj.I[:, None]]
        cols += [traj.observables[k][:, None] for k in obs]
        for row in np.hstack(cols):
            writer.writerow([_fmt(v) for v in row])
    _err(f"{sc.name}: {len(traj.t)} rows, convention={cfg.convention}, drift of I = {traj.drift():.3g}")
    return EXIT_OK


def cmd_bracket(args) -> int:
    sc = _load(args.scenario, require_hamiltonian=False)
    M = sc.manifold
    try:
        x = np.array([float(t) for t in args.at.split(",")])
    except ValueError:
        raise _UsageError(f"--at must be comma-separated numbers, got {args.at!r}") from None
    if len(x) != M.n:
        raise _UsageError(f"--at needs {M.n} coordinates, got {len(x)}")
    f, g = M.expr(args.f), M.expr(args.g)
    total = gpwb(M, f, g, x)
    ghs, xchi = gpwb_decomposed(M, f, g, x)
    print(_fmt(total))
    print(f"ghs {_fmt(ghs)}")
    print(f"xchi {_fmt(xchi)}")
    if sc.H is not None:
        print(f"w {_fmt(w_dynamics(M, sc.H, x))}")
    else:
        _err("no [hamiltonian]: w(x) not printed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gchs", description="Generalized Poisson-W brackets: audits and trajectories.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="validate a scenario and echo it in normalized form")
    c.add_argument("scenario")
    c.set_defaults(func=cmd_check)

    a = sub.add_parser("audit", help="run the identity audit and write a CSV report")
    a.add_argument("scenario")
    a.add_argument("--out", help="report path (default: stdout)")
    a.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count)")
    a.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    a.add_argument("--samples", type=int, default=None, help="override the scenario sample count")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("simulate", help="integrate the scenario and write a CSV trajectory")
    s.add_argument("scenario")
    s.add_argument("--out", help="trajectory path (default: stdout)")
    s.add_argument("--convention", choices=CONVENTIONS, default=None)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bracket", help="evaluate {f,g} and its decomposition at a point")
    b.add_argument("scenario")
    b.add_argument("--f", required=True)
    b.add_argument("--g", required=True)
    b.add_argument("--at", required=True, help="comma-separated point")
    b.set_defaults(func=cmd_bracket)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise _UsageError("--threads must be >= 1")
        if getattr(args, "samples", None) is not None and args.samples < 1:
            raise _UsageError("--samples must be >= 1")
        return args.func(args)
    except _UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (ScenarioError, ExprError) as exc:
        _err(f"{getattr(args, 'scenario', '')}: {exc}")
        return EXIT_SCENARIO
    except (NumericDomainError, FrameError, ManifoldError) as exc:
        _err(f"numeric failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
