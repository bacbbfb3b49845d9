"""Command line: verify, instrument, run and lattice.

Exit codes: 0 success, 1 verification failure (static or at run time),
2 usage or internal error.
"""
import argparse
import os
import sys

from .frontend import ParseError, TypeCheckError, load
from .engine import format_checks, verify
from .instrument import HEADER, MODES, InstrumentError, instrument, parse_report
from .lattice import LatticeError, enumerate_elements, run_lattice, sample_paths
from .runtime import read_provenance, run
from .solver import make_solver


class UsageError(Exception):
    pass


def read_text(path):
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}")


def write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def load_program(path, allow_reserved=False):
    return load(read_text(path), path, allow_reserved=allow_reserved)


def cmd_verify(args):
    prog = load_program(args.file)
    out = verify(prog, make_solver(args.solver))
    report = format_checks(out)
    if args.emit_checks:
        write_text(args.emit_checks, report)
    sys.stdout.write(report)
    return 0 if out.ok else 1


def instrumented_source(path, mode, checks=None, solver=None):
    prog = load_program(path)
    if checks is not None:
        report = read_text(checks)
    elif mode == "gradual":
        out = verify(prog, make_solver(solver))
        if not out.ok:
            sys.stdout.write(format_checks(out))
            return None
        report = format_checks(out)
    else:
        report = format_checks(verify(prog, make_solver(solver)))
    return instrument(prog, parse_report(report), mode).source()


def cmd_instrument(args):
    src = instrumented_source(args.file, args.mode, args.checks, args.solver)
    if src is None:
        return 1
    write_text(args.out, src)
    return 0


def cmd_run(args):
    text = read_text(args.file)
    if text.startswith(HEADER):
        src = text
    else:
        src = instrumented_source(args.file, args.mode, solver=args.solver)
        if src is None:
            return 1
    prog = load(src, args.file, allow_reserved=True)
    rep = run(prog, workload=args.workload, seed=args.seed, provenance=read_provenance(src))
    text = rep.format()
    if args.report:
        write_text(args.report, text)
    sys.stdout.write(text)
    return 0 if rep.ok else 1


def cmd_lattice(args):
    prog = load_program(args.file)
    top = verify(prog, make_solver(args.solver))
    if not top.ok or top.checks:
        sys.stdout.write(format_checks(top))
        raise UsageError("the complete specification must verify without residual checks")
    workloads = tuple(int(w) for w in args.workloads.split(",") if w)
    modes = tuple(m for m in args.modes.split(",") if m)
    for m in modes:
        if m not in MODES:
            raise UsageError(f"unknown mode {m}")
    elements = enumerate_elements(prog)
    paths = sample_paths(elements, args.paths, args.seed)
    res = run_lattice(prog, paths, workloads, modes, seed=args.seed, jobs=args.jobs)
    name = os.path.splitext(os.path.basename(args.file))[0]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_text(os.path.join(args.out, f"{name}.csv"), res.table())
        write_text(os.path.join(args.out, f"{name}-summary.csv"), res.summary())
    else:
        sys.stdout.write(res.table())
    sys.stdout.write(f"# {name}: {len(elements)} elements, {len(paths)} paths, "
                     f"{len(res.rows)} rows\n")
    sys.stdout.write(res.summary())
    for p, step, msg in res.violations:
        sys.stdout.write(f"violation path {p} step {step}: {msg}\n")
    return 1 if res.violations else 0


def build_parser():
    ap = argparse.ArgumentParser(prog="gradverify",
                                 description="Gradual verifier for .gvl programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def solver_flag(p):
        p.add_argument("--solver", default=None,
                       help="builtin or smtlib:CMD (default: $GRADVERIFY_SOLVER or builtin)")

    p = sub.add_parser("verify", help="verify statically and print the check report")
    p.add_argument("file")
    p.add_argument("--emit-checks", metavar="PATH")
    solver_flag(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("instrument", help="insert run-time checks")
    p.add_argument("file")
    p.add_argument("--mode", choices=MODES, default="gradual")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--checks", metavar="PATH", help="check report to use ('-' for stdin)")
    solver_flag(p)
    p.set_defaults(fn=cmd_instrument)

    p = sub.add_parser("run", help="execute with dynamic checking")
    p.add_argument("file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workload", type=int, default=16)
    p.add_argument("--mode", choices=MODES, default="gradual")
    p.add_argument("--report", metavar="PATH")
    solver_flag(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("lattice", help="run the specification-lattice study")
    p.add_argument("file")
    p.add_argument("--paths", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workloads", default="8,16,32")
    p.add_argument("--modes", default=",".join(MODES))
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--jobs", type=int, default=1)
    solver_flag(p)
    p.set_defaults(fn=cmd_lattice)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        return args.fn(args)
    except (UsageError, ParseError, TypeCheckError, InstrumentError, LatticeError,
            ValueError) as exc:
        sys.stderr.write(f"gradverify: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
