"""Two buggy versions of an acyclic-list predicate, caught at run time.

insertLast only states part of its specification, so the static pass
accepts it and defers the rest to run-time checks. The checks unroll the
predicate over the actual list, which is where each bug surfaces.

    python3 demos/faulty_predicates.py
"""
from importlib.resources import files

from gradverify.engine import format_checks, verify
from gradverify.frontend import load
from gradverify.instrument import instrument
from gradverify.runtime import run

CORPUS = files("gradverify").joinpath("corpus")


def attempt(name, nodes):
    prog = load(CORPUS.joinpath(f"{name}.gvl").read_text(), f"{name}.gvl")
    out = verify(prog)
    ins = instrument(prog, format_checks(out), "gradual")
    rep = run(ins.program, workload=nodes, provenance=ins.provenance)
    status = rep.outcome if rep.ok else f"{rep.outcome}: {rep.message} ({rep.location})"
    print(f"{name:<24} static={'ok' if out.ok else 'FAIL'}  {nodes}-node list -> {status}")


def main():
    for nodes in (1, 2, 5):
        attempt("acyclic", nodes)
    # branches of the conditional swapped: the empty segment claims a node
    attempt("acyclic_swapped_branch", 1)
    # arguments of the recursive instance swapped: walks from the wrong end
    attempt("acyclic_swapped_args", 1)
    attempt("acyclic_swapped_args", 2)


if __name__ == "__main__":
    main()
