"""How run-time checking shrinks as a specification is filled in.

Samples a few paths from the all-`?` specification of the BST benchmark to
its complete one and prints mean executed checks per mode.

    python3 demos/lattice_trend.py [paths]
"""
import sys
from importlib.resources import files

from gradverify.frontend import load
from gradverify.lattice import enumerate_elements, run_lattice, sample_paths


def main(n_paths=4):
    prog = load(files("gradverify").joinpath("corpus/bst.gvl").read_text(), "bst.gvl")
    elements = enumerate_elements(prog)
    print(f"{len(elements)} specification elements")
    for e in elements[:6]:
        print("  ", e)
    print("   ...")

    paths = sample_paths(elements, n_paths, seed=7)
    res = run_lattice(prog, paths, workloads=(16,))
    print(f"\n{len(res.rows)} lattice points evaluated, "
          f"{len(res.violations)} failed static verification\n")

    # mean over paths of the point nearest 0%, 50% and 100% specified
    print(res.summary())

    # one path in full: gradual checks fall to zero, dynamic ones climb
    print("step  %spec  gradual  dynamic  framing")
    rows = res.path_rows(0)
    for r in rows[::4] + ([rows[-1]] if (len(rows) - 1) % 4 else []):
        c = [r.checks.get((m, 16)) for m in ("gradual", "dynamic", "framing")]
        print(f"{r.step:>4}  {r.percent:5.1f}  {c[0]:>7}  {c[1]:>7}  {c[2]:>7}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 4)
