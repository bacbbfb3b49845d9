"""Walk through verifying the bank-withdraw example.

Prints the symbolic state after each statement, the residual checks the
static pass leaves behind, and the program with those checks inserted.

    python3 demos/withdraw_walkthrough.py
"""
from importlib.resources import files

from gradverify.engine import format_checks, verify
from gradverify.frontend import load
from gradverify.instrument import instrument
from gradverify.state import dump, format_dump

SRC = files("gradverify").joinpath("corpus/withdraw.gvl").read_text()


def main():
    prog = load(SRC, "withdraw.gvl")
    print(SRC)

    print("== symbolic states ==")

    def show(event, node, sigma):
        if event in ("enter", "after"):
            print(f"line {node.span[0]:>3} {event:<5} {format_dump(dump(sigma))}")

    out = verify(prog, tracer=show)

    print("\n== residual checks ==")
    report = format_checks(out)
    print(report)

    # The checks guard on the else-branch condition, versioned into _cond_1.
    print("== instrumented (gradual) ==")
    print(instrument(prog, report, "gradual").source())


if __name__ == "__main__":
    main()
