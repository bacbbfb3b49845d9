"""Signatures of the run-time library used by instrumented programs.

These are not declared in program text; the type checker and the
interpreter both know them by name. `ANY` accepts a reference to any
record (or null).
"""
from . import ast as A

ANY = A.Type("ref", "*")
OWNED = A.ref("OwnedFields")

# name -> (parameter types, return type or None)
BUILTINS = {
    "initOwnedFields": ([], OWNED),
    "addStructAcc": ([OWNED, ANY], None),
    "assignId": ([ANY], None),
    "assertAcc": ([OWNED, ANY, A.INT, A.INT], None),
    "sepAcc": ([OWNED, ANY, A.INT, A.INT], None),
    "moveAcc": ([OWNED, OWNED, ANY, A.INT, A.INT], None),
    "join": ([OWNED, OWNED], None),
    "assertCheck": ([A.BOOL, A.INT], None),
}

BUILTIN_RECORDS = {"OwnedFields"}
