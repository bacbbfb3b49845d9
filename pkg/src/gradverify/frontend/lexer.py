"""Tokenizer for .gvl sources.

Specification text lives in `//@ ...` line comments and `/*@ ... @*/`
block comments; tokens lexed there carry in_spec=True. Plain comments are
skipped.
"""
from dataclasses import dataclass


class ParseError(Exception):
    def __init__(self, msg, line=0, col=0, filename="<input>"):
        super().__init__(f"{filename}:{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str  # ident | int | char | op | eof | kw
    text: str
    line: int
    col: int
    in_spec: bool = False

    @property
    def span(self):
        return (self.line, self.col)


KEYWORDS = {
    "struct", "typedef", "predicate", "method", "returns", "requires",
    "ensures", "loop_invariant", "invariant", "fold", "unfold", "assert",
    "if", "else", "while", "for", "return", "alloc", "acc", "true", "false",
    "NULL", "null", "int", "bool", "char", "void", "Int", "Bool",
}

# longest first
OPS = sorted("""
-> ++ -- += -= *= == != <= >= && || ! < > + - * / % = ? : ; , . ( ) { } [ ] &
""".split(), key=len, reverse=True)


def tokenize(src, filename="<input>"):
    toks = []
    i = 0
    n = len(src)
    line, col = 1, 1
    spec_line = False   # inside //@ until newline
    spec_block = False  # inside /*@ ... @*/

    def adv(k):
        nonlocal i, line, col
        for _ in range(k):
            if src[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = src[i]
        if c == "\n":
            spec_line = False
            adv(1)
            continue
        if c in " \t\r":
            adv(1)
            continue
        if spec_block and (src.startswith("@*/", i) or src.startswith("*/", i)):
            spec_block = False
            adv(3 if src[i] == "@" else 2)
            continue
        if src.startswith("//@", i):
            spec_line = True
            adv(3)
            continue
        if src.startswith("/*@", i):
            spec_block = True
            adv(3)
            continue
        if c == "@" and (spec_line or spec_block):
            adv(1)
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                adv(1)
            continue
        if src.startswith("/*", i):
            j = src.find("*/", i + 2)
            if j < 0:
                raise ParseError("unterminated comment", line, col, filename)
            adv(j + 2 - i)
            continue
        if c == "#":  # #use directives
            while i < n and src[i] != "\n":
                adv(1)
            continue
        in_spec = spec_line or spec_block
        sl, sc = line, col
        if c.isalpha() or c == "_" or c == "$" or (c == "\\" and src.startswith("\\result", i)):
            j = i + 1
            while j < n and (src[j].isalnum() or src[j] in "_$"):
                j += 1
            text = src[i:j]
            kind = "kw" if text in KEYWORDS else "ident"
            toks.append(Token(kind, text, sl, sc, in_spec))
            adv(j - i)
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("int", src[i:j], sl, sc, in_spec))
            adv(j - i)
            continue
        if c == "'":
            j = i + 1
            if j < n and src[j] == "\\":
                j += 2
            else:
                j += 1
            if j >= n or src[j] != "'":
                raise ParseError("bad character literal", sl, sc, filename)
            toks.append(Token("char", src[i:j + 1], sl, sc, in_spec))
            adv(j + 1 - i)
            continue
        for op in OPS:
            if src.startswith(op, i):
                toks.append(Token("op", op, sl, sc, in_spec))
                adv(len(op))
                break
        else:
            raise ParseError(f"unexpected character {c!r}", sl, sc, filename)
    toks.append(Token("eof", "", line, col, False))
    return toks
