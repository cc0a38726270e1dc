"""Surface syntax: a tokenizer and Pratt parser for grammar files,
goals, and terms.

The accepted language is Prolog-adjacent: uppercase identifiers are
variables, lowercase / quoted identifiers are constants, ``[a,b|T]``
lists, ``f(X,1)`` compounds, and a fixed operator table covering the
arithmetic and comparison operators used inside ``{...}`` goals.  Full
Prolog operator-table parsing is deliberately out of scope.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .terms import Atom, Const, Struct, Term, Var, make_list


class StochLogSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int, source: str = "<string>"):
        super().__init__(f"{source}:{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.source = source


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>%[^\n]*)
    | (?P<number>\d+\.\d+|\d+)
    | (?P<dquote>"(?:[^"\\]|\\.)*")
    | (?P<squote>'(?:[^'\\]|\\.)*')
    | (?P<name>[a-z][A-Za-z0-9_]*)
    | (?P<var>[A-Z_][A-Za-z0-9_]*)
    | (?P<punct>-->|:-|::|=:=|=\\=|>=|=<|==|\\=|\*\*|//|[()\[\]{}|,;.=<>+\-*/])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", '"': '"'}


def _unescape(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\" and i + 1 < len(body):
            out.append(_ESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col

    def __repr__(self):
        return f"Token({self.kind},{self.text!r})"


def tokenize(text: str, source: str = "<string>"):
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise StochLogSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1, source
            )
        kind = m.lastgroup
        tok = m.group()
        if kind in ("ws", "comment"):
            line += tok.count("\n")
            if "\n" in tok:
                line_start = pos + tok.rindex("\n") + 1
        else:
            tokens.append(Token(kind, tok, line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# Binary operator table: name -> (precedence, right-assoc).  Lower binds
# tighter.  ``,`` and ``;`` appear only inside goals.
_BINOPS = {
    ";": (1100, True),
    ",": (1000, True),
    "is": (700, False),
    "=": (700, False),
    "\\=": (700, False),
    "==": (700, False),
    "=:=": (700, False),
    "=\\=": (700, False),
    "<": (700, False),
    ">": (700, False),
    ">=": (700, False),
    "=<": (700, False),
    "+": (500, False),
    "-": (500, False),
    "*": (400, False),
    "/": (400, False),
    "//": (400, False),
    "mod": (400, False),
    "**": (200, True),
}

# Tokens that may close an operand position, letting a bare operator
# symbol act as a constant (e.g. ``o(+)`` or ``member(Y,[+,-])``).
_CLOSERS = {",", ")", "]", "}", "|", ".", ";"}


class Parser:
    def __init__(self, text: str, source: str = "<string>"):
        self.tokens = tokenize(text, source)
        self.i = 0
        self.source = source

    # -- token helpers ----------------------------------------------------
    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            self.error(f"expected {text!r}, found {t.text!r}", t)
        return self.next()

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise StochLogSyntaxError(msg, tok.line, tok.col, self.source)

    def at_eof(self) -> bool:
        return self.peek().kind == "eof"

    # -- terms ------------------------------------------------------------
    def parse_term(self, max_prec: int = 999) -> Term:
        left = self.parse_primary()
        while True:
            t = self.peek()
            op = t.text
            if op not in _BINOPS or (t.kind == "name" and op not in ("is", "mod")):
                break
            prec, right = _BINOPS[op]
            if prec > max_prec:
                break
            self.next()
            rhs = self.parse_term(prec if right else prec - 1)
            left = Struct(op, (left, rhs))
        return left

    def parse_primary(self) -> Term:
        t = self.peek()
        if t.kind == "number":
            self.next()
            return Const(self._number(t.text))
        if t.kind == "var":
            self.next()
            if t.text == "_":
                return fresh_anonymous()
            return Var(t.text)
        if t.kind in ("dquote", "squote"):
            self.next()
            return Const(_unescape(t.text[1:-1]))
        if t.kind == "name":
            self.next()
            if self.at("(") and self._adjacent(t):
                args = self.parse_arglist()
                return Struct(t.text, args)
            return Const(t.text)
        if t.text == "[":
            return self.parse_list()
        if t.text == "(":
            self.next()
            inner = self.parse_term(1200)
            self.expect(")")
            return inner
        if t.text == "-" and self.peek(1).kind == "number":
            self.next()
            num = self.next()
            return Const(-self._number(num.text))
        if t.text in _BINOPS or t.text in ("+", "-", "*", "/"):
            # bare operator symbol used as a constant
            if self.peek(1).text in _CLOSERS or self.peek(1).kind == "eof":
                self.next()
                return Const(t.text)
        self.error(f"expected a term, found {t.text!r}", t)

    def _adjacent(self, prev: Token) -> bool:
        nxt = self.peek()
        return nxt.line == prev.line and nxt.col == prev.col + len(prev.text)

    def _number(self, text: str):
        if "." in text:
            whole, frac = text.split(".")
            return Fraction(int(whole + frac), 10 ** len(frac))
        return int(text)

    def parse_arglist(self):
        self.expect("(")
        args = [self.parse_term(999)]
        while self.at(","):
            self.next()
            args.append(self.parse_term(999))
        self.expect(")")
        return tuple(args)

    def parse_list(self) -> Term:
        self.expect("[")
        if self.at("]"):
            self.next()
            return make_list([])
        items = [self.parse_term(999)]
        while self.at(","):
            self.next()
            items.append(self.parse_term(999))
        tail = None
        if self.at("|"):
            self.next()
            tail = self.parse_term(999)
        self.expect("]")
        return make_list(items, tail) if tail is not None else make_list(items)

    def parse_atom(self) -> Atom:
        t = self.peek()
        if t.kind != "name":
            self.error(f"expected a predicate name, found {t.text!r}", t)
        self.next()
        if self.at("(") and self._adjacent(t):
            return Atom(t.text, self.parse_arglist())
        return Atom(t.text, ())

    def parse_goal(self) -> Term:
        """A goal is a term at full precedence (conjunction/disjunction)."""
        return self.parse_term(1200)


_anon_counter = [0]


def fresh_anonymous() -> Var:
    _anon_counter[0] += 1
    return Var(f"_A{_anon_counter[0]}")


def parse_term(text: str, source: str = "<string>") -> Term:
    p = Parser(text, source)
    t = p.parse_term(999)
    if not p.at_eof():
        p.error("trailing input after term")
    return t


def parse_goal_atom(text: str, source: str = "<goal>") -> Atom:
    """Parse a query goal written as ``pred`` or ``pred(arg,...)``."""
    p = Parser(text, source)
    a = p.parse_atom()
    if not p.at_eof():
        p.error("trailing input after goal")
    return a
