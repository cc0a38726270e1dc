"""First-order terms, atoms, and substitutions.

Terms are immutable and hashable: constants (symbols, exact integers,
exact rationals, or opaque payloads such as feature tokens), variables
(name plus a scope counter used for standardizing apart), and compound
terms.  Prolog lists are compound terms built from the ``cons`` functor
and the ``nil`` constant.

Probabilities never live inside term space; numeric constants are exact
(int / Fraction) so that answer counting is platform independent.
"""

from __future__ import annotations

import itertools
from fractions import Fraction


class Term:
    __slots__ = ()


class Const(Term):
    """Atomic constant.  ``value`` is a str symbol, int, Fraction, or an
    opaque hashable payload (e.g. a feature token)."""

    __slots__ = ("value", "_hash")

    def __init__(self, value):
        if isinstance(value, Fraction) and value.denominator == 1:
            value = int(value)
        self.value = value
        self._hash = hash((Const, value))

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return format_term(self)


class Var(Term):
    """Logical variable.  ``scope`` disambiguates renamed-apart copies;
    source-program variables have scope 0."""

    __slots__ = ("name", "scope", "_hash")

    def __init__(self, name: str, scope: int = 0):
        self.name = name
        self.scope = scope
        self._hash = hash((Var, name, scope))

    def __eq__(self, other):
        return (
            isinstance(other, Var)
            and self.name == other.name
            and self.scope == other.scope
        )

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return format_term(self)


class Struct(Term):
    """Compound term ``functor(arg1, ..., argn)`` with arity >= 1."""

    __slots__ = ("functor", "args", "_hash")

    def __init__(self, functor: str, args):
        args = tuple(args)
        if not args:
            raise ValueError("compound terms need at least one argument")
        self.functor = functor
        self.args = args
        self._hash = hash((Struct, functor, args))

    def __eq__(self, other):
        return (
            isinstance(other, Struct)
            and self._hash == other._hash
            and self.functor == other.functor
            and self.args == other.args
        )

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return format_term(self)


class Atom:
    """Predicate applied to terms.  Args may be empty (propositional)."""

    __slots__ = ("pred", "args", "_hash")

    def __init__(self, pred: str, args=()):
        if not pred:
            raise ValueError("predicate name must be nonempty")
        self.pred = pred
        self.args = tuple(args)
        self._hash = hash((Atom, pred, self.args))

    @property
    def indicator(self):
        return (self.pred, len(self.args))

    def __eq__(self, other):
        return (
            isinstance(other, Atom)
            and self._hash == other._hash
            and self.pred == other.pred
            and self.args == other.args
        )

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return format_atom(self)


NIL = Const("nil")


def make_list(items, tail: Term = NIL) -> Term:
    out = tail
    for item in reversed(list(items)):
        out = Struct("cons", (item, out))
    return out


def list_items(term: Term):
    """Split a cons chain into (items, tail); tail is NIL for proper lists."""
    items = []
    while isinstance(term, Struct) and term.functor == "cons" and len(term.args) == 2:
        items.append(term.args[0])
        term = term.args[1]
    return items, term


def is_number(value) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


# ---------------------------------------------------------------------------
# Walking and substitution application over raw binding environments.
# The engine threads a mutable {Var: Term} dict; Substitution below is the
# immutable, fully-resolved surface for callers.
# ---------------------------------------------------------------------------

def walk(t: Term, env: dict) -> Term:
    while isinstance(t, Var):
        nxt = env.get(t)
        if nxt is None:
            return t
        t = nxt
    return t


def resolve(t, env: dict):
    """Deep-apply ``env`` to a Term, Atom, or tuple of them.  Returns the
    original object when nothing changed."""
    if isinstance(t, tuple):
        out = tuple(resolve(x, env) for x in t)
        for a, b in zip(out, t):
            if a is not b:
                return out
        return t
    if isinstance(t, Atom):
        if not t.args:
            return t
        args = tuple(resolve(a, env) for a in t.args)
        for a, b in zip(args, t.args):
            if a is not b:
                return Atom(t.pred, args)
        return t
    t = walk(t, env)
    if isinstance(t, Struct):
        args = tuple(resolve(a, env) for a in t.args)
        for a, b in zip(args, t.args):
            if a is not b:
                return Struct(t.functor, args)
        return t
    return t


def occurs(v: Var, t: Term, env: dict) -> bool:
    t = walk(t, env)
    if t is v or t == v:
        return True
    if isinstance(t, Struct):
        return any(occurs(v, a, env) for a in t.args)
    return False


def unify_env(a, b, env: dict, trail: list, occurs_check: bool = True) -> bool:
    """Destructive unification into ``env``; bound vars are pushed on
    ``trail`` so callers can undo.  Accepts Terms or Atoms."""
    if isinstance(a, Atom) or isinstance(b, Atom):
        if not (isinstance(a, Atom) and isinstance(b, Atom)):
            return False
        if a.pred != b.pred or len(a.args) != len(b.args):
            return False
        return all(
            unify_env(x, y, env, trail, occurs_check)
            for x, y in zip(a.args, b.args)
        )
    a = walk(a, env)
    b = walk(b, env)
    if a is b:
        return True
    if isinstance(a, Var):
        if isinstance(b, Var) and a == b:
            return True
        if occurs_check and occurs(a, b, env):
            return False
        env[a] = b
        trail.append(a)
        return True
    if isinstance(b, Var):
        if occurs_check and occurs(b, a, env):
            return False
        env[b] = a
        trail.append(b)
        return True
    if isinstance(a, Const) and isinstance(b, Const):
        return a.value == b.value
    if isinstance(a, Struct) and isinstance(b, Struct):
        if a.functor != b.functor or len(a.args) != len(b.args):
            return False
        return all(
            unify_env(x, y, env, trail, occurs_check)
            for x, y in zip(a.args, b.args)
        )
    return False


def undo_to(mark: int, env: dict, trail: list):
    while len(trail) > mark:
        del env[trail.pop()]


class Substitution:
    """Immutable, idempotent variable binding map.

    Bindings are fully resolved at construction: no bound variable occurs
    in any bound term, and no variable maps to itself.
    """

    __slots__ = ("bindings",)

    def __init__(self, bindings: dict | None = None, *, _resolved: bool = False):
        if not bindings:
            self.bindings = {}
            return
        if _resolved:
            self.bindings = dict(bindings)
            return
        out = {}
        for v in bindings:
            t = resolve(v, bindings)
            if t != v:
                out[v] = t
        self.bindings = out

    def get(self, v: Var, default=None):
        return self.bindings.get(v, default)

    def apply(self, x):
        """Apply to a Term, Atom, or tuple of them."""
        if not self.bindings:
            return x
        return resolve(x, self.bindings)

    def compose(self, other: "Substitution") -> "Substitution":
        """self then other: apply(compose(s,t), x) == t.apply(s.apply(x))."""
        merged = {v: other.apply(t) for v, t in self.bindings.items()}
        for v, t in other.bindings.items():
            if v not in merged:
                merged[v] = t
        return Substitution({v: t for v, t in merged.items() if t != v}, _resolved=True)

    def restrict(self, vs) -> "Substitution":
        vs = set(vs)
        return Substitution(
            {v: t for v, t in self.bindings.items() if v in vs}, _resolved=True
        )

    def items(self):
        return self.bindings.items()

    def __len__(self):
        return len(self.bindings)

    def __bool__(self):
        return bool(self.bindings)

    def __eq__(self, other):
        return isinstance(other, Substitution) and self.bindings == other.bindings

    def __hash__(self):
        return hash(frozenset(self.bindings.items()))

    def __repr__(self):
        inner = ", ".join(
            f"{format_term(v)}={format_term(t)}" for v, t in sorted(
                self.bindings.items(), key=lambda kv: (kv[0].name, kv[0].scope)
            )
        )
        return "{" + inner + "}"


EMPTY_SUBST = Substitution()


def unify(a, b, *, occurs_check: bool = True) -> Substitution | None:
    """Most general unifier of two Terms or two Atoms, or None.

    The occurs check is on by default; absence of a unifier is a value,
    not an error.
    """
    env: dict = {}
    trail: list = []
    if not unify_env(a, b, env, trail, occurs_check):
        return None
    return Substitution(env)


# ---------------------------------------------------------------------------
# Renaming apart and canonical variants.
# ---------------------------------------------------------------------------

_scope_counter = itertools.count(1)


def fresh_scope() -> int:
    return next(_scope_counter)


def rename(x, scope: int):
    """Replace every variable in x with a copy in the given scope."""
    if isinstance(x, tuple):
        return tuple(rename(e, scope) for e in x)
    if isinstance(x, Atom):
        if not x.args:
            return x
        return Atom(x.pred, tuple(rename(a, scope) for a in x.args))
    if isinstance(x, Var):
        return Var(x.name, scope)
    if isinstance(x, Struct):
        return Struct(x.functor, tuple(rename(a, scope) for a in x.args))
    return x


def rename_apart(x):
    """Fresh-variable copy of x; successive calls share no variables."""
    return rename(x, fresh_scope())


def iter_vars(x):
    if isinstance(x, tuple):
        for e in x:
            yield from iter_vars(e)
    elif isinstance(x, Atom) or isinstance(x, Struct):
        for a in x.args:
            yield from iter_vars(a)
    elif isinstance(x, Var):
        yield x


def term_vars(x) -> set:
    return set(iter_vars(x))


def is_ground(x) -> bool:
    return next(iter_vars(x), None) is None


def variant_key(x):
    """Hashable canonical form with variables numbered by first occurrence.
    Two structures equal up to variable renaming map to the same key."""
    numbering: dict = {}

    def go(t):
        if isinstance(t, tuple):
            return ("t",) + tuple(go(e) for e in t)
        if isinstance(t, Atom):
            return ("a", t.pred) + tuple(go(a) for a in t.args)
        if isinstance(t, Var):
            idx = numbering.get(t)
            if idx is None:
                idx = len(numbering)
                numbering[t] = idx
            return ("v", idx)
        if isinstance(t, Struct):
            return ("s", t.functor) + tuple(go(a) for a in t.args)
        if isinstance(t, Const):
            return ("c", t.value)
        return ("x", t)

    return go(x)


# ---------------------------------------------------------------------------
# Printing (Prolog-style surface syntax; round-trips through the parser).
# ---------------------------------------------------------------------------

def format_number(value) -> str:
    """Exact numbers print as decimals when the expansion terminates
    (0.33, 0.5), otherwise as fractions (1/3)."""
    if isinstance(value, Fraction):
        num, den = value.numerator, value.denominator
        twos = fives = 0
        d = den
        while d % 2 == 0:
            d //= 2
            twos += 1
        while d % 5 == 0:
            d //= 5
            fives += 1
        if d != 1:
            return f"{num}/{den}"
        exp = max(twos, fives)
        scaled = num * 10 ** exp // den
        if exp == 0:
            return str(scaled)
        sign = "-" if scaled < 0 else ""
        digits = str(abs(scaled)).rjust(exp + 1, "0")
        return f"{sign}{digits[:-exp]}.{digits[-exp:]}"
    return str(value)


_PLAIN_ATOM = None  # set lazily to avoid importing re at module top for no reason


def _needs_quotes(sym: str) -> bool:
    global _PLAIN_ATOM
    if _PLAIN_ATOM is None:
        import re

        _PLAIN_ATOM = re.compile(r"[a-z][A-Za-z0-9_]*\Z")
    if _PLAIN_ATOM.match(sym):
        return False
    if sym in ("+", "-", "*", "/", "//", "**", "mod", "=", "[]", "nil"):
        return False
    return True


def format_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name if t.scope == 0 else f"{t.name}_{t.scope}"
    if isinstance(t, Const):
        v = t.value
        if is_number(v):
            return format_number(v)
        if isinstance(v, str):
            return f"'{v}'" if _needs_quotes(v) else v
        return repr(v)
    if isinstance(t, Struct):
        if t.functor == "cons" and len(t.args) == 2:
            items, tail = list_items(t)
            inner = ",".join(format_term(i) for i in items)
            if tail == NIL:
                return f"[{inner}]"
            return f"[{inner}|{format_term(tail)}]"
        if t.functor in _INFIX and len(t.args) == 2:
            return f"{format_operand(t.args[0], t.functor, 0)} {t.functor} {format_operand(t.args[1], t.functor, 1)}"
        inner = ",".join(format_term(a) for a in t.args)
        return f"{t.functor}({inner})"
    raise TypeError(f"not a term: {t!r}")


# operator name -> (precedence, left-assoc)
_INFIX = {
    ";": (1100, False),
    ",": (1000, False),
    "is": (700, None),
    "=": (700, None),
    "\\=": (700, None),
    "==": (700, None),
    "=:=": (700, None),
    "=\\=": (700, None),
    "<": (700, None),
    ">": (700, None),
    ">=": (700, None),
    "=<": (700, None),
    "+": (500, True),
    "-": (500, True),
    "*": (400, True),
    "/": (400, True),
    "//": (400, True),
    "mod": (400, True),
    "**": (200, False),
}


def format_operand(t: Term, parent_op: str, side: int) -> str:
    s = format_term(t)
    if isinstance(t, Struct) and t.functor in _INFIX and len(t.args) == 2:
        pprec = _INFIX[parent_op][0]
        cprec = _INFIX[t.functor][0]
        left_assoc = _INFIX[parent_op][1]
        if cprec > pprec or (cprec == pprec and (side == 1 if left_assoc else False)):
            return f"({s})"
    if isinstance(t, Const) and is_number(t.value) and t.value < 0:
        return f"({s})"
    return s


def format_atom(a: Atom) -> str:
    if not a.args:
        return a.pred
    inner = ",".join(format_term(t) for t in a.args)
    return f"{a.pred}({inner})"
