"""Grammar programs: stochastic DCG rules, neural rule declarations,
domain predicates, and plain definite clauses.

A program is immutable once loaded.  Loading validates that every
fixed-weight nonterminal group sums to 1 (within 1e-9), that no
predicate mixes grammar rules with plain clauses, and that neural
declarations are well-formed against finite ground domains.
"""

from __future__ import annotations

from fractions import Fraction

from .syntax import Parser, StochLogSyntaxError
from .terms import (
    Atom,
    Const,
    Struct,
    Term,
    Var,
    format_atom,
    format_number,
    format_term,
    is_ground,
    list_items,
    make_list,
    term_vars,
)

NORMALIZATION_TOL = Fraction(1, 10 ** 9)


class ProgramError(Exception):
    """Validation failure while loading or using a program."""


# ---------------------------------------------------------------------------
# Body items
# ---------------------------------------------------------------------------

class TerminalList:
    """A (possibly empty) list of terminal symbols in a rule body."""

    __slots__ = ("items",)

    def __init__(self, items):
        self.items = tuple(items)

    def __eq__(self, other):
        return isinstance(other, TerminalList) and self.items == other.items

    def __hash__(self):
        return hash((TerminalList, self.items))

    def __repr__(self):
        return "[" + ",".join(format_term(t) for t in self.items) + "]"


class PrologGoal:
    """A ``{...}`` escape: a conjunction/disjunction evaluated in Prolog."""

    __slots__ = ("goal",)

    def __init__(self, goal: Term):
        self.goal = goal

    def __eq__(self, other):
        return isinstance(other, PrologGoal) and self.goal == other.goal

    def __hash__(self):
        return hash((PrologGoal, self.goal))

    def __repr__(self):
        return "{" + format_term(self.goal) + "}"


# BodyItem = Atom | TerminalList | PrologGoal


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

class FixedWeight:
    __slots__ = ("value",)

    def __init__(self, value: Fraction):
        self.value = Fraction(value)

    def __repr__(self):
        return format_number(self.value)


class TrainableWeight:
    """Marker putting the whole nonterminal group under a softmax."""

    __slots__ = ("label",)

    def __init__(self, label: str | None = None):
        self.label = label

    def __repr__(self):
        return f"t({self.label})" if self.label else "t"


class NeuralDeclaration:
    """nn(model, [inputs], [outputs], [domain predicates])."""

    __slots__ = ("model_name", "input_vars", "output_vars", "domain_preds")

    def __init__(self, model_name, input_vars, output_vars, domain_preds):
        self.model_name = model_name
        self.input_vars = tuple(input_vars)
        self.output_vars = tuple(output_vars)
        self.domain_preds = tuple(domain_preds)

    def __repr__(self):
        ins = ",".join(format_term(v) for v in self.input_vars)
        outs = ",".join(format_term(v) for v in self.output_vars)
        doms = ",".join(self.domain_preds)
        return f"nn({self.model_name},[{ins}],[{outs}],[{doms}])"


class StochasticRule:
    __slots__ = ("weight", "head", "body", "order", "line")

    def __init__(self, weight, head: Atom, body, order: int = 0, line: int = 0):
        self.weight = weight  # FixedWeight | TrainableWeight | NeuralDeclaration | None
        self.head = head
        self.body = tuple(body)
        self.order = order
        self.line = line

    @property
    def group(self) -> str:
        return f"{self.head.pred}/{len(self.head.args)}"

    def __repr__(self):
        body = ", ".join(repr(it) for it in self.body) if self.body else "[]"
        w = "" if self.weight is None else f"{self.weight!r} :: "
        return f"{w}{format_atom(self.head)} --> {body}."


class Clause:
    """Plain definite clause usable inside {...} goals."""

    __slots__ = ("head", "body")

    def __init__(self, head: Atom, body: Term | None):
        self.head = head
        self.body = body  # a goal term or None for facts

    def __repr__(self):
        if self.body is None:
            return f"{format_atom(self.head)}."
        return f"{format_atom(self.head)} :- {format_term(self.body)}."


class Program:
    def __init__(self, rules, clauses, source: str = "<string>"):
        self.rules = list(rules)
        self.clauses = list(clauses)
        self.source = source
        self.rule_groups: dict[tuple[str, int], list[StochasticRule]] = {}
        for r in self.rules:
            self.rule_groups.setdefault(r.head.indicator, []).append(r)
        self.clause_index: dict[tuple[str, int], list[Clause]] = {}
        for c in self.clauses:
            self.clause_index.setdefault(c.head.indicator, []).append(c)
        self.domains: dict[str, tuple[Term, ...]] = {}
        self.min_yield: dict[tuple[str, int], float] = {}
        self.trainable_groups: dict[str, list[StochasticRule]] = {}
        self.neural_rules: list[StochasticRule] = []

    # -- queries -----------------------------------------------------------
    def rules_for(self, indicator) -> list[StochasticRule]:
        return self.rule_groups.get(indicator, [])

    def clauses_for(self, indicator) -> list[Clause]:
        return self.clause_index.get(indicator, [])

    def domain(self, pred: str) -> tuple[Term, ...]:
        return self.domains[pred]

    def neural_models(self) -> dict[str, NeuralDeclaration]:
        return {
            r.weight.model_name: r.weight
            for r in self.neural_rules
        }

    def pretty(self) -> str:
        lines = [repr(c) for c in self.clauses]
        if lines and self.rules:
            lines.append("")
        lines.extend(repr(r) for r in self.rules)
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Parsing grammar files
# ---------------------------------------------------------------------------

def parse_program(
    text: str,
    source: str = "<string>",
    *,
    check_normalization: bool = True,
) -> Program:
    parser = Parser(text, source)
    rules: list[StochasticRule] = []
    clauses: list[Clause] = []
    order = 0
    while not parser.at_eof():
        line = parser.peek().line
        weight, head, kind, body = _parse_statement(parser)
        if kind == "rule":
            rules.append(StochasticRule(weight, head, body, order, line))
            order += 1
        elif kind == "fact":
            clauses.append(Clause(head, None))
        else:
            clauses.append(Clause(head, body))
    program = Program(rules, clauses, source)
    _validate(program, check_normalization)
    return program


def load_program(path, **kwargs) -> Program:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_program(fh.read(), source=str(path), **kwargs)


def _parse_statement(p: Parser):
    """One clause/rule ending in '.'; returns (weight, head, kind, body)."""
    weight = None
    first = p.parse_term(999)
    if p.at("::"):
        p.next()
        weight = _interpret_weight_term(p, first)
        head_atom = p.parse_atom()
    else:
        head_atom = _term_to_head(p, first)
    if p.at("-->"):
        p.next()
        body = _parse_rule_body(p)
        p.expect(".")
        if isinstance(weight, NeuralDeclaration):
            _check_decl_vars(p, weight, head_atom, body)
        return weight, head_atom, "rule", body
    if p.at(":-"):
        p.next()
        goal = p.parse_goal()
        p.expect(".")
        if weight is not None:
            p.error("plain clauses cannot carry weights")
        return None, head_atom, "clause", goal
    p.expect(".")
    if weight is not None:
        p.error("facts cannot carry weights")
    return None, head_atom, "fact", None


_HEAD_NAME = None


def _is_plain_name(s: str) -> bool:
    global _HEAD_NAME
    if _HEAD_NAME is None:
        import re

        _HEAD_NAME = re.compile(r"[a-z][A-Za-z0-9_]*\Z")
    return bool(_HEAD_NAME.match(s))


def _term_to_head(p: Parser, t: Term) -> Atom:
    if isinstance(t, Const) and isinstance(t.value, str) and _is_plain_name(t.value):
        return Atom(t.value, ())
    if isinstance(t, Struct) and _is_plain_name(t.functor):
        return Atom(t.functor, t.args)
    p.error(f"expected a rule or clause head, found {format_term(t)}")


def _interpret_weight_term(p: Parser, t: Term):
    if isinstance(t, Const):
        if t.value == "t":
            return TrainableWeight()
        v = t.value
        if isinstance(v, (int, Fraction)):
            return _checked_fixed(p, Fraction(v))
    if isinstance(t, Struct):
        if t.functor == "/" and len(t.args) == 2:
            num, den = t.args
            if (
                isinstance(num, Const)
                and isinstance(den, Const)
                and isinstance(num.value, int)
                and isinstance(den.value, int)
            ):
                return _checked_fixed(p, Fraction(num.value, den.value))
            p.error("rational weights must be ground integers, like 1/3")
        if t.functor == "t":
            return TrainableWeight(format_term(t.args[0]))
        if t.functor == "nn" and len(t.args) == 4:
            return _interpret_nn(p, t)
    p.error(f"cannot interpret {format_term(t)} as a rule weight")


def _checked_fixed(p: Parser, value: Fraction) -> FixedWeight:
    if value < 0 or value > 1:
        p.error(f"fixed weight {format_number(value)} outside [0,1]")
    return FixedWeight(value)


def _interpret_nn(p: Parser, t: Struct) -> NeuralDeclaration:
    name_t, ins_t, outs_t, doms_t = t.args
    if not isinstance(name_t, Const) or not isinstance(name_t.value, str):
        p.error("nn declaration needs a model name")

    def var_list(lt, what):
        items, tail = list_items(lt)
        if tail != make_list([]):
            p.error(f"nn {what} must be a proper list")
        for v in items:
            if not isinstance(v, Var):
                p.error(f"nn {what} must contain variables, found {format_term(v)}")
        return items

    def pred_list(lt):
        items, tail = list_items(lt)
        if tail != make_list([]):
            p.error("nn domain list must be a proper list")
        preds = []
        for d in items:
            if not isinstance(d, Const) or not isinstance(d.value, str):
                p.error(f"nn domains must be predicate names, found {format_term(d)}")
            preds.append(d.value)
        return preds

    ins = var_list(ins_t, "inputs")
    outs = var_list(outs_t, "outputs")
    doms = pred_list(doms_t)
    if not outs:
        p.error("nn declaration needs at least one output variable")
    if len(outs) != len(doms):
        p.error("nn declaration needs one domain predicate per output variable")
    return NeuralDeclaration(name_t.value, ins, outs, doms)


def _parse_rule_body(p: Parser):
    items = []
    while True:
        t = p.peek()
        if t.text == "[":
            lst = p.parse_list()
            terminal_items, tail = list_items(lst)
            if tail != make_list([]):
                p.error("terminal lists cannot have open tails")
            items.append(TerminalList(terminal_items))
        elif t.text == "{":
            p.next()
            goal = p.parse_goal()
            p.expect("}")
            items.append(PrologGoal(goal))
        else:
            items.append(p.parse_atom())
        if p.at(","):
            p.next()
            continue
        break
    # a body that is just "[]" is the empty production
    if len(items) == 1 and isinstance(items[0], TerminalList) and not items[0].items:
        return ()
    return tuple(items)


def _check_decl_vars(p: Parser, decl: NeuralDeclaration, head: Atom, body):
    rule_vars = set(term_vars(head))
    for item in body:
        if isinstance(item, Atom):
            rule_vars |= term_vars(item)
        elif isinstance(item, TerminalList):
            rule_vars |= term_vars(item.items)
        else:
            rule_vars |= term_vars(item.goal)
    for v in decl.output_vars:
        if v not in rule_vars:
            p.error(f"nn output variable {format_term(v)} does not occur in the rule")
    for v in decl.input_vars:
        if v not in rule_vars:
            p.error(f"nn input variable {format_term(v)} does not occur in the rule")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _validate(program: Program, check_normalization: bool):
    for indicator in program.rule_groups:
        if indicator in program.clause_index:
            raise ProgramError(
                f"{indicator[0]}/{indicator[1]} is defined by both grammar rules "
                f"and plain clauses"
            )
    _resolve_domains(program)
    for indicator, group in program.rule_groups.items():
        name = f"{indicator[0]}/{indicator[1]}"
        neural = [r for r in group if isinstance(r.weight, NeuralDeclaration)]
        trainable = [r for r in group if isinstance(r.weight, TrainableWeight)]
        if neural:
            if len(group) > 1:
                raise ProgramError(
                    f"nonterminal group {name} mixes a neural rule with other rules"
                )
            rule = group[0]
            decl = rule.weight
            for d in decl.domain_preds:
                if d not in program.domains:
                    raise ProgramError(
                        f"neural rule for {name} references unknown domain "
                        f"predicate {d}"
                    )
            program.neural_rules.append(rule)
            continue
        if trainable:
            program.trainable_groups[name] = group
            continue
        if any(r.weight is None for r in group):
            if len(group) > 1:
                raise ProgramError(
                    f"nonterminal group {name} omits weights but has "
                    f"{len(group)} rules; weightless groups must be singletons"
                )
            continue
        if check_normalization:
            total = sum(r.weight.value for r in group)
            if abs(total - 1) > NORMALIZATION_TOL:
                raise ProgramError(
                    f"weights of nonterminal group {name} sum to "
                    f"{format_number(Fraction(total))}, expected 1"
                )
    _compute_min_yields(program)
    _check_epsilon_cycles(program)


def _resolve_domains(program: Program):
    """Domain predicates are ground unit facts or member/domain sugar,
    expanded here at load time."""
    for indicator, clauses in program.clause_index.items():
        pred, arity = indicator
        if arity != 1:
            continue
        values: list[Term] = []
        ok = True
        for c in clauses:
            if c.body is None:
                arg = c.head.args[0]
                if not is_ground(arg):
                    ok = False
                    break
                values.append(arg)
            elif (
                isinstance(c.body, Struct)
                and c.body.functor in ("member", "domain")
                and len(c.body.args) == 2
                and c.body.args[0] == c.head.args[0]
            ):
                items, tail = list_items(c.body.args[1])
                if tail != make_list([]) or not all(is_ground(i) for i in items):
                    ok = False
                    break
                values.extend(items)
            else:
                ok = False
                break
        if ok and values:
            seen = set()
            uniq = []
            for v in values:
                if v not in seen:
                    seen.add(v)
                    uniq.append(v)
            program.domains[pred] = tuple(uniq)


def _item_min_yield(item, yields) -> float:
    if isinstance(item, TerminalList):
        return len(item.items)
    if isinstance(item, PrologGoal):
        return 0
    return yields.get(item.indicator, float("inf"))


def _compute_min_yields(program: Program):
    """Least terminal count each nonterminal must consume; +inf when no
    finite derivation exists.  Used for exact pruning during resolution."""
    yields = {ind: float("inf") for ind in program.rule_groups}
    changed = True
    while changed:
        changed = False
        for ind, group in program.rule_groups.items():
            best = yields[ind]
            for r in group:
                total = 0.0
                for item in r.body:
                    total += _item_min_yield(item, yields)
                    if total == float("inf"):
                        break
                if total < best:
                    best = total
            if best < yields[ind]:
                yields[ind] = best
                changed = True
    program.min_yield = yields


def _check_epsilon_cycles(program: Program):
    """Detect cycles of rule applications that consume no input; those make
    the derivation forest infinite and SLG refuses them (SLD still works
    under a depth limit)."""
    edges: dict[tuple, set] = {}
    for ind, group in program.rule_groups.items():
        for r in group:
            atoms = [it for it in r.body if isinstance(it, Atom)]
            for a in atoms:
                rest = sum(
                    _item_min_yield(it, program.min_yield)
                    for it in r.body
                    if it is not a
                )
                if rest == 0:
                    edges.setdefault(ind, set()).add(a.indicator)
    color: dict[tuple, int] = {}
    cyclic = False

    def visit(node):
        nonlocal cyclic
        color[node] = 1
        for nxt in edges.get(node, ()):
            c = color.get(nxt, 0)
            if c == 1:
                cyclic = True
            elif c == 0:
                visit(nxt)
        color[node] = 2

    for node in edges:
        if color.get(node, 0) == 0:
            visit(node)
    program.epsilon_cyclic = cyclic


# ---------------------------------------------------------------------------
# Translation to definite clauses with difference lists
# ---------------------------------------------------------------------------

class TranslatedClause:
    __slots__ = ("head", "body")

    def __init__(self, head: Atom, body):
        self.head = head
        self.body = tuple(body)

    def __repr__(self):
        if not self.body:
            return f"{format_atom(self.head)}."
        inner = ", ".join(
            format_term(b) if isinstance(b, Term) else format_atom(b)
            for b in self.body
        )
        return f"{format_atom(self.head)} :- {inner}."


def translate(program: Program) -> list[TranslatedClause]:
    """Appendix-style DCG-to-Prolog translation.

    Each rule with k body items is threaded through difference-list
    variables S0..Sk; a terminal list at position i folds into the
    surrounding arguments as S_{i-1} = [t1,...,tj | S_i]; {G} goals are
    copied verbatim; the weight sentinel p(w) or nn(model, ins, outs)
    plus domain checks come last.
    """
    out = []
    for c in program.clauses:
        if c.body is None:
            out.append(TranslatedClause(c.head, ()))
        else:
            out.append(TranslatedClause(c.head, _flatten_conj(c.body)))
    for r in program.rules:
        out.append(_translate_rule(r))
    return out


def _flatten_conj(goal: Term):
    if isinstance(goal, Struct) and goal.functor == "," and len(goal.args) == 2:
        return _flatten_conj(goal.args[0]) + _flatten_conj(goal.args[1])
    return (goal,)


def _translate_rule(r: StochasticRule) -> TranslatedClause:
    used = {v.name for v in term_vars(r.head)}
    for item in r.body:
        if isinstance(item, Atom):
            used |= {v.name for v in term_vars(item)}
        elif isinstance(item, TerminalList):
            used |= {v.name for v in term_vars(item.items)}
        else:
            used |= {v.name for v in term_vars(item.goal)}

    counter = [0]

    def fresh_seq_var() -> Var:
        while True:
            name = f"S{counter[0]}"
            counter[0] += 1
            if name not in used:
                return Var(name)

    s0 = fresh_seq_var()
    body_atoms: list = []
    current: Var = s0
    folds: dict[Var, Term] = {}
    for item in r.body:
        if isinstance(item, TerminalList):
            nxt = fresh_seq_var()
            folds[current] = make_list(item.items, nxt)
            current = nxt
        elif isinstance(item, Atom):
            nxt = fresh_seq_var()
            body_atoms.append(Atom(item.pred, item.args + (current, nxt)))
            current = nxt
        else:
            body_atoms.extend(_flatten_conj(item.goal))
    head = Atom(r.head.pred, r.head.args + (s0, current))
    # fold terminal bindings: substitute S_{i-1} := [ts | S_i] everywhere
    def fold_term(t: Term) -> Term:
        if isinstance(t, Var):
            rep = folds.get(t)
            return fold_term(rep) if rep is not None else t
        if isinstance(t, Struct):
            return Struct(t.functor, tuple(fold_term(a) for a in t.args))
        return t

    def fold_in(x):
        if isinstance(x, Atom):
            return Atom(x.pred, tuple(fold_term(a) for a in x.args))
        return fold_term(x)

    head = fold_in(head)
    body_atoms = [fold_in(b) for b in body_atoms]
    body_atoms.extend(_sentinels(r))
    return TranslatedClause(head, body_atoms)


def _sentinels(r: StochasticRule):
    w = r.weight
    if w is None:
        return []
    if isinstance(w, FixedWeight):
        return [Atom("p", (Const(w.value),))]
    if isinstance(w, TrainableWeight):
        return [Atom("p", (Struct("t", (Const(r.group),)),))]
    decl: NeuralDeclaration = w
    sentinel = Atom(
        "nn",
        (
            Const(decl.model_name),
            make_list(decl.input_vars),
            make_list(decl.output_vars),
        ),
    )
    checks = [
        Atom(dom, (var,)) for var, dom in zip(decl.output_vars, decl.domain_preds)
    ]
    return [sentinel] + checks


def format_translation(clauses: list[TranslatedClause]) -> str:
    return "\n".join(repr(c) for c in clauses) + "\n"
