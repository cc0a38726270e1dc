"""SLD and tabled SLG derivation of goals against terminal sequences.

Both strategies select the leftmost goal item, evaluate ``{...}`` Prolog
goals the moment they become leftmost, and emit a shared AND-OR circuit
whose complete expansions are exactly the successful derivations.
Failing branches contribute nothing.

SLD explores the linear resolution tree; SLG tables each nonterminal
call (keyed by its call variant: the call atom plus the remaining
sequence, canonical up to renaming) and reuses answer sub-circuits, so
repeated calls share structure and node counts never exceed SLD's.

Two exact prunings keep left-recursive grammars finite without hitting
the depth limit: a branch is failed when the minimum terminal yield of
the pending items exceeds the remaining input, and table entries are
never created for calls that cannot fit their minimum yield.  The depth
limit remains as a backstop for cyclic programs; hitting it marks the
forest as truncated rather than failing silently.
"""

from __future__ import annotations

import itertools
import warnings
from fractions import Fraction

from .circuit import Circuit
from .program import (
    FixedWeight,
    NeuralDeclaration,
    Program,
    ProgramError,
    PrologGoal,
    StochasticRule,
    TerminalList,
    TrainableWeight,
)
from .terms import (
    Atom,
    Const,
    Struct,
    Term,
    Var,
    format_atom,
    format_term,
    is_ground,
    is_number,
    rename,
    resolve,
    undo_to,
    unify_env,
    variant_key,
    walk,
    fresh_scope,
)


class ResolutionError(Exception):
    """Unknown predicate, nonground arithmetic, or nonground neural input."""


class MultipleAnswersError(ResolutionError):
    """A {...} goal produced a second distinct answer substitution."""


class DepthLimits:
    """Per-derivation rule-application budget plus an optional cap on
    total circuit nodes.  The default budget is 10*|T| + 50."""

    __slots__ = ("max_rule_applications", "max_nodes")

    def __init__(self, max_rule_applications: int | None = None, max_nodes=None):
        self.max_rule_applications = max_rule_applications
        self.max_nodes = max_nodes

    def budget(self, seq_len: int) -> int:
        if self.max_rule_applications is not None:
            return self.max_rule_applications
        return 10 * seq_len + 50


DEFAULT_LIMITS = DepthLimits()


class Answer:
    """One successful answer: the instantiated goal and consumed sequence,
    plus (under SLG) the OR node summing the derivations producing it."""

    __slots__ = ("goal", "consumed", "node")

    def __init__(self, goal, consumed, node=None):
        self.goal = goal
        self.consumed = consumed
        self.node = node

    def __repr__(self):
        g = (
            format_atom(self.goal)
            if isinstance(self.goal, Atom)
            else ", ".join(repr(i) for i in self.goal)
        )
        return f"<answer {g} / [{','.join(format_term(t) for t in self.consumed)}]>"


class DerivationForest:
    __slots__ = ("strategy", "circuit", "root", "answers", "truncated", "stats", "goal", "sequence")

    def __init__(self, strategy, circuit, root, answers, truncated, stats, goal, sequence):
        self.strategy = strategy
        self.circuit = circuit
        self.root = root
        self.answers = answers
        self.truncated = truncated
        self.stats = stats
        self.goal = goal
        self.sequence = sequence

    @property
    def node_count(self) -> int:
        return len(self.circuit)

    def value(self, env, semiring=None):
        from .circuit import PROB

        return self.circuit.eval(self.root, env, semiring or PROB)

    def best_derivation(self, env):
        return self.circuit.best_trace(self.root, env)

    def __repr__(self):
        return (
            f"<forest {self.strategy}: {len(self.answers)} answers, "
            f"{self.node_count} nodes{', truncated' if self.truncated else ''}>"
        )


class NeuralCheck:
    """Trailing bookkeeping item appended to a neural rule's body: once the
    rest of the body has run, enumerate the output domains and branch."""

    __slots__ = ("decl", "inputs", "outputs", "rule_order", "app_pos")

    def __init__(self, decl, inputs, outputs, rule_order, app_pos):
        self.decl = decl
        self.inputs = inputs
        self.outputs = outputs
        self.rule_order = rule_order
        self.app_pos = app_pos


def _rename_item(item, scope: int):
    if isinstance(item, Atom):
        return rename(item, scope)
    if isinstance(item, TerminalList):
        return TerminalList(rename(item.items, scope))
    return PrologGoal(rename(item.goal, scope))


def _item_yield(item, yields) -> float:
    if isinstance(item, TerminalList):
        return len(item.items)
    if isinstance(item, Atom):
        return yields.get(item.indicator, float("inf"))
    return 0


def _link(items, rest, yields):
    """Prepend items onto a linked list of (item, next, suffix_min_yield)."""
    for item in reversed(items):
        tail_yield = rest[2] if rest is not None else 0
        rest = (item, rest, tail_yield + _item_yield(item, yields))
    return rest


def normalize_goal(goal):
    """Accept an Atom or an iterable of body items; return an item tuple."""
    if isinstance(goal, Atom):
        return (goal,)
    items = tuple(goal)
    for it in items:
        if not isinstance(it, (Atom, TerminalList, PrologGoal)):
            raise TypeError(f"not a goal item: {it!r}")
    return items


def _resolve_items(items, env: dict):
    out = []
    for it in items:
        if isinstance(it, Atom):
            out.append(resolve(it, env))
        elif isinstance(it, TerminalList):
            out.append(TerminalList(resolve(it.items, env)))
        else:
            out.append(PrologGoal(resolve(it.goal, env)))
    return tuple(out)


def variables_sequence(n: int, prefix: str = "_Seq") -> tuple:
    """A sequence of n fresh variables, for unknown-terminal queries."""
    scope = fresh_scope()
    return tuple(Var(f"{prefix}{i}", scope) for i in range(n))


# ---------------------------------------------------------------------------
# Prolog goal evaluation for {...} escapes
# ---------------------------------------------------------------------------

_COMPARISONS = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "=<": lambda a, b: a <= b,
    "=:=": lambda a, b: a == b,
    "=\\=": lambda a, b: a != b,
}


def eval_arith(t: Term, env: dict):
    """Exact arithmetic: integers stay integers, '/' yields rationals."""
    t = walk(t, env)
    if isinstance(t, Const):
        if is_number(t.value):
            return t.value
        raise ResolutionError(f"not a number: {format_term(t)}")
    if isinstance(t, Var):
        raise ResolutionError("arithmetic on nonground term")
    if isinstance(t, Struct) and len(t.args) == 2:
        a = eval_arith(t.args[0], env)
        b = eval_arith(t.args[1], env)
        op = t.functor
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise ResolutionError("division by zero")
            return Fraction(a, b) if isinstance(a, int) and isinstance(b, int) else Fraction(a) / b
        if op == "//":
            if b == 0:
                raise ResolutionError("division by zero")
            return a // b
        if op == "mod":
            if b == 0:
                raise ResolutionError("division by zero")
            return a % b
        if op == "**":
            if isinstance(b, int) and b < 0:
                return Fraction(1) / (Fraction(a) ** (-b))
            return a ** b
    if isinstance(t, Struct) and len(t.args) == 1 and t.functor == "-":
        return -eval_arith(t.args[0], env)
    raise ResolutionError(f"unknown arithmetic expression: {format_term(t)}")


class _GoalSolver:
    """Depth-first evaluation of a {...} goal against program clauses and
    builtins, collecting up to two distinct answer substitutions."""

    def __init__(self, program: Program, env: dict, trail: list, occurs_check: bool):
        self.program = program
        self.env = env
        self.trail = trail
        self.occ = occurs_check

    def solve(self, goal: Term, on_success):
        env, trail = self.env, self.trail
        goal = walk(goal, env)
        if isinstance(goal, Const):
            if goal.value == "true":
                on_success()
                return
            if goal.value == "fail" or goal.value == "false":
                return
            self._call(goal.value, (), on_success)
            return
        if not isinstance(goal, Struct):
            raise ResolutionError(f"malformed goal: {format_term(goal)}")
        f, args = goal.functor, goal.args
        if f == "," and len(args) == 2:
            self.solve(args[0], lambda: self.solve(args[1], on_success))
            return
        if f == ";" and len(args) == 2:
            mark = len(trail)
            self.solve(args[0], on_success)
            undo_to(mark, env, trail)
            self.solve(args[1], on_success)
            undo_to(mark, env, trail)
            return
        if f == "is" and len(args) == 2:
            value = Const(eval_arith(args[1], env))
            mark = len(trail)
            if unify_env(args[0], value, env, trail, self.occ):
                on_success()
            undo_to(mark, env, trail)
            return
        if f in _COMPARISONS and len(args) == 2:
            a = eval_arith(args[0], env)
            b = eval_arith(args[1], env)
            if _COMPARISONS[f](a, b):
                on_success()
            return
        if f == "=" and len(args) == 2:
            mark = len(trail)
            if unify_env(args[0], args[1], env, trail, self.occ):
                on_success()
            undo_to(mark, env, trail)
            return
        if f == "\\=" and len(args) == 2:
            mark = len(trail)
            ok = unify_env(args[0], args[1], env, trail, self.occ)
            undo_to(mark, env, trail)
            if not ok:
                on_success()
            return
        if f in ("member", "domain") and len(args) == 2:
            item, lst = args
            lst = walk(lst, env)
            while True:
                lst = walk(lst, env)
                if isinstance(lst, Struct) and lst.functor == "cons" and len(lst.args) == 2:
                    mark = len(trail)
                    if unify_env(item, lst.args[0], env, trail, self.occ):
                        on_success()
                    undo_to(mark, env, trail)
                    lst = lst.args[1]
                else:
                    return
        self._call(f, args, on_success)

    def _call(self, pred: str, args, on_success):
        env, trail = self.env, self.trail
        clauses = self.program.clauses_for((pred, len(args)))
        if not clauses:
            raise ResolutionError(f"unknown predicate {pred}/{len(args)} in {{...}} goal")
        caller = Atom(pred, args)
        for clause in clauses:
            scope = fresh_scope()
            head = rename(clause.head, scope)
            mark = len(trail)
            if unify_env(caller, head, env, trail, self.occ):
                if clause.body is None:
                    on_success()
                else:
                    self.solve(rename(clause.body, scope), on_success)
            undo_to(mark, env, trail)


class _TooMany(Exception):
    pass


def solve_prolog_in_env(
    program: Program,
    goal: Term,
    env: dict,
    trail: list,
    *,
    occurs_check: bool = True,
    strict: bool = True,
) -> bool:
    """Evaluate a {...} goal in the live environment.  On success the first
    answer's bindings are left on the trail and True is returned.  A second
    distinct answer substitution raises (strict) or warns."""
    free = sorted(
        {v for v in _goal_vars(goal, env)},
        key=lambda v: (v.name, v.scope),
    )
    probe = tuple(free)
    solutions: list = []
    solver = _GoalSolver(program, env, trail, occurs_check)

    def on_success():
        inst = resolve(probe, env)
        if inst not in solutions:
            solutions.append(inst)
            if len(solutions) > 1:
                raise _TooMany()

    mark = len(trail)
    try:
        solver.solve(goal, on_success)
    except _TooMany:
        undo_to(mark, env, trail)
        msg = (
            f"{{...}} goal {format_term(resolve(goal, env))} has more than one "
            f"answer substitution; the semantics assume at most one"
        )
        if strict:
            raise MultipleAnswersError(msg) from None
        warnings.warn(msg, stacklevel=2)
    else:
        undo_to(mark, env, trail)
    if not solutions:
        return False
    ok = True
    for v, t in zip(probe, solutions[0]):
        ok = unify_env(v, t, env, trail, occurs_check) and ok
    if not ok:
        raise ResolutionError("internal: failed to replay goal answer")
    return True


def _goal_vars(goal: Term, env: dict):
    goal = walk(goal, env)
    if isinstance(goal, Var):
        yield goal
    elif isinstance(goal, Struct):
        for a in goal.args:
            yield from _goal_vars(a, env)


def solve_prolog_goal(
    program: Program,
    goal: Term,
    theta_in=None,
    *,
    strict: bool = True,
    occurs_check: bool = True,
):
    """Public surface: evaluate a conjunction under an input substitution.
    Returns the first answer Substitution or None."""
    from .terms import Substitution

    env: dict = {}
    if theta_in is not None:
        env.update(theta_in.bindings if isinstance(theta_in, Substitution) else theta_in)
    trail: list = []
    if not solve_prolog_in_env(
        program, goal, env, trail, occurs_check=occurs_check, strict=strict
    ):
        return None
    return Substitution(env)


class _EngineBase:
    def __init__(self, program: Program, goal, sequence, limits: DepthLimits,
                 occurs_check: bool, strict_goals: bool):
        self.program = program
        self.goal_items = normalize_goal(goal)
        self.seq = tuple(sequence)
        self.limits = limits
        self.budget = limits.budget(len(self.seq))
        self.occ = occurs_check
        self.strict_goals = strict_goals
        self.env: dict = {}
        self.trail: list = []
        self.circuit = Circuit()
        self.truncated = False
        self.seq_ground = is_ground(self.seq)
        self.yields = program.min_yield
        self.rule_applications = 0
        # per-rule precomputation: weight leaf is created lazily per engine
        self._leaf_cache: dict = {}
        self._slot: dict = {}
        for group in program.rule_groups.values():
            for i, r in enumerate(group):
                self._slot[id(r)] = i

    def rule_leaf(self, rule: StochasticRule):
        """Circuit leaf for the rule's weight; -1 when the rule contributes
        no multiplicative factor (weightless, weight exactly 1, or a neural
        rule whose leaf comes from its trailing neural call)."""
        key = id(rule)
        leaf = self._leaf_cache.get(key)
        if leaf is None:
            w = rule.weight
            if w is None or isinstance(w, NeuralDeclaration):
                leaf = -1
            elif isinstance(w, FixedWeight):
                leaf = -1 if w.value == 1 else self.circuit.const_leaf(w.value)
            else:
                leaf = self.circuit.weight_leaf(rule.group, self._slot[id(rule)])
            self._leaf_cache[key] = leaf
        return leaf

    def neural_domains(self, decl: NeuralDeclaration):
        return [self.program.domain(d) for d in decl.domain_preds]

    def make_neural_check(self, rule, decl, scope, app_pos):
        return NeuralCheck(
            decl,
            rename(decl.input_vars, scope),
            rename(decl.output_vars, scope),
            rule.order,
            app_pos,
        )

    def neural_branches(self, nc: NeuralCheck, continue_fn):
        """Enumerate output domains in declaration order (row-major for
        multiple outputs); yields (leaf_node, child_result) pairs."""
        env, trail = self.env, self.trail
        inputs = resolve(nc.inputs, env)
        if not is_ground(inputs):
            raise ResolutionError(
                f"nonground neural input for model {nc.decl.model_name}: "
                f"({','.join(format_term(t) for t in inputs)})"
            )
        domains = self.neural_domains(nc.decl)
        out = []
        for idx, combo in enumerate(itertools.product(*domains)):
            mark = len(trail)
            ok = True
            for var, val in zip(nc.outputs, combo):
                if not unify_env(var, val, env, trail, self.occ):
                    ok = False
                    break
            if ok:
                leaf = self.circuit.neural_leaf(nc.decl.model_name, inputs, combo, idx)
                res = continue_fn()
                if res is not None:
                    out.append((leaf, res, idx))
            undo_to(mark, env, trail)
        return out

    def solve_goal_item(self, goal: Term) -> bool:
        return solve_prolog_in_env(
            self.program,
            goal,
            self.env,
            self.trail,
            occurs_check=self.occ,
            strict=self.strict_goals,
        )

    def check_node_budget(self):
        if self.limits.max_nodes is not None and len(self.circuit) > self.limits.max_nodes:
            raise ResolutionError(
                f"circuit exceeded max_nodes={self.limits.max_nodes}"
            )


# ---------------------------------------------------------------------------
# SLD: the linear resolution tree
# ---------------------------------------------------------------------------

class _SLDEngine(_EngineBase):
    def run(self) -> DerivationForest:
        items = _link(self.goal_items, None, self.yields)
        self.answers: dict = {}
        root = self._state(items, 0, 0)
        if root is None:
            root = self.circuit.zero()
        circuit, id_map = self.circuit.simplify([root])
        answers = list(self.answers.values())
        stats = {
            "strategy": "sld",
            "rule_applications": self.rule_applications,
            "nodes": len(circuit),
        }
        return DerivationForest(
            "sld", circuit, id_map[root], answers, self.truncated, stats,
            self.goal_items, self.seq,
        )

    def _state(self, items, pos: int, depth: int):
        """Circuit node for this resolution state, or None on failure.
        Restores all bindings it makes before returning."""
        env, trail = self.env, self.trail
        seq = self.seq
        n = len(seq)
        mark = len(trail)
        # deterministic steps: terminals, {...} goals
        while items is not None:
            if pos + items[2] > n:
                undo_to(mark, env, trail)
                return None
            head = items[0]
            if isinstance(head, TerminalList):
                for t in head.items:
                    if pos >= n or not unify_env(t, seq[pos], env, trail, self.occ):
                        undo_to(mark, env, trail)
                        return None
                    pos += 1
                items = items[1]
            elif isinstance(head, PrologGoal):
                if not self.solve_goal_item(head.goal):
                    undo_to(mark, env, trail)
                    return None
                items = items[1]
            else:
                break
        if items is None:
            if pos != n:
                undo_to(mark, env, trail)
                return None
            goal_inst = _resolve_items(self.goal_items, env)
            seq_inst = resolve(seq, env)
            key = variant_key((goal_inst, seq_inst))
            if key not in self.answers:
                if len(goal_inst) == 1 and isinstance(goal_inst[0], Atom):
                    goal_inst = goal_inst[0]
                self.answers[key] = Answer(goal_inst, seq_inst, None)
            undo_to(mark, env, trail)
            return self.circuit.one()
        head = items[0]
        if isinstance(head, NeuralCheck):
            rest = items[1]
            branches = [
                self.circuit.add_and(
                    [leaf, child], prov=(head.rule_order, head.app_pos)
                )
                for leaf, child, _ in self.neural_branches(
                    head, lambda: self._state(rest, pos, depth)
                )
            ]
            undo_to(mark, env, trail)
            self.check_node_budget()
            return self.circuit.add_or(branches) if branches else None
        # nonterminal: branch over matching rules in source order
        branches = []
        rest = items[1]
        for rule in self.program.rules_for(head.indicator):
            if depth + 1 > self.budget:
                self.truncated = True
                break
            scope = fresh_scope()
            rhead = rename(rule.head, scope)
            m2 = len(trail)
            if unify_env(head, rhead, env, trail, self.occ):
                self.rule_applications += 1
                body = [_rename_item(it, scope) for it in rule.body]
                new_items = rest
                if isinstance(rule.weight, NeuralDeclaration):
                    nc = self.make_neural_check(rule, rule.weight, scope, pos)
                    new_items = (nc, new_items, new_items[2] if new_items else 0)
                new_items = _link(body, new_items, self.yields)
                child = self._state(new_items, pos, depth + 1)
                if child is not None:
                    leaf = self.rule_leaf(rule)
                    parts = [child] if leaf == -1 else [leaf, child]
                    branches.append(
                        self.circuit.add_and(parts, prov=(rule.order, pos))
                    )
            undo_to(m2, env, trail)
        undo_to(mark, env, trail)
        self.check_node_budget()
        if not branches:
            return None
        return self.circuit.add_or(branches)


# ---------------------------------------------------------------------------
# SLG: answer tabling with a fixpoint over call variants
# ---------------------------------------------------------------------------

class _AnswerInfo:
    __slots__ = ("inst_atom", "inst_prefix", "k", "node", "min_depth", "ground")

    def __init__(self, inst_atom, inst_prefix, k, node, min_depth):
        self.inst_atom = inst_atom
        self.inst_prefix = inst_prefix
        self.k = k
        self.node = node
        self.min_depth = min_depth
        self.ground = is_ground(inst_atom) and is_ground(inst_prefix)


class _Entry:
    __slots__ = ("call", "window", "pos", "answers", "key")

    def __init__(self, call: Atom, window, pos, key):
        self.call = call
        self.window = window
        self.pos = pos  # absolute position when the sequence is ground
        self.answers: dict = {}
        self.key = key


class _SLGEngine(_EngineBase):
    def run(self) -> DerivationForest:
        if getattr(self.program, "epsilon_cyclic", False):
            raise ProgramError(
                "program has a cycle of non-consuming rules; its derivation "
                "forest is infinite under tabling -- use the SLD strategy "
                "with a depth limit"
            )
        self.entries: dict = {}
        self.root = _Entry(None, self.seq, 0, None)
        self.changed = True
        rounds = 0
        while self.changed:
            self.changed = False
            rounds += 1
            self._run_root()
            for entry in list(self.entries.values()):
                self._run_entry(entry)
        root_answers = list(self.root.answers.values())
        root = (
            self.circuit.add_or([info.node for info in root_answers])
            if root_answers
            else self.circuit.zero()
        )
        frozen, id_map = self.circuit.simplify(
            [root] + [info.node for info in root_answers]
        )
        answers = []
        for info in root_answers:
            goal_inst = info.inst_atom
            if len(goal_inst) == 1 and isinstance(goal_inst[0], Atom):
                goal_inst = goal_inst[0]
            answers.append(Answer(goal_inst, info.inst_prefix, id_map[info.node]))
        stats = {
            "strategy": "slg",
            "entries": len(self.entries),
            "rounds": rounds,
            "rule_applications": self.rule_applications,
            "nodes": len(frozen),
        }
        return DerivationForest(
            "slg", frozen, id_map[root], answers, self.truncated, stats,
            self.goal_items, self.seq,
        )

    # -- table access -------------------------------------------------------
    def _get_entry(self, atom: Atom, window_rest, abs_pos: int) -> _Entry:
        env = self.env
        call = resolve(atom, env)
        if self.seq_ground:
            window = window_rest
            key = (variant_key(call), abs_pos)
        else:
            window = resolve(window_rest, env)
            key = variant_key((call, window))
        entry = self.entries.get(key)
        if entry is None:
            entry = _Entry(call, window, abs_pos, key)
            self.entries[key] = entry
            self._run_entry(entry)
        return entry

    # -- executing rule bodies against the table ------------------------------
    def _run_root(self):
        items = _link(self.goal_items, None, self.yields)
        n = len(self.seq)

        def complete(offset, children, depth_sum):
            if offset != n:
                return
            if depth_sum > self.budget:
                self.truncated = True
                return
            goal_inst = _resolve_items(self.goal_items, self.env)
            seq_inst = resolve(self.seq, self.env)
            self._record(self.root, goal_inst, seq_inst, offset, list(children),
                         depth_sum, prov=None)

        self._items_window(self.root, items, 0, (), 0, complete)

    def _run_entry(self, entry: _Entry):
        env, trail = self.env, self.trail
        if self.yields.get(entry.call.indicator, 0) > len(entry.window):
            return
        for rule in self.program.rules_for(entry.call.indicator):
            scope = fresh_scope()
            rhead = rename(rule.head, scope)
            mark = len(trail)
            if unify_env(entry.call, rhead, env, trail, self.occ):
                self.rule_applications += 1
                body = [_rename_item(it, scope) for it in rule.body]
                nc_items = None
                if isinstance(rule.weight, NeuralDeclaration):
                    nc = self.make_neural_check(rule, rule.weight, scope, entry.pos)
                    nc_items = (nc, None, 0)
                items = _link(body, nc_items, self.yields)
                leaf = self.rule_leaf(rule)

                def complete(offset, children, depth_sum, rule=rule, leaf=leaf):
                    depth = 1 + depth_sum
                    if depth > self.budget:
                        self.truncated = True
                        return
                    inst_call = resolve(entry.call, env)
                    inst_prefix = (
                        entry.window[:offset]
                        if self.seq_ground
                        else resolve(entry.window[:offset], env)
                    )
                    parts = list(children) if leaf == -1 else [leaf] + list(children)
                    self._record(
                        entry, inst_call, inst_prefix, offset, parts, depth,
                        prov=(rule.order, entry.pos),
                    )

                self._items_window(entry, items, 0, (), 0, complete)
            undo_to(mark, env, trail)
        self.check_node_budget()

    def _items_window(self, entry, items, offset, children, depth_sum, complete):
        """Run rule-body items left to right against the entry's window,
        consulting the table for nonterminal items.  ``children`` collects
        the circuit nodes of sub-answers and neural leaves in body order."""
        env, trail = self.env, self.trail
        window = entry.window
        n = len(window)
        mark = len(trail)
        while items is not None:
            if offset + items[2] > n:
                undo_to(mark, env, trail)
                return
            head = items[0]
            if isinstance(head, TerminalList):
                for t in head.items:
                    if offset >= n or not unify_env(t, window[offset], env, trail, self.occ):
                        undo_to(mark, env, trail)
                        return
                    offset += 1
                items = items[1]
            elif isinstance(head, PrologGoal):
                if not self.solve_goal_item(head.goal):
                    undo_to(mark, env, trail)
                    return
                items = items[1]
            elif isinstance(head, NeuralCheck):
                rest = items[1]
                inputs = resolve(head.inputs, env)
                if not is_ground(inputs):
                    undo_to(mark, env, trail)
                    raise ResolutionError(
                        f"nonground neural input for model {head.decl.model_name}"
                    )
                domains = self.neural_domains(head.decl)
                for idx, combo in enumerate(itertools.product(*domains)):
                    m2 = len(trail)
                    ok = True
                    for var, val in zip(head.outputs, combo):
                        if not unify_env(var, val, env, trail, self.occ):
                            ok = False
                            break
                    if ok:
                        leaf = self.circuit.neural_leaf(
                            head.decl.model_name, inputs, combo, idx
                        )
                        self._items_window(
                            entry, rest, offset, children + (leaf,),
                            depth_sum, complete,
                        )
                    undo_to(m2, env, trail)
                undo_to(mark, env, trail)
                return
            else:
                rest = items[1]
                required = rest[2] if rest is not None else 0
                sub_entry = self._get_entry(
                    head, window[offset:], entry.pos + offset
                )
                self._consume_answers(
                    entry, sub_entry, resolve(head, env), offset, required, rest,
                    children, depth_sum, complete,
                )
                undo_to(mark, env, trail)
                return
        complete(offset, children, depth_sum)
        undo_to(mark, env, trail)

    def _consume_answers(self, entry, sub_entry, call_atom, offset, required,
                         rest, children, depth_sum, complete):
        env, trail = self.env, self.trail
        window = entry.window
        limit = len(window) - offset - required
        for info in list(sub_entry.answers.values()):
            if info.k > limit:
                continue
            mark = len(trail)
            if info.ground and self.seq_ground:
                ok = unify_env(call_atom, info.inst_atom, env, trail, self.occ)
            else:
                scope = fresh_scope()
                inst_atom = rename(info.inst_atom, scope)
                inst_prefix = rename(info.inst_prefix, scope)
                ok = unify_env(call_atom, inst_atom, env, trail, self.occ)
                if ok:
                    for i in range(info.k):
                        if not unify_env(
                            window[offset + i], inst_prefix[i], env, trail, self.occ
                        ):
                            ok = False
                            break
            if ok:
                self._items_window(
                    entry,
                    rest,
                    offset + info.k,
                    children + (info.node,),
                    depth_sum + info.min_depth,
                    complete,
                )
            undo_to(mark, env, trail)

    # -- answer recording ------------------------------------------------------
    def _record(self, entry, inst_call, inst_prefix, k, parts, depth, prov):
        akey = (variant_key((inst_call, inst_prefix)), k)
        info = entry.answers.get(akey)
        if info is None:
            node = self.circuit.new_or()
            info = _AnswerInfo(inst_call, inst_prefix, k, node, depth)
            entry.answers[akey] = info
            self.changed = True
        elif depth < info.min_depth:
            info.min_depth = depth
            self.changed = True
        dedup = tuple(parts)
        if not self.circuit.or_has(info.node, dedup):
            and_node = self.circuit.add_and(parts, prov=prov)
            self.circuit.or_add(info.node, and_node, dedup)
            self.changed = True


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def derive_sld(
    program: Program,
    goal,
    sequence,
    limits: DepthLimits = DEFAULT_LIMITS,
    *,
    occurs_check: bool = True,
    strict_goals: bool = True,
) -> DerivationForest:
    return _SLDEngine(
        program, goal, sequence, limits, occurs_check, strict_goals
    ).run()


def derive_slg(
    program: Program,
    goal,
    sequence,
    limits: DepthLimits = DEFAULT_LIMITS,
    *,
    occurs_check: bool = True,
    strict_goals: bool = True,
) -> DerivationForest:
    return _SLGEngine(
        program, goal, sequence, limits, occurs_check, strict_goals
    ).run()


def derive(
    program: Program,
    goal,
    sequence,
    limits: DepthLimits = DEFAULT_LIMITS,
    *,
    strategy: str = "slg",
    occurs_check: bool = True,
    strict_goals: bool = True,
) -> DerivationForest:
    if strategy == "slg":
        fn = derive_slg
    elif strategy == "sld":
        fn = derive_sld
    else:
        raise ValueError(f"unknown strategy {strategy!r} (expected sld or slg)")
    return fn(
        program, goal, sequence, limits,
        occurs_check=occurs_check, strict_goals=strict_goals,
    )
