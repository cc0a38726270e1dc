"""Shared AND-OR circuits and their semiring evaluation.

AND nodes multiply, OR nodes sum (or maximize under the Viterbi
semiring).  Leaves are rule-weight references, neural-call results, or
the constants one/zero.  Leaves are hash-consed so a probability used k
times is one node whose adjoint accumulates k path contributions.

Construction order guarantees children precede parents after
``gc_from`` renumbers reachable nodes in topological order, so
evaluation is a single linear scan.
"""

from __future__ import annotations

import math
from fractions import Fraction

AND = 0
OR = 1
LEAF = 2
ONE = 3
ZERO = 4

_KIND_NAMES = {AND: "and", OR: "or", LEAF: "leaf", ONE: "one", ZERO: "zero"}


class Semiring:
    """A (plus, times) algebra with identities; ``from_leaf`` maps a raw
    probability into the carrier."""

    __slots__ = ("name", "zero", "one", "plus", "times", "from_leaf", "viterbi")

    def __init__(self, name, zero, one, plus, times, from_leaf, viterbi=False):
        self.name = name
        self.zero = zero
        self.one = one
        self.plus = plus
        self.times = times
        self.from_leaf = from_leaf
        self.viterbi = viterbi

    def __repr__(self):
        return f"<semiring {self.name}>"


def _logaddexp(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def _loglead(v):
    v = float(v)
    return math.log(v) if v > 0.0 else -math.inf


# (+, x): exact when all leaf values are exact (Fraction), float otherwise.
PROB = Semiring("prob", 0, 1, lambda a, b: a + b, lambda a, b: a * b, lambda v: v)
# (+, x) in log space: log-sum-exp at OR nodes.
LOG_PROB = Semiring("logprob", -math.inf, 0.0, _logaddexp, lambda a, b: a + b, _loglead)
# (max, x): most probable derivation value.
VITERBI = Semiring("viterbi", 0, 1, max, lambda a, b: a * b, lambda v: v, viterbi=True)


class Circuit:
    def __init__(self):
        self.kinds: list[int] = []
        self.children: list[tuple] = []
        self.payloads: list = []
        self.provs: list = []
        self._leaf_ids: dict = {}
        self._one: int | None = None
        self._zero: int | None = None
        self._or_keys: dict[int, set] = {}

    def __len__(self):
        return len(self.kinds)

    # -- node constructors --------------------------------------------------
    def _new(self, kind, children=(), payload=None, prov=None) -> int:
        nid = len(self.kinds)
        self.kinds.append(kind)
        self.children.append(children)
        self.payloads.append(payload)
        self.provs.append(prov)
        return nid

    def one(self) -> int:
        if self._one is None:
            self._one = self._new(ONE)
        return self._one

    def zero(self) -> int:
        if self._zero is None:
            self._zero = self._new(ZERO)
        return self._zero

    def leaf(self, payload) -> int:
        nid = self._leaf_ids.get(payload)
        if nid is None:
            nid = self._new(LEAF, payload=payload)
            self._leaf_ids[payload] = nid
        return nid

    def const_leaf(self, value) -> int:
        return self.leaf(("const", value))

    def weight_leaf(self, group: str, slot: int) -> int:
        return self.leaf(("w", group, slot))

    def neural_leaf(self, model: str, inputs, outputs, flat_index: int) -> int:
        return self.leaf(("nn", model, tuple(inputs), tuple(outputs), flat_index))

    def add_and(self, parts, prov=None) -> int:
        """AND of the given nodes; drops ones, absorbs zeros, collapses
        singletons.  An empty product is the constant one."""
        kids = []
        for c in parts:
            k = self.kinds[c]
            if k == ONE:
                continue
            if k == ZERO:
                return self.zero()
            kids.append(c)
        if not kids:
            return self.one()
        if len(kids) == 1:
            return kids[0]
        return self._new(AND, tuple(kids), prov=prov)

    def add_or(self, parts, prov=None) -> int:
        kids = [c for c in parts if self.kinds[c] != ZERO]
        if not kids:
            return self.zero()
        if len(kids) == 1:
            return kids[0]
        return self._new(OR, tuple(kids), prov=prov)

    def new_or(self, prov=None) -> int:
        """A mutable OR whose children are appended during tabling."""
        nid = self._new(OR, [], prov=prov)
        self._or_keys[nid] = set()
        return nid

    def or_has(self, or_id: int, key) -> bool:
        return key in self._or_keys[or_id]

    def or_add(self, or_id: int, child: int, key) -> bool:
        """Append a distinct child (dedup key is structural); returns
        whether anything changed."""
        keys = self._or_keys[or_id]
        if key in keys:
            return False
        keys.add(key)
        self.children[or_id].append(child)
        return True

    def or_size(self, or_id: int) -> int:
        return len(self.children[or_id])

    # -- compaction ----------------------------------------------------------
    def _rebuild(self, roots, keep):
        """One simplification pass: garbage-collect from ``roots``, collapse
        single-child AND/OR nodes, and splice an AND whose sole parent is
        another AND into that parent.  Value- and order-preserving.
        Spliced nodes are never materialized, so every productive rewrite
        strictly shrinks the circuit."""
        counts: dict[int, int] = {}
        parent_kind: dict[int, int] = {}
        stack = list(roots)
        seen = set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            for c in self.children[node]:
                counts[c] = counts.get(c, 0) + 1
                parent_kind[c] = self.kinds[node]
                if c not in seen:
                    stack.append(c)

        def splices(c):
            return (
                self.kinds[c] == AND
                and counts.get(c, 0) == 1
                and parent_kind.get(c) == AND
                and c not in keep
            )

        out = Circuit()
        id_map: dict[int, int] = {}
        spliced_parts: dict[int, list] = {}

        def mapped_parts(kids):
            parts = []
            for c in kids:
                if c in spliced_parts:
                    parts.extend(spliced_parts[c])
                else:
                    parts.append(id_map[c])
            return parts

        for root in roots:
            work = [(root, False)]
            while work:
                node, expanded = work.pop()
                if node in id_map or node in spliced_parts:
                    continue
                kids = self.children[node]
                if not expanded:
                    work.append((node, True))
                    for c in kids:
                        if c not in id_map and c not in spliced_parts:
                            work.append((c, False))
                    continue
                kind = self.kinds[node]
                if kind == LEAF:
                    id_map[node] = out.leaf(self.payloads[node])
                elif kind == ONE:
                    id_map[node] = out.one()
                elif kind == ZERO:
                    id_map[node] = out.zero()
                elif kind == AND:
                    parts = mapped_parts(kids)
                    if splices(node):
                        spliced_parts[node] = parts
                    else:
                        id_map[node] = out.add_and(parts, prov=self.provs[node])
                else:
                    id_map[node] = out.add_or(
                        mapped_parts(kids), prov=self.provs[node]
                    )
        return out, id_map

    def simplify(self, roots):
        """Iterate rebuild passes to a fixpoint (collapses expose new splice
        sites).  Returns (circuit, root_map) with ids in topological order."""
        circuit, id_map = self._rebuild(roots, set(roots))
        total = {r: id_map[r] for r in roots}
        while True:
            mapped_roots = _unique(total[r] for r in roots)
            nxt, m2 = circuit._rebuild(mapped_roots, set(mapped_roots))
            if len(nxt) == len(circuit):
                return circuit, total
            circuit = nxt
            total = {r: m2[total[r]] for r in roots}

    # -- evaluation -----------------------------------------------------------
    def topo_order(self, root: int) -> list[int]:
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node in seen:
                continue
            seen.add(node)
            stack.append((node, True))
            for c in self.children[node]:
                if c not in seen:
                    stack.append((c, False))
        return order

    def eval_nodes(self, env, semiring: Semiring, order=None):
        """Bottom-up evaluation; returns a dense list indexed by node id.
        ``env`` maps a leaf payload to its probability.  Every node in
        ``order`` (default: all nodes, which are in topological order once
        frozen) is evaluated exactly once."""
        kinds = self.kinds
        children = self.children
        payloads = self.payloads
        values = [None] * len(kinds)
        plus = semiring.plus
        times = semiring.times
        from_leaf = semiring.from_leaf
        ids = order if order is not None else range(len(kinds))
        for nid in ids:
            k = kinds[nid]
            if k == LEAF:
                values[nid] = from_leaf(env(payloads[nid]))
            elif k == AND:
                acc = semiring.one
                for c in children[nid]:
                    acc = times(acc, values[c])
                values[nid] = acc
            elif k == OR:
                acc = semiring.zero
                for c in children[nid]:
                    acc = plus(acc, values[c])
                values[nid] = acc
            elif k == ONE:
                values[nid] = semiring.one
            else:
                values[nid] = semiring.zero
        return values

    def eval(self, root: int, env, semiring: Semiring = PROB):
        order = self.topo_order(root)
        return self.eval_nodes(env, semiring, order)[root]

    def backward(self, values, root: int) -> list:
        """Reverse pass over (+, x) forward values: adjoint[n] is the
        partial derivative of the root value w.r.t. node n, accumulated
        over all paths in one reverse topological sweep."""
        kinds = self.kinds
        children = self.children
        adj = [0] * len(kinds)
        adj[root] = 1
        for nid in range(len(kinds) - 1, -1, -1):
            a = adj[nid]
            if a == 0:
                continue
            k = kinds[nid]
            if k == OR:
                for c in children[nid]:
                    adj[c] += a
            elif k == AND:
                kids = children[nid]
                n = len(kids)
                if n == 1:
                    adj[kids[0]] += a
                    continue
                prefix = [1] * (n + 1)
                for i in range(n):
                    prefix[i + 1] = prefix[i] * values[kids[i]]
                suffix = 1
                for i in range(n - 1, -1, -1):
                    adj[kids[i]] += a * prefix[i] * suffix
                    suffix *= values[kids[i]]
        return adj

    def leaf_adjoints(self, adj) -> dict:
        return {
            self.payloads[nid]: adj[nid]
            for nid, kind in enumerate(self.kinds)
            if kind == LEAF and adj[nid] != 0
        }

    # -- Viterbi ---------------------------------------------------------------
    def max_eval(self, env, order=None):
        """(max, x) values plus, for every OR node, the argmax child index
        (ties broken by lowest index, i.e. source order)."""
        kinds = self.kinds
        children = self.children
        payloads = self.payloads
        values = [None] * len(kinds)
        choice = [0] * len(kinds)
        ids = order if order is not None else range(len(kinds))
        for nid in ids:
            k = kinds[nid]
            if k == LEAF:
                values[nid] = env(payloads[nid])
            elif k == AND:
                acc = 1
                for c in children[nid]:
                    acc = acc * values[c]
                values[nid] = acc
            elif k == OR:
                best = None
                best_i = 0
                for i, c in enumerate(children[nid]):
                    v = values[c]
                    if best is None or v > best:
                        best = v
                        best_i = i
                values[nid] = best if best is not None else 0
                choice[nid] = best_i
            elif k == ONE:
                values[nid] = 1
            else:
                values[nid] = 0
        return values, choice

    def best_trace(self, root: int, env):
        """Most probable derivation: its (max, x) value and the list of
        leaf choices along it, in leftmost-derivation order (terminals are
        consumed left to right, so token-consuming choices appear in input
        order)."""
        order = self.topo_order(root)
        values, choice = self.max_eval(env, order)
        steps = []
        stack = [root]
        while stack:
            node = stack.pop()
            kind = self.kinds[node]
            if kind == LEAF:
                steps.append(TraceStep(self.payloads[node], values[node]))
            elif kind == OR:
                stack.append(self.children[node][choice[node]])
            elif kind == AND:
                for c in reversed(self.children[node]):
                    stack.append(c)
        return values[root], steps

    # -- export -----------------------------------------------------------------
    def to_dot(self, root: int, env=None, name="circuit") -> str:
        order = self.topo_order(root)
        values = self.eval_nodes(env, PROB, order) if env is not None else None
        lines = [f"digraph {name} {{", "  rankdir=BT;"]
        for nid in order:
            kind = self.kinds[nid]
            if kind == LEAF:
                payload = self.payloads[nid]
                if payload[0] == "const":
                    label = f"{float(payload[1]):g}"
                elif payload[0] == "w":
                    label = f"p[{payload[1]}#{payload[2]}]"
                else:
                    label = f"nn:{payload[1]}({_short_terms(payload[2])})={_short_terms(payload[3])}"
                shape = "box"
            elif kind == AND:
                label = "x"
                shape = "circle"
            elif kind == OR:
                label = "+"
                shape = "circle"
            else:
                label = _KIND_NAMES[kind]
                shape = "box"
            if values is not None:
                label += f"\\n{float(values[nid]):.4g}"
            lines.append(f'  n{nid} [label="{label}", shape={shape}];')
            for c in self.children[nid]:
                lines.append(f"  n{c} -> n{nid};")
        lines.append("}")
        return "\n".join(lines)


class TraceStep:
    """One probabilistic choice in a derivation: a rule-weight leaf or a
    neural-call output, with its value."""

    __slots__ = ("payload", "value")

    def __init__(self, payload, value):
        self.payload = payload
        self.value = value

    @property
    def kind(self):
        return self.payload[0]

    @property
    def model(self):
        return self.payload[1] if self.payload[0] == "nn" else None

    @property
    def outputs(self):
        return self.payload[3] if self.payload[0] == "nn" else None

    def __repr__(self):
        if self.payload[0] == "const":
            return f"p={float(self.value):g}"
        if self.payload[0] == "w":
            return f"p[{self.payload[1]}#{self.payload[2]}]={float(self.value):g}"
        return (
            f"nn:{self.payload[1]}({_short_terms(self.payload[2])})"
            f"->{_short_terms(self.payload[3])}={float(self.value):g}"
        )


def _short_terms(ts) -> str:
    return ",".join(repr(t) for t in ts)


def _unique(it):
    seen = set()
    out = []
    for x in it:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def trace_product(steps) -> float:
    out = 1
    for s in steps:
        out = out * s.value
    return out
