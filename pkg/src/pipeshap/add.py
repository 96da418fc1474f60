"""Additive decision diagrams over (alpha, gamma, gamma') value triples.

A diagram is ordered and full: every root-to-sink path visits every variable
of its order exactly once, in order. Each edge carries an increment and a
path evaluates to the sum of its increments. The invalid value absorbs
everything it is added to.

alpha counts variables set to 1, gamma and gamma' are label tallies. Values
are bounded to a box (``ValueSpace``): alpha in [0, alpha_max] and tallies
with component sum <= k. Sums that leave the box are invalid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import AddError
from .provenance import Assignment, VariableSet

SINK = -1


class _Invalid:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __repr__(self):
        return "INVALID"

    def __reduce__(self):
        return (_Invalid, ())


INVALID = _Invalid()


@dataclass(frozen=True, order=True)
class ValueTriple:
    alpha: int = 0
    gamma: tuple[int, ...] = ()
    gamma2: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(int(g) for g in self.gamma))
        object.__setattr__(self, "gamma2", tuple(int(g) for g in self.gamma2))
        if self.alpha < 0 or any(g < 0 for g in self.gamma) or any(g < 0 for g in self.gamma2):
            raise AddError(f"increments must be non-negative, got {self!r}")
        if len(self.gamma) != len(self.gamma2):
            raise AddError("gamma and gamma' must have the same arity")

    def __add__(self, other):
        if other is INVALID:
            return INVALID
        if len(other.gamma) != len(self.gamma):
            raise AddError("cannot add value triples over different label sets")
        return ValueTriple(
            self.alpha + other.alpha,
            tuple(a + b for a, b in zip(self.gamma, other.gamma)),
            tuple(a + b for a, b in zip(self.gamma2, other.gamma2)),
        )

    def __str__(self):
        g = ",".join(map(str, self.gamma))
        g2 = ",".join(map(str, self.gamma2))
        return f"({self.alpha};{g};{g2})"

    @property
    def is_zero(self):
        return self.alpha == 0 and not any(self.gamma) and not any(self.gamma2)


Value = ValueTriple | _Invalid


def _fmt(w: Value) -> str:
    return "inf" if w is INVALID else str(w)


@dataclass(frozen=True)
class ValueSpace:
    """The bounding box for diagram values."""

    alpha_max: int
    n_labels: int
    k: int

    @cached_property
    def gammas(self) -> tuple[tuple[int, ...], ...]:
        """All tallies with component sum <= k, ordered by sum then lexicographically."""
        out = [
            g
            for g in itertools.product(range(self.k + 1), repeat=self.n_labels)
            if sum(g) <= self.k
        ]
        out.sort(key=lambda g: (sum(g), g))
        return tuple(out)

    @cached_property
    def gindex(self) -> dict[tuple[int, ...], int]:
        return {g: i for i, g in enumerate(self.gammas)}

    @property
    def n_gammas(self) -> int:
        return len(self.gammas)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.alpha_max + 1, self.n_gammas, self.n_gammas)

    @property
    def zero(self) -> ValueTriple:
        z = (0,) * self.n_labels
        return ValueTriple(0, z, z)

    def contains(self, e: Value) -> bool:
        if e is INVALID:
            return False
        return (
            len(e.gamma) == self.n_labels
            and 0 <= e.alpha <= self.alpha_max
            and e.gamma in self.gindex
            and e.gamma2 in self.gindex
        )

    def flat(self, e: ValueTriple) -> tuple[int, int, int]:
        return (e.alpha, self.gindex[e.gamma], self.gindex[e.gamma2])

    def value_at(self, a: int, g: int, g2: int) -> ValueTriple:
        return ValueTriple(a, self.gammas[g], self.gammas[g2])

    def shift_map(self, delta: tuple[int, ...]) -> np.ndarray:
        """Index of gamma + delta for every gamma, or -1 when it leaves the box."""
        return _shift_map(self, tuple(delta))


_SHIFT_CACHE: dict = {}


def _shift_map(space: ValueSpace, delta):
    key = (space.n_labels, space.k, delta)
    m = _SHIFT_CACHE.get(key)
    if m is None:
        gi = space.gindex
        m = np.array(
            [gi.get(tuple(a + b for a, b in zip(g, delta)), -1) for g in space.gammas],
            dtype=np.int64,
        )
        _SHIFT_CACHE[key] = m
    return m


@dataclass(frozen=True)
class AddNode:
    var: str
    low: int
    high: int
    w_low: Value
    w_high: Value


@dataclass(frozen=True)
class Add:
    """An ordered, full additive decision diagram.

    Nodes are stored level by level (parents before children); child ids of
    the last level are ``SINK``. ``offset`` is added to every path and lets
    restriction of the root variable stay exact.
    """

    nodes: tuple[AddNode, ...]
    root: int
    order: VariableSet
    space: ValueSpace
    offset: Value

    @classmethod
    def build(cls, nodes: Sequence[AddNode], root: int, order: VariableSet, space: ValueSpace,
              offset: Value | None = None) -> "Add":
        """Normalize node numbering and check the ordered/full invariant."""
        offset = space.zero if offset is None else offset
        level = order.index
        if root == SINK:
            if len(order):
                raise AddError("a diagram over a non-empty order cannot be a bare sink")
            return cls((), SINK, order, space, offset)
        # reachable nodes, in level order with first-visit order inside a level
        seen = {root: 0}
        frontier = [root]
        reach = [root]
        while frontier:
            nxt = []
            for n in frontier:
                node = nodes[n]
                for c in (node.low, node.high):
                    if c != SINK and c not in seen:
                        seen[c] = len(reach)
                        reach.append(c)
                        nxt.append(c)
            frontier = nxt
        reach.sort(key=lambda n: (level.get(nodes[n].var, -1), seen[n]))
        remap = {old: new for new, old in enumerate(reach)}
        remap[SINK] = SINK
        out = []
        last = len(order) - 1
        for old in reach:
            node = nodes[old]
            if node.var not in level:
                raise AddError(f"node variable {node.var!r} is not in the diagram order")
            lv = level[node.var]
            for c in (node.low, node.high):
                if lv == last:
                    if c != SINK:
                        raise AddError("last-level node must point to the sink")
                elif c == SINK or level.get(nodes[c].var) != lv + 1:
                    raise AddError(f"diagram is not ordered and full below {node.var!r}")
            out.append(AddNode(node.var, remap[node.low], remap[node.high], node.w_low, node.w_high))
        if level[out[0].var] != 0:
            raise AddError("root must test the first variable of the order")
        return cls(tuple(out), 0, order, space, offset)

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def levels(self) -> list[list[int]]:
        lv = [[] for _ in self.order]
        for k, n in enumerate(self.nodes):
            lv[self.order.index[n.var]].append(k)
        return lv

    @property
    def count_dtype(self):
        # 2^|A| paths bound every count
        return np.int64 if len(self.order) <= 62 else object


def chain(order: VariableSet, w_low: Value, w_high: Value, space: ValueSpace) -> Add:
    """A single chain with identical increments at every node."""
    nodes = []
    n = len(order)
    for k, var in enumerate(order):
        nxt = k + 1 if k + 1 < n else SINK
        nodes.append(AddNode(var, nxt, nxt, w_low, w_high))
    return Add.build(nodes, 0 if n else SINK, order, space)


def eval_add(add: Add, v: Assignment | Mapping[str, int]) -> Value:
    """Sum of increments along the path selected by v."""
    vals = v.values if isinstance(v, Assignment) else v
    total = add.offset
    n = add.root
    while n != SINK:
        node = add.nodes[n]
        try:
            bit = vals[node.var]
        except KeyError:
            raise AddError(f"assignment does not cover variable {node.var!r}") from None
        if bit:
            total, n = total + node.w_high, node.high
        else:
            total, n = total + node.w_low, node.low
        if total is INVALID:
            return INVALID
    return total if add.space.contains(total) else INVALID


def _shift(table: np.ndarray, w: Value, space: ValueSpace) -> np.ndarray:
    """table'[e] = table[e - w], dropping mass that leaves the box."""
    if w is INVALID:
        return np.zeros_like(table)
    out = table
    if w.alpha:
        a = w.alpha
        shifted = np.zeros_like(out)
        if a < out.shape[0]:
            shifted[a:] = out[: out.shape[0] - a]
        out = shifted
    for axis, delta in ((1, w.gamma), (2, w.gamma2)):
        if any(delta):
            m = space.shift_map(delta)
            ok = m >= 0
            shifted = np.zeros_like(out)
            if axis == 1:
                shifted[:, m[ok], :] = out[:, ok, :]
            else:
                shifted[:, :, m[ok]] = out[:, :, ok]
            out = shifted
    return out


def count_table(add: Add) -> np.ndarray:
    """Number of assignments reaching every value of the box, as a dense array.

    Entry [a, g, g2] counts assignments v with eval(add, v) equal to the
    value (a, gammas[g], gammas[g2]).
    """
    space = add.space
    dtype = add.count_dtype
    sink = np.zeros(space.shape, dtype=dtype)
    sink[0, 0, 0] = 1
    if add.root == SINK:
        return _shift(sink, add.offset, space)
    tables: list = [None] * len(add.nodes)
    for k in range(len(add.nodes) - 1, -1, -1):
        node = add.nodes[k]
        lo = sink if node.low == SINK else tables[node.low]
        hi = sink if node.high == SINK else tables[node.high]
        tables[k] = _shift(lo, node.w_low, space) + _shift(hi, node.w_high, space)
    return _shift(tables[add.root], add.offset, space)


def count(add: Add, e: Value) -> int:
    """Number of assignments v with eval(add, v) == e. e must be a finite value."""
    if e is INVALID:
        raise AddError("count is only defined for finite values")
    if not add.space.contains(e):
        return 0
    return int(count_table(add)[add.space.flat(e)])


def count_all(add: Add) -> dict[ValueTriple, int]:
    """Every finite value reached by some assignment, with its count."""
    tab = count_table(add)
    space = add.space
    return {
        space.value_at(a, g, g2): int(tab[a, g, g2])
        for a, g, g2 in zip(*np.nonzero(tab))
    }


def _as_vector(e) -> tuple[int, ...]:
    if isinstance(e, ValueTriple):
        return (e.alpha, *e.gamma, *e.gamma2)
    if isinstance(e, (int, np.integer)):
        return (int(e),)
    return tuple(int(x) for x in e)


def count_uniform(length: int, e0, e) -> int:
    """Closed-form count for a chain whose nodes all carry low=0, high=e0.

    The chain reaches k * e0 in C(length, k) ways and nothing else.
    """
    if length < 0:
        raise AddError("chain length must be non-negative")
    if e is INVALID or e0 is INVALID:
        raise AddError("count_uniform needs finite values")
    u, t = _as_vector(e0), _as_vector(e)
    if len(u) != len(t):
        raise AddError("e and e0 have different arity")
    if not any(u):
        raise AddError("the uniform increment must be non-zero")
    k = None
    for a, b in zip(u, t):
        if a == 0:
            if b != 0:
                return 0
        elif b % a:
            return 0
        elif k is None:
            k = b // a
        elif k != b // a:
            return 0
    return math.comb(length, k) if 0 <= k <= length else 0


def restrict(add: Add, var: str, bit: int) -> Add:
    """Fix var to bit, folding the chosen edge increment into incoming edges."""
    if var not in add.order:
        raise AddError(f"variable {var!r} is not in the diagram order")
    if bit not in (0, 1):
        raise AddError("restriction bit must be 0 or 1")
    order = add.order.without(var)

    def chosen(n):
        node = add.nodes[n]
        return (node.high, node.w_high) if bit else (node.low, node.w_low)

    def redirect(c, w):
        if c != SINK and add.nodes[c].var == var:
            c2, w2 = chosen(c)
            return c2, w + w2
        return c, w

    offset = add.offset
    root = add.root
    if root != SINK and add.nodes[root].var == var:
        root, w = chosen(root)
        offset = offset + w
    nodes = []
    for node in add.nodes:
        if node.var == var:
            # unreachable after redirection; keep a placeholder so ids stay valid
            nodes.append(AddNode(node.var, SINK, SINK, INVALID, INVALID))
            continue
        lo, wl = redirect(node.low, node.w_low)
        hi, wh = redirect(node.high, node.w_high)
        nodes.append(AddNode(node.var, lo, hi, wl, wh))
    return Add.build(nodes, root, order, add.space, offset)


def sum_diagrams(lhs: Add, rhs: Add) -> Add:
    """Pointwise sum of two diagrams over the same order."""
    if lhs.order != rhs.order:
        raise AddError("cannot sum diagrams over different variable orders")
    if lhs.space != rhs.space:
        raise AddError("cannot sum diagrams over different value spaces")
    memo: dict[tuple[int, int], int] = {(SINK, SINK): SINK}
    nodes: list = []
    # breadth-first over node pairs; both operands share one level structure
    if lhs.root == SINK:
        return Add.build((), SINK, lhs.order, lhs.space, lhs.offset + rhs.offset)
    pending = [(lhs.root, rhs.root)]
    memo[(lhs.root, rhs.root)] = 0
    nodes.append(None)
    head = 0
    while head < len(pending):
        a, b = pending[head]
        idx = memo[(a, b)]
        head += 1
        na, nb = lhs.nodes[a], rhs.nodes[b]
        kids = []
        for key in ((na.low, nb.low), (na.high, nb.high)):
            if key not in memo:
                memo[key] = len(nodes)
                nodes.append(None)
                pending.append(key)
            kids.append(memo[key])
        nodes[idx] = AddNode(na.var, kids[0], kids[1], na.w_low + nb.w_low, na.w_high + nb.w_high)
    return Add.build(nodes, 0, lhs.order, lhs.space, lhs.offset + rhs.offset)


def map_values(add: Add, fn, space: ValueSpace | None = None) -> Add:
    """Apply an additive map to every increment (and the offset)."""
    space = add.space if space is None else space

    def f(w):
        return INVALID if w is INVALID else fn(w)

    nodes = [AddNode(n.var, n.low, n.high, f(n.w_low), f(n.w_high)) for n in add.nodes]
    return Add(tuple(nodes), add.root, add.order, space, f(add.offset))


def dump(add: Add) -> str:
    """Text rendering, one node per line: ``id var low high w_low w_high``."""

    def ref(c):
        return "SINK" if c == SINK else str(c)

    lines = [f"order {' '.join(add.order)}", f"offset {_fmt(add.offset)}",
             f"root {ref(add.root)}"]
    for k, n in enumerate(add.nodes):
        lines.append(f"{k} {n.var} {ref(n.low)} {ref(n.high)} {_fmt(n.w_low)} {_fmt(n.w_high)}")
    return "\n".join(lines) + "\n"
