"""Compilation of a boundary-conditioned tally function into an ADD.

For a boundary tuple b, the compiled diagram maps an assignment v to the
label tally of the candidates ranked at or above b, or to INVALID when b is
not a candidate. ``BOTTOM`` stands for "fewer than K candidates": its diagram
tallies every candidate and is never invalid.

Variables are split into connected components of the co-occurrence graph.
Inside a component, a suffix of the variable order whose polynomials each
hold at most one of them becomes a chain of leaf variables; the rest form a
complete binary tree, with one chain copy below every tree path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from ..add import INVALID, SINK, Add, AddNode, ValueSpace, ValueTriple, count_all, restrict, sum_diagrams
from ..errors import AddError
from ..knn import ScoredDataset
from ..provenance import TrackedDataset

BOTTOM = None


@dataclass(frozen=True)
class Component:
    tree: tuple[int, ...]  # variable indices, in order
    leaves: tuple[int, ...]
    # (tuple index, leaf var index or -1, tree var indices) for tuples in this component
    tuples: tuple[tuple[int, int, tuple[int, ...]], ...]


@dataclass(frozen=True)
class DiagramPlan:
    d: TrackedDataset
    components: tuple[Component, ...]

    @cached_property
    def n_tree_nodes(self) -> int:
        return sum((1 << len(c.tree)) - 1 + (1 << len(c.tree)) * len(c.leaves) for c in self.components)


_PLANS: dict[int, tuple[TrackedDataset, DiagramPlan]] = {}


def plan_for(d: TrackedDataset) -> DiagramPlan:
    hit = _PLANS.get(id(d))
    if hit is not None and hit[0] is d:
        return hit[1]
    plan = _make_plan(d)
    if len(_PLANS) > 64:
        _PLANS.clear()
    _PLANS[id(d)] = (d, plan)
    return plan


def _make_plan(d: TrackedDataset) -> DiagramPlan:
    idx = d.variables.index
    n = len(d.variables)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    polys = [sorted(idx[v] for v in t.provenance.variables) for t in d.tuples]
    for p in polys:
        for x in p[1:]:
            ra, rb = find(p[0]), find(x)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    members: dict[int, list[int]] = {}
    for x in range(n):
        members.setdefault(find(x), []).append(x)
    polys_of: dict[int, list[int]] = {x: [] for x in range(n)}
    for r, p in enumerate(polys):
        for x in p:
            polys_of[x].append(r)

    comps = []
    for root in sorted(members):
        vs = members[root]
        if vs[-1] - vs[0] + 1 != len(vs):
            raise AddError(
                "the variable order interleaves connected components; "
                "order each component's variables contiguously"
            )
        # longest suffix of the order whose polynomials hold at most one of its variables
        leaves: list[int] = []
        leaf_set: set[int] = set()
        for x in reversed(vs):
            if any(leaf_set.intersection(polys[r]) for r in polys_of[x]):
                break
            leaves.append(x)
            leaf_set.add(x)
        leaves.reverse()
        tree = [x for x in vs if x not in leaf_set]
        rows = set()
        for x in vs:
            rows.update(polys_of[x])
        info = []
        for r in sorted(rows):
            lf = [x for x in polys[r] if x in leaf_set]
            info.append((r, lf[0] if lf else -1, tuple(x for x in polys[r] if x not in leaf_set)))
        comps.append(Component(tuple(tree), tuple(leaves), tuple(info)))
    return DiagramPlan(d, tuple(comps))


def compile_add(d: TrackedDataset, boundary, s: ScoredDataset, k: int, *, slot: str = "gamma",
                track_alpha: bool = True, space: ValueSpace | None = None) -> Add:
    """ADD of the tally above ``boundary`` (a tuple index, or BOTTOM).

    ``slot`` selects whether the tally lands in gamma or gamma'; alpha counts
    high edges when ``track_alpha`` is set.
    """
    if slot not in ("gamma", "gamma2"):
        raise AddError(f"unknown slot {slot!r}")
    n_labels = len(d.labels)
    if space is None:
        space = ValueSpace(len(d.variables), n_labels, k)
    plan = plan_for(d)
    order = d.variables
    ids = order.ids
    labels = d.label_array
    pos = s.position
    if boundary is BOTTOM:
        limit = len(d.tuples)
        forced: frozenset[int] = frozenset()
    else:
        limit = int(pos[boundary])
        forced = frozenset(order.index[v] for v in d.tuples[boundary].provenance.variables)
    zero = (0,) * n_labels
    a1 = 1 if track_alpha else 0
    gidx = space.gindex

    cache: dict = {}

    def value(alpha, tally):
        key = (alpha, tally)
        w = cache.get(key)
        if w is None:
            if tally not in gidx:
                w = INVALID
            elif slot == "gamma":
                w = ValueTriple(alpha, tally, zero)
            else:
                w = ValueTriple(alpha, zero, tally)
            cache[key] = w
        return w

    low0 = value(0, zero)
    nodes: list[AddNode] = []
    # build components back to front so each knows the entry of the next
    entry = SINK
    for comp in reversed(plan.components):
        entry = _append_component(comp, entry, nodes, ids, labels, pos, limit, forced, value, low0,
                                  a1, n_labels, INVALID)
    return Add.build(nodes, entry, order, space)


def _chain_tallies(comp, tree_on, labels, pos, limit, n_labels):
    """Per leaf variable tally, plus the tally of leafless tuples, under one tree path."""
    per_leaf: dict[int, list[int]] = {}
    rest = [0] * n_labels
    for r, leaf, tvars in comp.tuples:
        if pos[r] > limit or not all(tree_on[x] for x in tvars):
            continue
        if leaf < 0:
            rest[labels[r]] += 1
        else:
            per_leaf.setdefault(leaf, [0] * n_labels)[labels[r]] += 1
    return per_leaf, rest


def _append_component(comp, nxt, nodes, ids, labels, pos, limit, forced, value, low0, a1,
                      n_labels, invalid):
    zero = (0,) * n_labels

    def new(var, lo, hi, wl, wh):
        nodes.append(AddNode(ids[var], lo, hi, wl, wh))
        return len(nodes) - 1

    def chain(per_leaf):
        head = nxt
        for x in reversed(comp.leaves):
            t = per_leaf.get(x)
            wh = value(a1, tuple(t) if t else zero)
            wl = invalid if x in forced else low0
            head = new(x, head, head, wl, wh)
        return head

    if not comp.tree:
        per_leaf, _ = _chain_tallies(comp, {}, labels, pos, limit, n_labels)
        return chain(per_leaf)

    tree = comp.tree
    depth = len(tree)

    def build(level, on):
        x = tree[level]
        kids = []
        for bit in (0, 1):
            state = {**on, x: bool(bit)}
            if level + 1 < depth:
                kid = build(level + 1, state)
                extra = zero
            else:
                per_leaf, rest = _chain_tallies(comp, state, labels, pos, limit, n_labels)
                kid = chain(per_leaf)
                extra = tuple(rest)
            kids.append((kid, extra))
        (lo, el), (hi, eh) = kids
        wl = invalid if x in forced else value(0, el)
        wh = value(a1, eh)
        return new(x, lo, hi, wl, wh)

    return build(0, {})


@dataclass(frozen=True)
class OracleTable:
    """Counts of (alpha, gamma, gamma') values over assignments of A minus a_i."""

    variable: str
    boundary: object
    boundary2: object
    entries: dict
    total: int

    @property
    def invalid_count(self) -> int:
        return self.total - sum(self.entries.values())


def counting_oracle(d: TrackedDataset, var: str, boundary, boundary2, s: ScoredDataset,
                    k: int) -> OracleTable:
    """Count, for every value triple, the assignments of A \\ {var} that reach it.

    gamma is the tally above ``boundary`` with var off, gamma' the tally above
    ``boundary2`` with var on, alpha the number of other variables set to 1.
    """
    if var not in d.variables:
        raise AddError(f"unknown variable {var!r}")
    space = ValueSpace(len(d.variables), len(d.labels), k)
    lhs = restrict(compile_add(d, boundary, s, k, space=space), var, 0)
    rhs = restrict(compile_add(d, boundary2, s, k, slot="gamma2", track_alpha=False, space=space), var, 1)
    entries = count_all(sum_diagrams(lhs, rhs))
    return OracleTable(var, boundary, boundary2, entries, 1 << (len(d.variables) - 1))
