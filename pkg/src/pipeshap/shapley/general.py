"""Exact Shapley values for K-NN over arbitrary conjunctive provenance.

Two backends compute the same quantity.

``pairwise`` follows the counting-oracle route literally: for every variable
a_i and boundary pair (t, t'), it sums the diagram of t with a_i off and the
diagram of t' with a_i on, counts (alpha, gamma, gamma') over the remaining
variables, and weights each count by 1 / C(|A|-1, alpha).

``marginal`` uses u(v1) - u(v0) = u_Gamma(gamma') - u_Gamma(gamma) to split
the pair sum into one sum per boundary. The size weight is an integral,
1 / (|A| C(|A|-1, a)) = int_0^1 p^a (1-p)^(|A|-1-a) dp, which Gauss-Legendre
quadrature with ceil(|A|/2) + 1 nodes evaluates exactly. Each boundary
diagram then needs one forward and one backward pass with edge weights p and
1 - p, shared by all variables.
"""

from __future__ import annotations

import math
import time
from typing import Sequence

import numpy as np

from ..add import INVALID, SINK, Add, ValueSpace, count_table, restrict, sum_diagrams
from ..errors import PipeshapError
from ..knn import TupleWiseUtility, ValidationTuple, score
from ..provenance import TrackedDataset
from .compile import BOTTOM, compile_add
from .report import ShapleyReport

ENGINES = ("marginal", "pairwise")


def _gamma_sums(space: ValueSpace) -> np.ndarray:
    return np.array([sum(g) for g in space.gammas])


def _pairwise_one(d: TrackedDataset, t_val: ValidationTuple, k: int, ut: TupleWiseUtility) -> np.ndarray:
    s = score(d, t_val)
    n = len(d.variables)
    space = ValueSpace(n, len(d.labels), k)
    ug = ut.gamma_values(t_val, space.gammas)
    sums = _gamma_sums(space)
    valid = {True: sums < k, False: sums == k}  # keyed by "is bottom"
    udelta = ug[None, :] - ug[:, None]
    inv_binom = np.array([1.0 / math.comb(n - 1, a) if a <= n - 1 else 0.0 for a in range(n + 1)])
    boundaries = [BOTTOM] + list(range(len(d.tuples)))
    pos = {b: (len(d.tuples) if b is BOTTOM else int(s.position[b])) for b in boundaries}
    left = {b: compile_add(d, b, s, k, space=space) for b in boundaries}
    right = {b: compile_add(d, b, s, k, slot="gamma2", track_alpha=False, space=space) for b in boundaries}
    phi = np.zeros(n)
    for i, var in enumerate(d.variables):
        lhs = {b: restrict(left[b], var, 0) for b in boundaries
               if b is BOTTOM or var not in d.tuples[b].provenance}
        rhs = {b: restrict(right[b], var, 1) for b in boundaries}
        total = 0.0
        for b, lb in lhs.items():
            vb = valid[b is BOTTOM]
            for b2, rb in rhs.items():
                if pos[b2] > pos[b] or (b2 == b and b is not BOTTOM):
                    continue
                tab = count_table(sum_diagrams(lb, rb))
                mass = np.tensordot(inv_binom, tab.astype(float), axes=(0, 0))
                mask = vb[:, None] & valid[b2 is BOTTOM][None, :]
                total += float((mass * udelta * mask).sum())
        phi[i] = total / n
    return phi


def _edges(add: Add, n_labels: int):
    """Per node: (child, gamma delta or None for invalid) for the low and high edge."""
    out = []
    for node in add.nodes:
        pair = []
        for c, w in ((node.low, node.w_low), (node.high, node.w_high)):
            pair.append((c, None if w is INVALID else w.gamma))
        out.append(pair)
    return out


def _shift(x: np.ndarray, delta, space: ValueSpace) -> np.ndarray:
    if not any(delta):
        return x
    m = space.shift_map(delta)
    ok = m >= 0
    out = np.zeros_like(x)
    out[:, m[ok]] = x[:, ok]
    return out


def _marginal_one(d: TrackedDataset, t_val: ValidationTuple, k: int, ut: TupleWiseUtility) -> np.ndarray:
    s = score(d, t_val)
    n = len(d.variables)
    if n == 0:
        return np.zeros(0)
    space = ValueSpace(0, len(d.labels), k)
    g_count = space.n_gammas
    ug = ut.gamma_values(t_val, space.gammas)
    sums = _gamma_sums(space)
    # index of gamma1 + gamma2, or -1 outside the box
    plus = np.array([[space.gindex.get(tuple(a + b for a, b in zip(g1, g2)), -1)
                      for g2 in space.gammas] for g1 in space.gammas])
    in_box = plus >= 0
    sum_of = np.where(in_box, sums[np.maximum(plus, 0)], -1)
    u_of = np.where(in_box, ug[np.maximum(plus, 0)], 0.0)
    score_mats = {True: np.where(in_box & (sum_of < k), u_of, 0.0),
                  False: np.where(in_box & (sum_of == k), u_of, 0.0)}

    q = n // 2 + 1
    x, wq = np.polynomial.legendre.leggauss(q)
    p = (x + 1.0) / 2.0
    wq = wq / 2.0
    edge_w = (1.0 - p)[:, None], p[:, None]
    var_index = d.variables.index
    acc = np.zeros((n, 2, q))

    for b in [BOTTOM] + list(range(len(d.tuples))):
        add = compile_add(d, b, s, k, track_alpha=False, space=space)
        mat = score_mats[b is BOTTOM]
        edges = _edges(add, len(d.labels))
        m = len(add.nodes)
        node_var = [var_index[node.var] for node in add.nodes]
        # a node with zero increments on both edges into one child only relays mass
        relay = [e[0][0] == e[1][0] and e[0][1] is not None and e[1][1] is not None
                 and not any(e[0][1]) and not any(e[1][1]) for e in edges]
        fwd = [None] * m
        root = np.zeros((q, g_count))
        root[:, 0] = 1.0
        fwd[add.root] = root
        for j in range(m):
            f = fwd[j]
            if f is None:
                continue
            if relay[j]:
                c = edges[j][0][0]
                if c != SINK:
                    fwd[c] = f if fwd[c] is None else fwd[c] + f
                continue
            for bit, (c, delta) in enumerate(edges[j]):
                if delta is None or c == SINK:
                    continue
                contrib = _shift(f * edge_w[bit], delta, space)
                fwd[c] = contrib if fwd[c] is None else fwd[c] + contrib
        bwd = [None] * m
        sink = np.zeros((q, g_count))
        sink[:, 0] = 1.0
        for j in range(m - 1, -1, -1):
            if relay[j]:
                c = edges[j][0][0]
                bwd[j] = sink if c == SINK else bwd[c]
                continue
            total = None
            for bit, (c, delta) in enumerate(edges[j]):
                if delta is None:
                    continue
                below = sink if c == SINK else bwd[c]
                if below is None:
                    continue
                contrib = _shift(below, delta, space) * edge_w[bit]
                total = contrib if total is None else total + contrib
            bwd[j] = total
        # relay nodes add the same mass to both bits of their variable, so skip them
        active = [j for j in range(m) if not relay[j] and fwd[j] is not None]
        if not active:
            continue
        f_all = np.stack([fwd[j] for j in active])  # (nodes, q, G)
        h_all = np.zeros((len(active), 2, q, g_count))
        for r, j in enumerate(active):
            for bit, (c, delta) in enumerate(edges[j]):
                if delta is None:
                    continue
                below = sink if c == SINK else bwd[c]
                if below is not None:
                    h_all[r, bit] = _shift(below, delta, space)
        vals = np.einsum("jqh,jbqh->jbq", f_all @ mat, h_all)
        for r, j in enumerate(active):
            acc[node_var[j]] += vals[r]
    return (acc[:, 1, :] - acc[:, 0, :]) @ wq


def shapley_knn_general(d: TrackedDataset, val_set: Sequence[ValidationTuple], k: int,
                        ut: TupleWiseUtility, engine: str = "marginal") -> ShapleyReport:
    """Exact Shapley value of every variable for the K-NN utility."""
    if k < 1:
        raise PipeshapError("K must be at least 1")
    if engine not in ENGINES:
        raise PipeshapError(f"unknown engine {engine!r}; expected one of {', '.join(ENGINES)}")
    start = time.perf_counter()
    one = _marginal_one if engine == "marginal" else _pairwise_one
    n = len(d.variables)
    per_val = np.zeros((len(val_set), n))
    for r, t in enumerate(val_set):
        if n:
            per_val[r] = one(d, t, k, ut)
    values = ut.w * per_val.sum(axis=0)
    return ShapleyReport(d.variables.ids, values, f"general_{engine}", k, ut.kind,
                         time.perf_counter() - start, per_validation=per_val)
