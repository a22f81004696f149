"""Exhaustive enumeration of ordering-feasible assignments on small instances.

Ground truth for the search-based solvers: walks every assignment that
respects the edge ordering constraint and the mask, in depth-first topological
node order with ascending domains, and keeps the minimum-objective one. Ties
go to the lexicographically smallest domain vector. Intended for graphs of up
to roughly 20 nodes; a guard refuses instances whose predicted enumeration
size exceeds the caller's limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .costs import (
    NormalizationBounds,
    ObjectiveValue,
    ObjectiveWeights,
    inter_cost_matrix,
    normalization_bounds,
    objective,
)
from .graphs import (
    Assignment,
    AssignmentMask,
    DeploymentState,
    DomainChain,
    VnfFg,
    topological_order,
)

__all__ = ["OracleResult", "solve_exact"]


@dataclass
class OracleResult:
    assignment: Assignment | None
    objective: ObjectiveValue | None
    enumerated: int


def solve_exact(
    g: VnfFg,
    chain: DomainChain,
    w: ObjectiveWeights,
    mask: AssignmentMask | None = None,
    state: DeploymentState | None = None,
    limit: int = 10_000_000,
) -> OracleResult:
    """Enumerate every ordering-feasible assignment and return the best one.

    Raises ``ValueError`` before enumerating if the product of per-node domain
    range sizes exceeds ``limit``.
    """
    m = chain.num_domains()
    n = g.num_nodes()
    if state is None:
        state = DeploymentState.empty(m)
    fixed = {} if mask is None else dict(mask.fixed)

    predicted = 1
    for node in g.nodes:
        predicted *= 1 if node.id in fixed else m
        if predicted > limit:
            raise ValueError(
                f"predicted enumeration size exceeds limit ({predicted} > {limit})"
            )

    idx = g.node_index()
    topo = [idx[nid] for nid in topological_order(g)]
    bounds = normalization_bounds(g, chain)
    dc_den = bounds.dc_max - bounds.dc_min
    sdc = w.alpha / dc_den if dc_den > 0 else 0.0
    sdl = w.beta / bounds.dl_max if bounds.dl_max > 0 else 0.0
    sic = w.gamma / bounds.ic_max if bounds.ic_max > 0 else 0.0
    inter = inter_cost_matrix(chain)
    link = [d.link_cost for d in chain.domains]

    # per-position tables in topological order
    cpu = [g.nodes[i].cpu for i in topo]
    dc_cost = [
        [sdc * (chain.domains[d].cpu_cost * g.nodes[i].cpu + chain.domains[d].ram_cost * g.nodes[i].ram) for d in range(m)]
        for i in topo
    ]
    pin = [fixed.get(g.nodes[i].id, -1) for i in topo]
    tpos = {i: t for t, i in enumerate(topo)}
    preds: list[list[tuple[int, list[list[float]]]]] = [[] for _ in range(n)]
    for e in g.edges:
        ti, tj = tpos[idx[e.src]], tpos[idx[e.dst]]
        table = [
            [sdl * e.bw * link[di] if di == dj else sic * e.bw * inter[di][dj] for dj in range(m)]
            for di in range(m)
        ]
        preds[tj].append((ti, table))

    p = list(chain.target_distribution)
    log_p = [math.log(x) for x in p]
    total_cpu = float(sum(state.occupied_cpu) + sum(cpu))
    cpu_dom = [float(c) for c in state.occupied_cpu]

    dom = [0] * n
    best_total = math.inf
    best_vec: tuple[int, ...] | None = None
    count = 0
    delta = w.delta

    def recurse(t: int, acc: float):
        nonlocal best_total, best_vec, count
        if t == n:
            kl = 0.0
            for mm in range(m):
                r = cpu_dom[mm] / total_cpu
                if r > 0:
                    kl += r * (math.log(r) - log_p[mm])
            total = acc + delta * kl
            if total < best_total - 1e-12 or (
                total <= best_total + 1e-12
                and (best_vec is None or _positional(dom, topo, n) < best_vec)
            ):
                if total < best_total:
                    best_total = total
                best_vec = _positional(dom, topo, n)
            count += 1
            return
        lo = 0
        for s, _ in preds[t]:
            if dom[s] > lo:
                lo = dom[s]
        if pin[t] >= 0:
            choices = range(pin[t], pin[t] + 1) if pin[t] >= lo else range(0)
        else:
            choices = range(lo, m)
        for d in choices:
            add = dc_cost[t][d]
            for s, table in preds[t]:
                add += table[dom[s]][d]
            dom[t] = d
            cpu_dom[d] += cpu[t]
            recurse(t + 1, acc + add)
            cpu_dom[d] -= cpu[t]

    recurse(0, 0.0)
    if best_vec is None:
        return OracleResult(assignment=None, objective=None, enumerated=count)
    a = Assignment.hard(best_vec)
    value = objective(g, chain, a, w, bounds, state)
    return OracleResult(assignment=a, objective=value, enumerated=count)


def _positional(dom: list[int], topo: list[int], n: int) -> tuple[int, ...]:
    out = [0] * n
    for t, i in enumerate(topo):
        out[i] = dom[t]
    return tuple(out)
