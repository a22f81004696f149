"""Branch-and-bound over per-node domain choices.

Nodes are branched in topological order with ascending domain indices, so the
edge ordering constraint reduces to a running maximum over predecessors and
infeasible subtrees are never generated. The bound is admissible: fixed nodes
and fully fixed edges contribute exactly, free nodes and partially free edges
contribute their cheapest still-feasible alternative, and the KL term is
relaxed to zero until the assignment is complete. Anytime behavior under node
or time budgets; deterministic under a node budget.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Mapping

from .costs import (
    NormalizationBounds,
    ObjectiveValue,
    ObjectiveWeights,
    check_feasibility,
    inter_cost_matrix,
    normalization_bounds,
    objective,
)
from .graphs import (
    Assignment,
    AssignmentMask,
    DeploymentState,
    DomainChain,
    InfeasibleMaskError,
    VnfFg,
    domain_caps,
    topological_order,
)

__all__ = ["BnbConfig", "BnbStats", "BnbResult", "solve_bnb", "lower_bound"]

_INF = math.inf


@dataclass
class BnbConfig:
    time_limit: float | None = None
    node_limit: int | None = None
    incumbent_seed: Assignment | None = None

    def __post_init__(self):
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node_limit must be positive")


@dataclass
class BnbStats:
    explored: int
    pruned: int
    proven_optimal: bool
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "explored": self.explored,
            "pruned": self.pruned,
            "proven_optimal": self.proven_optimal,
            "wall_time": self.wall_time,
        }


@dataclass
class BnbResult:
    assignment: Assignment | None
    objective: ObjectiveValue | None
    stats: BnbStats
    status: str  # "optimal" | "feasible" | "infeasible"


class _ExactKl:
    """True-objective mode: KL contributes only once the assignment is complete."""

    needs_reach = False

    def __init__(self, delta: float, p, total_cpu: float):
        self.delta = delta
        self.log_p = [math.log(x) for x in p]
        self.total = total_cpu

    def bound(self, cpu_dom, reach) -> float:
        return 0.0

    def leaf(self, cpu_dom) -> float:
        if self.delta == 0.0:
            return 0.0
        s = 0.0
        for m, c in enumerate(cpu_dom):
            r = c / self.total
            if r > 0:
                s += r * (math.log(r) - self.log_p[m])
        return self.delta * s


class _Instance:
    """Per-instance tables shared by the search engine and the public bound."""

    def __init__(
        self,
        g: VnfFg,
        chain: DomainChain,
        w: ObjectiveWeights,
        bounds: NormalizationBounds,
        state: DeploymentState | None,
        mask: AssignmentMask | None,
    ):
        self.g = g
        self.chain = chain
        self.w = w
        self.bounds = bounds
        m = chain.num_domains()
        self.m = m
        self.n = g.num_nodes()
        if state is None:
            state = DeploymentState.empty(m)
        self.state = state
        self.mask = mask

        idx = g.node_index()
        order = topological_order(g)
        self.topo = [idx[nid] for nid in order]  # positional indices, topo order
        self.t_of_pos = {pos: t for t, pos in enumerate(self.topo)}

        caps_pos = domain_caps(g, m, mask)  # raises InfeasibleMaskError
        fixed = {} if mask is None else mask.fixed
        self.caps = [caps_pos[pos] for pos in self.topo]
        self.floor0 = [fixed.get(g.nodes[pos].id, 0) for pos in self.topo]
        self.pinned = [g.nodes[pos].id in fixed for pos in self.topo]

        dc_den = bounds.dc_max - bounds.dc_min
        sdc = w.alpha / dc_den if dc_den > 0 else 0.0
        sdl = w.beta / bounds.dl_max if bounds.dl_max > 0 else 0.0
        sic = w.gamma / bounds.ic_max if bounds.ic_max > 0 else 0.0
        self.dc_base = -sdc * bounds.dc_min

        self.cpu = [g.nodes[pos].cpu for pos in self.topo]
        self.dcc = [
            [
                sdc
                * (
                    chain.domains[d].cpu_cost * g.nodes[pos].cpu
                    + chain.domains[d].ram_cost * g.nodes[pos].ram
                )
                for d in range(m)
            ]
            for pos in self.topo
        ]
        # cheapest compute cost of node t over domains in [max(l, floor), cap]
        self.dcmin = []
        for t in range(self.n):
            lo0, cap = self.floor0[t], self.caps[t]
            row = [_INF] * (m + 1)
            for l in range(m - 1, -1, -1):
                best = row[l + 1]
                if lo0 <= l <= cap:
                    best = min(best, self.dcc[t][l])
                row[l] = best
            self.dcmin.append(row)

        inter = inter_cost_matrix(chain)
        link = [d.link_cost for d in chain.domains]
        self.eti: list[int] = []
        self.etj: list[int] = []
        self.wedge: list[list[list[float]]] = []
        self.rowmin: list[list[list[float]]] = []
        self.bfmin: list[list[list[float]]] = []
        self.in_edges: list[list[int]] = [[] for _ in range(self.n)]
        self.out_edges: list[list[int]] = [[] for _ in range(self.n)]
        for e in g.edges:
            ti, tj = self.t_of_pos[idx[e.src]], self.t_of_pos[idx[e.dst]]
            wtab = [
                [
                    sdl * e.bw * link[di] if di == dj else sic * e.bw * inter[di][dj]
                    for dj in range(m)
                ]
                for di in range(m)
            ]
            loj, capj = self.floor0[tj], self.caps[tj]
            rmin = []
            for di in range(m):
                row = [_INF] * (m + 1)
                for l in range(m - 1, -1, -1):
                    best = row[l + 1]
                    if loj <= l <= capj:
                        best = min(best, wtab[di][l])
                    row[l] = best
                rmin.append(row)
            loi, capi = self.floor0[ti], self.caps[ti]
            bf = []
            for li in range(m):
                row = []
                for lj in range(m):
                    best = _INF
                    for di in range(max(li, loi), capi + 1):
                        v = rmin[di][max(di, lj)]
                        if v < best:
                            best = v
                    row.append(best)
                bf.append(row)
            k = len(self.eti)
            self.eti.append(ti)
            self.etj.append(tj)
            self.wedge.append(wtab)
            self.rowmin.append(rmin)
            self.bfmin.append(bf)
            self.in_edges[tj].append(k)
            self.out_edges[ti].append(k)

        self.num0 = [float(c) for c in state.occupied_cpu]
        self.total_cpu = float(sum(self.num0) + sum(self.cpu))
        self.p = list(chain.target_distribution)

    def initial_lo(self) -> list[int]:
        """Per-node lower bounds with only the mask floors propagated."""
        lo = list(self.floor0)
        for t in range(self.n):
            for e in self.in_edges[t]:
                s = self.eti[e]
                if lo[s] > lo[t]:
                    lo[t] = lo[s]
        return lo

    def to_positional(self, dom_topo) -> list[int]:
        out = [0] * self.n
        for t, pos in enumerate(self.topo):
            out[pos] = dom_topo[t]
        return out


class _Engine:
    """Depth-first search with incremental bound maintenance and undo journal."""

    def __init__(self, inst: _Instance, kl):
        self.inst = inst
        self.kl = kl
        n, m = inst.n, inst.m
        self.dom = [-1] * n
        self.lo = inst.initial_lo()
        self.free_dc = sum(inst.dcmin[t][self.lo[t]] for t in range(n))
        self.ec = [0.0] * len(inst.eti)
        for e in range(len(inst.eti)):
            self.ec[e] = inst.bfmin[e][self.lo[inst.eti[e]]][self.lo[inst.etj[e]]]
        self.esum = sum(self.ec)
        self.dc_fixed = 0.0
        self.cpu_dom = list(inst.num0)
        if kl.needs_reach:
            self.reach = [0.0] * m
            for t in range(n):
                for mm in range(self.lo[t], inst.caps[t] + 1):
                    self.reach[mm] += inst.cpu[t]
        else:
            self.reach = None

    def apply(self, t: int, d: int) -> list:
        inst = self.inst
        journal: list = []
        dom = self.dom
        lo = self.lo
        ec = self.ec
        self.free_dc -= inst.dcmin[t][lo[t]]
        self.dc_fixed += inst.dcc[t][d]
        dom[t] = d
        self.cpu_dom[d] += inst.cpu[t]
        if self.reach is not None:
            c = inst.cpu[t]
            for mm in range(lo[t], inst.caps[t] + 1):
                self.reach[mm] -= c
                journal.append(("r", mm, c))
        for e in inst.in_edges[t]:
            new = inst.wedge[e][dom[inst.eti[e]]][d]
            old = ec[e]
            if new != old:
                self.esum += new - old
                ec[e] = new
                journal.append(("e", e, old))
        stack = []
        for e in inst.out_edges[t]:
            u = inst.etj[e]
            new = inst.rowmin[e][d][lo[u] if lo[u] > d else d]
            old = ec[e]
            if new != old:
                self.esum += new - old
                ec[e] = new
                journal.append(("e", e, old))
            if d > lo[u]:
                stack.append((u, d))
        while stack:
            u, nl = stack.pop()
            if nl <= lo[u]:
                continue
            journal.append(("l", u, lo[u]))
            self.free_dc += inst.dcmin[u][nl] - inst.dcmin[u][lo[u]]
            if self.reach is not None:
                c = inst.cpu[u]
                top = min(nl - 1, inst.caps[u])
                for mm in range(lo[u], top + 1):
                    self.reach[mm] -= c
                    journal.append(("r", mm, c))
            lo[u] = nl
            for e2 in inst.in_edges[u]:
                s2 = inst.eti[e2]
                if dom[s2] >= 0:
                    ds = dom[s2]
                    new = inst.rowmin[e2][ds][nl if nl > ds else ds]
                else:
                    new = inst.bfmin[e2][lo[s2]][nl]
                old = ec[e2]
                if new != old:
                    self.esum += new - old
                    ec[e2] = new
                    journal.append(("e", e2, old))
            for e2 in inst.out_edges[u]:
                u2 = inst.etj[e2]
                new = inst.bfmin[e2][nl][lo[u2]]
                old = ec[e2]
                if new != old:
                    self.esum += new - old
                    ec[e2] = new
                    journal.append(("e", e2, old))
                if nl > lo[u2]:
                    stack.append((u2, nl))
        return journal

    def undo(self, t: int, d: int, journal: list, scalars) -> None:
        inst = self.inst
        for kind, a, b in reversed(journal):
            if kind == "e":
                self.ec[a] = b
            elif kind == "l":
                self.lo[a] = b
            else:
                self.reach[a] += b
        self.dom[t] = -1
        self.cpu_dom[d] -= inst.cpu[t]
        self.dc_fixed, self.free_dc, self.esum = scalars

    def bound(self, complete: bool) -> float:
        base = self.inst.dc_base + self.dc_fixed + self.free_dc + self.esum
        if complete:
            return base + self.kl.leaf(self.cpu_dom)
        return base + self.kl.bound(self.cpu_dom, self.reach)

    def evaluate_vector(self, dom_topo) -> float:
        """Engine-pipeline value of a complete assignment (topo coordinates)."""
        frames = []
        for t, d in enumerate(dom_topo):
            frames.append(((self.dc_fixed, self.free_dc, self.esum), self.apply(t, d)))
        val = self.bound(complete=True)
        for t in range(len(dom_topo) - 1, -1, -1):
            scalars, journal = frames[t]
            self.undo(t, dom_topo[t], journal, scalars)
        return val


def _greedy_incumbent(inst: _Instance) -> list[int]:
    """All nodes in the domain with cheapest total compute cost, clamped into
    the mask caps; always ordering-feasible."""
    m = inst.m
    totals = [sum(inst.dcc[t][d] for t in range(inst.n)) for d in range(m)]
    best_m = min(range(m), key=lambda d: totals[d])
    dom = [0] * inst.n
    for t in range(inst.n):
        lo = inst.floor0[t]
        for e in inst.in_edges[t]:
            s = inst.eti[e]
            if dom[s] > lo:
                lo = dom[s]
        dom[t] = inst.floor0[t] if inst.pinned[t] else min(max(best_m, lo), inst.caps[t])
    return dom


def _search(inst: _Instance, kl, config: BnbConfig) -> tuple[list[int] | None, BnbStats]:
    start = time.perf_counter()
    engine = _Engine(inst, kl)
    n = inst.n

    if config.incumbent_seed is not None:
        seed = config.incumbent_seed
        rep = check_feasibility(inst.g, inst.chain, seed, inst.mask)
        if not rep.feasible:
            raise ValueError(f"incumbent_seed is infeasible: {rep.violations}")
        inc_dom = [seed.domain_of[inst.topo[t]] for t in range(n)]
    else:
        inc_dom = _greedy_incumbent(inst)
    inc_val = engine.evaluate_vector(inc_dom)

    explored = 0
    pruned = 0
    stopped = False
    node_limit = config.node_limit if config.node_limit is not None else math.inf
    time_limit = config.time_limit
    check_every = 256
    since_check = 0

    def over_budget() -> bool:
        nonlocal since_check, stopped
        if explored >= node_limit:
            stopped = True
            return True
        if time_limit is not None:
            since_check += 1
            if since_check >= check_every:
                since_check = 0
                if time.perf_counter() - start > time_limit:
                    stopped = True
                    return True
        return False

    if time_limit is not None and time.perf_counter() - start > time_limit:
        stopped = True

    best = list(inc_dom)
    best_val = inc_val

    def dfs(depth: int):
        nonlocal explored, pruned, best, best_val, stopped
        t = depth
        lo_t = engine.lo[t]
        if inst.pinned[t]:
            choices = (inst.floor0[t],) if inst.floor0[t] >= lo_t else ()
        else:
            choices = range(lo_t, inst.caps[t] + 1)
        # score every child first, then descend cheapest-bound-first: depth-first
        # search keeps its anytime behavior but the first dive is near-greedy
        scored = []
        for d in choices:
            if stopped or over_budget():
                return
            scalars = (engine.dc_fixed, engine.free_dc, engine.esum)
            journal = engine.apply(t, d)
            explored += 1
            if depth + 1 == n:
                val = engine.bound(complete=True)
                if val < best_val:
                    best_val = val
                    best = list(engine.dom)
            else:
                scored.append((engine.bound(complete=False), d))
            engine.undo(t, d, journal, scalars)
        scored.sort()
        for b, d in scored:
            if stopped:
                return
            if b >= best_val:
                pruned += 1
                continue
            scalars = (engine.dc_fixed, engine.free_dc, engine.esum)
            journal = engine.apply(t, d)
            dfs(depth + 1)
            engine.undo(t, d, journal, scalars)

    if not stopped:
        dfs(0)
    stats = BnbStats(
        explored=explored,
        pruned=pruned,
        proven_optimal=not stopped,
        wall_time=time.perf_counter() - start,
    )
    return best, stats


def solve_bnb(
    g: VnfFg,
    chain: DomainChain,
    w: ObjectiveWeights,
    mask: AssignmentMask | None = None,
    state: DeploymentState | None = None,
    config: BnbConfig | None = None,
) -> BnbResult:
    """Minimize the combined objective by branch and bound.

    Returns the best incumbent found within the budget; ``proven_optimal`` is
    set only when the search tree was exhausted. A mask that admits no
    ordering-feasible completion yields an infeasible result.
    """
    if config is None:
        config = BnbConfig()
    bounds = normalization_bounds(g, chain)
    try:
        inst = _Instance(g, chain, w, bounds, state, mask)
    except InfeasibleMaskError:
        return BnbResult(
            assignment=None,
            objective=None,
            stats=BnbStats(0, 0, False, 0.0),
            status="infeasible",
        )
    kl = _ExactKl(w.delta, inst.p, inst.total_cpu)
    best, stats = _search(inst, kl, config)
    a = Assignment.hard(inst.to_positional(best))
    value = objective(g, chain, a, w, bounds, inst.state)
    status = "optimal" if stats.proven_optimal else "feasible"
    return BnbResult(assignment=a, objective=value, stats=stats, status=status)


def lower_bound(
    prefix: Mapping[int, int],
    g: VnfFg,
    chain: DomainChain,
    w: ObjectiveWeights,
    bounds: NormalizationBounds,
    state: DeploymentState | None = None,
    mask: AssignmentMask | None = None,
) -> float:
    """Admissible lower bound on the objective of any feasible completion.

    ``prefix`` maps node ids to domains and must be predecessor-closed (every
    predecessor of a fixed node is fixed). Fixed nodes and fully fixed edges
    count exactly; free nodes and edges with a free endpoint contribute the
    minimum over their still-feasible domains; the KL term is relaxed to zero
    unless the prefix already fixes every node, in which case it is exact.
    """
    inst = _Instance(g, chain, w, bounds, state, mask)
    idx = g.node_index()
    dom = [-1] * inst.n
    for nid, d in prefix.items():
        if nid not in idx:
            raise ValueError(f"prefix references unknown node {nid}")
        if not 0 <= d < inst.m:
            raise ValueError(f"prefix domain {d} out of range")
        dom[inst.t_of_pos[idx[nid]]] = int(d)

    lo = inst.initial_lo()
    for t in range(inst.n):
        for e in inst.in_edges[t]:
            s = inst.eti[e]
            if dom[s] >= 0:
                if dom[t] < 0 and dom[s] > lo[t]:
                    lo[t] = dom[s]
            elif dom[t] >= 0:
                raise ValueError("prefix must be predecessor-closed in topological order")
            elif lo[s] > lo[t]:
                lo[t] = lo[s]

    total = inst.dc_base
    cpu_dom = list(inst.num0)
    complete = True
    for t in range(inst.n):
        if dom[t] >= 0:
            total += inst.dcc[t][dom[t]]
            cpu_dom[dom[t]] += inst.cpu[t]
        else:
            complete = False
            total += inst.dcmin[t][lo[t]]
    for e in range(len(inst.eti)):
        ti, tj = inst.eti[e], inst.etj[e]
        di, dj = dom[ti], dom[tj]
        if di >= 0 and dj >= 0:
            total += inst.wedge[e][di][dj]
        elif di >= 0:
            total += inst.rowmin[e][di][lo[tj] if lo[tj] > di else di]
        else:
            total += inst.bfmin[e][lo[ti]][lo[tj]]
    if complete:
        kl = _ExactKl(w.delta, inst.p, inst.total_cpu)
        total += kl.leaf(cpu_dom)
    return total
