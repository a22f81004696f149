"""Cost terms, normalization, load balance, and the combined objective.

Every solver and the exhaustive oracle evaluate candidate partitions through
this module, so the arithmetic here is the single source of truth. The
objective is a weighted sum of three min-max standardized cost terms (domain
compute, intra-domain link, inter-domain link), a KL-divergence load-balance
term against the chain's target CPU distribution, and, for soft (probability)
assignments, an edge-ordering penalty.

Convention: alpha weighs compute cost, beta the intra-domain link cost, gamma
the inter-domain link cost, delta the KL term, mu the ordering penalty.
Logarithms are natural throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .graphs import (
    Assignment,
    AssignmentMask,
    DeploymentState,
    DomainChain,
    VnfFg,
)

__all__ = [
    "RawCosts",
    "NormalizationBounds",
    "ObjectiveWeights",
    "ObjectiveValue",
    "FeasibilityReport",
    "CostContext",
    "raw_costs",
    "normalization_bounds",
    "inter_cost_matrix",
    "load_ratios",
    "entropy",
    "kl_divergence",
    "check_feasibility",
    "objective",
]


@dataclass
class RawCosts:
    dc: float
    dl: float
    ic: float

    @property
    def total(self) -> float:
        return self.dc + self.dl + self.ic


@dataclass
class NormalizationBounds:
    """Instance-specific extremes used for min-max standardization."""

    dc_min: float
    dc_max: float
    dl_min: float
    dl_max: float
    ic_min: float
    ic_max: float


@dataclass
class ObjectiveWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 2.0
    mu: float = 10.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta", "mu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class ObjectiveValue:
    """Weighted total plus its breakdown. ``dc_hat``/``dl_hat``/``ic_hat`` are
    the standardized terms, ``penalty`` is the raw ordering-violation mass
    (before mu), ``raw`` carries the un-normalized costs for reporting."""

    total: float
    dc_hat: float
    dl_hat: float
    ic_hat: float
    kl: float
    penalty: float
    raw: RawCosts

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "dc_hat": self.dc_hat,
            "dl_hat": self.dl_hat,
            "ic_hat": self.ic_hat,
            "kl": self.kl,
            "penalty": self.penalty,
            "raw_dc": self.raw.dc,
            "raw_dl": self.raw.dl,
            "raw_ic": self.raw.ic,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass
class FeasibilityReport:
    feasible: bool
    violations: list[str]


def inter_cost_matrix(chain: DomainChain) -> np.ndarray:
    """M x M per-unit bandwidth cost between domains (path sums, zero diagonal)."""
    m = chain.num_domains()
    t = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            t[i, j] = t[j, i] = chain.path_cost(i, j)
    return t


def _hard_vector(g: VnfFg, a: Assignment, num_domains: int) -> list[int]:
    if not a.is_hard:
        raise ValueError("a hard assignment is required")
    if len(a.domain_of) != g.num_nodes():
        raise ValueError("assignment length does not match the graph")
    for d in a.domain_of:
        if not 0 <= d < num_domains:
            raise ValueError(f"domain index {d} out of range")
    return list(a.domain_of)


def raw_costs(g: VnfFg, chain: DomainChain, a: Assignment) -> RawCosts:
    """Un-normalized compute, intra-link, and inter-link cost of a hard assignment."""
    dom = _hard_vector(g, a, chain.num_domains())
    idx = g.node_index()
    dc = 0.0
    for i, n in enumerate(g.nodes):
        d = chain.domains[dom[i]]
        dc += d.cpu_cost * n.cpu + d.ram_cost * n.ram
    dl = 0.0
    ic = 0.0
    for e in g.edges:
        mi, mj = dom[idx[e.src]], dom[idx[e.dst]]
        if mi == mj:
            dl += e.bw * chain.domains[mi].link_cost
        else:
            ic += e.bw * chain.path_cost(mi, mj)
    return RawCosts(dc=dc, dl=dl, ic=ic)


def normalization_bounds(
    g: VnfFg, chain: DomainChain, demand_weighted: bool = True
) -> NormalizationBounds:
    """Min-max extremes of each cost term over all assignments of this instance.

    The default weighs each node/edge by its demand, which guarantees every
    standardized term lands in [0, 1]. ``demand_weighted=False`` switches to
    the count-based variant (|N| resp. |E| times the extreme per-unit cost),
    kept for comparison; it does not bound demand-heavy instances.
    """
    cpu_costs = [d.cpu_cost for d in chain.domains]
    ram_costs = [d.ram_cost for d in chain.domains]
    link_costs = [d.link_cost for d in chain.domains]
    t = inter_cost_matrix(chain)
    max_path = float(t.max())
    if demand_weighted:
        total_cpu = sum(n.cpu for n in g.nodes)
        total_ram = sum(n.ram for n in g.nodes)
        total_bw = sum(e.bw for e in g.edges)
        return NormalizationBounds(
            dc_min=total_cpu * min(cpu_costs) + total_ram * min(ram_costs),
            dc_max=total_cpu * max(cpu_costs) + total_ram * max(ram_costs),
            dl_min=0.0,
            dl_max=total_bw * max(link_costs),
            ic_min=0.0,
            ic_max=total_bw * max_path,
        )
    n, e = g.num_nodes(), g.num_edges()
    return NormalizationBounds(
        dc_min=n * (min(cpu_costs) + min(ram_costs)),
        dc_max=n * (max(cpu_costs) + max(ram_costs)),
        dl_min=0.0,
        dl_max=e * max(link_costs),
        ic_min=0.0,
        ic_max=e * max_path,
    )


def load_ratios(g: VnfFg, a: Assignment, state: DeploymentState) -> np.ndarray:
    """CPU load share per domain: (occupied + newly assigned) / grand total."""
    m = len(state.occupied_cpu)
    cpu = np.array([n.cpu for n in g.nodes], dtype=float)
    total = float(sum(state.occupied_cpu) + cpu.sum())
    if total == 0:
        raise ValueError("no CPU anywhere: cannot form a load distribution")
    r = np.array(state.occupied_cpu, dtype=float)
    if a.is_hard:
        dom = _hard_vector(g, a, m)
        for i, d in enumerate(dom):
            r[d] += cpu[i]
    else:
        if a.probs.shape != (g.num_nodes(), m):
            raise ValueError("probability matrix shape does not match graph/chain")
        r += cpu @ a.probs
    return r / total


def entropy(r) -> float:
    """Shannon entropy with natural log; 0 * log 0 treated as 0."""
    r = np.asarray(r, dtype=float)
    mask = r > 0
    return float(-(r[mask] * np.log(r[mask])).sum())


def kl_divergence(r, p) -> float:
    """KL(r || p) with natural log. Nonnegative; zero iff the distributions match."""
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    if r.shape != p.shape:
        raise ValueError("distributions must have equal length")
    if np.any(p <= 0):
        raise ValueError("reference distribution must be strictly positive")
    mask = r > 0
    return float((r[mask] * np.log(r[mask] / p[mask])).sum())


def check_feasibility(
    g: VnfFg,
    chain: DomainChain,
    a: Assignment,
    mask: AssignmentMask | None = None,
    enforce_latency: bool = False,
) -> FeasibilityReport:
    """Report ordering, mask, and (optionally) latency violations of a hard assignment."""
    violations: list[str] = []
    m = chain.num_domains()
    if not a.is_hard:
        return FeasibilityReport(False, ["structural: hard assignment required"])
    if len(a.domain_of) != g.num_nodes():
        return FeasibilityReport(False, ["structural: assignment length mismatch"])
    idx = g.node_index()
    dom = list(a.domain_of)
    for i, d in enumerate(dom):
        if not 0 <= d < m:
            violations.append(f"domain-index: node {g.nodes[i].id} assigned to {d}")
    for e in g.edges:
        di, dj = dom[idx[e.src]], dom[idx[e.dst]]
        if di > dj:
            violations.append(f"ordering: edge ({e.src}, {e.dst}) goes from domain {di} to {dj}")
    if mask is not None:
        for nid, d in sorted(mask.fixed.items()):
            if nid not in idx:
                violations.append(f"mask: unknown node {nid}")
            elif dom[idx[nid]] != d:
                violations.append(f"mask: node {nid} must be in domain {d}, found {dom[idx[nid]]}")
    if enforce_latency:
        lat = sum(chain.domains[dom[i]].vnf_latency for i in range(g.num_nodes()))
        if lat > g.latency_budget:
            violations.append(f"latency: total {lat} exceeds budget {g.latency_budget}")
    return FeasibilityReport(feasible=not violations, violations=violations)


class CostContext:
    """Precomputed arrays for repeatedly evaluating one (graph, chain) instance.

    Exposes the soft objective and its gradient with respect to the probability
    matrix; the hard objective reuses the same normalization. When
    ``standardize`` is off, the three cost terms enter the objective raw.
    """

    def __init__(
        self,
        g: VnfFg,
        chain: DomainChain,
        w: ObjectiveWeights,
        bounds: NormalizationBounds,
        state: DeploymentState | None = None,
        standardize: bool = True,
    ):
        self.g = g
        self.chain = chain
        self.w = w
        self.bounds = bounds
        self.standardize = standardize
        m = chain.num_domains()
        self.m = m
        if state is None:
            state = DeploymentState.empty(m)
        if len(state.occupied_cpu) != m:
            raise ValueError("deployment state length does not match the chain")
        self.state = state

        idx = g.node_index()
        self.cpu = np.array([n.cpu for n in g.nodes], dtype=float)
        ram = np.array([n.ram for n in g.nodes], dtype=float)
        cpu_costs = np.array([d.cpu_cost for d in chain.domains])
        ram_costs = np.array([d.ram_cost for d in chain.domains])
        # per-node, per-domain compute cost
        self.node_cost = np.outer(self.cpu, cpu_costs) + np.outer(ram, ram_costs)
        self.link_costs = np.array([d.link_cost for d in chain.domains])
        self.inter = inter_cost_matrix(chain)
        self.order_mask = np.tril(np.ones((m, m)), k=-1)  # [mi, mj] = 1 when mi > mj
        self.esrc = np.array([idx[e.src] for e in g.edges], dtype=int)
        self.edst = np.array([idx[e.dst] for e in g.edges], dtype=int)
        self.ebw = np.array([e.bw for e in g.edges], dtype=float)

        self.num = np.array(state.occupied_cpu, dtype=float)
        self.total_cpu = float(self.num.sum() + self.cpu.sum())
        self.p = np.array(chain.target_distribution, dtype=float)

        dc_den = bounds.dc_max - bounds.dc_min
        if standardize:
            self.dc_scale = 1.0 / dc_den if dc_den > 0 else 0.0
            self.dc_shift = bounds.dc_min
            self.dl_scale = 1.0 / bounds.dl_max if bounds.dl_max > 0 else 0.0
            self.ic_scale = 1.0 / bounds.ic_max if bounds.ic_max > 0 else 0.0
        else:
            self.dc_scale = 1.0
            self.dc_shift = 0.0
            self.dl_scale = 1.0
            self.ic_scale = 1.0

    # -- soft (probability) form ------------------------------------------

    def soft_terms(self, probs: np.ndarray):
        """(dc, dl, ic, kl, penalty) of a probability assignment; costs raw."""
        x = probs
        dc = float((x * self.node_cost).sum())
        xi = x[self.esrc]
        xj = x[self.edst]
        dl = float((self.ebw * ((xi * self.link_costs) * xj).sum(axis=1)).sum())
        ic = float((self.ebw * np.einsum("ep,pq,eq->e", xi, self.inter, xj)).sum())
        penalty = float(np.einsum("ep,pq,eq->", xi, self.order_mask, xj))
        r = (self.num + self.cpu @ x) / self.total_cpu
        kl = kl_divergence(r, self.p)
        return dc, dl, ic, kl, penalty

    def soft_value(self, probs: np.ndarray) -> ObjectiveValue:
        dc, dl, ic, kl, penalty = self.soft_terms(probs)
        return self._combine(dc, dl, ic, kl, penalty)

    def soft_grad(self, probs: np.ndarray) -> tuple[ObjectiveValue, np.ndarray]:
        """Objective and its exact gradient with respect to the probability matrix."""
        x = probs
        w = self.w
        value = self.soft_value(x)
        grad = w.alpha * self.dc_scale * self.node_cost.copy()
        xi = x[self.esrc]
        xj = x[self.edst]
        bw = self.ebw[:, None]
        # intra-link: d/dxi = bw * cl ⊙ xj, symmetric in i/j
        gi = w.beta * self.dl_scale * bw * (self.link_costs * xj)
        gj = w.beta * self.dl_scale * bw * (self.link_costs * xi)
        # inter-link: d/dxi = bw * T xj ; d/dxj = bw * Tᵀ xi (T symmetric)
        gi += w.gamma * self.ic_scale * bw * (xj @ self.inter.T)
        gj += w.gamma * self.ic_scale * bw * (xi @ self.inter)
        # ordering penalty: d/dxi = U xj ; d/dxj = Uᵀ xi
        gi += w.mu * (xj @ self.order_mask.T)
        gj += w.mu * (xi @ self.order_mask)
        np.add.at(grad, self.esrc, gi)
        np.add.at(grad, self.edst, gj)
        r = (self.num + self.cpu @ x) / self.total_cpu
        safe_r = np.maximum(r, 1e-300)
        dkl_dr = np.log(safe_r / self.p) + 1.0
        grad += w.delta * np.outer(self.cpu / self.total_cpu, dkl_dr)
        return value, grad

    # -- hard form ----------------------------------------------------------

    def hard_value(self, a: Assignment) -> ObjectiveValue:
        rc = raw_costs(self.g, self.chain, a)
        r = load_ratios(self.g, a, self.state)
        kl = kl_divergence(r, self.p)
        return self._combine(rc.dc, rc.dl, rc.ic, kl, 0.0)

    def _combine(self, dc, dl, ic, kl, penalty) -> ObjectiveValue:
        w = self.w
        dc_hat = (dc - self.dc_shift) * self.dc_scale
        dl_hat = dl * self.dl_scale
        ic_hat = ic * self.ic_scale
        total = w.alpha * dc_hat + w.beta * dl_hat + w.gamma * ic_hat + w.delta * kl + w.mu * penalty
        return ObjectiveValue(
            total=total,
            dc_hat=dc_hat,
            dl_hat=dl_hat,
            ic_hat=ic_hat,
            kl=kl,
            penalty=penalty,
            raw=RawCosts(dc=dc, dl=dl, ic=ic),
        )


def objective(
    g: VnfFg,
    chain: DomainChain,
    a: Assignment,
    w: ObjectiveWeights,
    bounds: NormalizationBounds,
    state: DeploymentState | None = None,
    standardize: bool = True,
) -> ObjectiveValue:
    """Combined objective of a hard or soft assignment.

    Hard assignments carry no penalty term (infeasibility is reported by
    :func:`check_feasibility`, not penalized); soft assignments evaluate every
    cost term in expectation and add the mu-weighted ordering penalty.
    """
    ctx = CostContext(g, chain, w, bounds, state, standardize)
    if a.is_hard:
        return ctx.hard_value(a)
    if a.probs.shape != (g.num_nodes(), chain.num_domains()):
        raise ValueError("probability matrix shape does not match graph/chain")
    return ctx.soft_value(a.probs)
