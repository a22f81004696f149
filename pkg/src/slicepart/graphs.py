"""Slice forwarding graphs, domain chains, assignments, and random DAG generation.

A network slice is modelled as a DAG of VNFs (nodes demand CPU/RAM, edges
demand bandwidth) that must be split across an ordered chain of domains.
Everything here is plain data; all cost arithmetic lives in ``costs``.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "VnfNode",
    "VnfEdge",
    "VnfFg",
    "Domain",
    "DomainChain",
    "Assignment",
    "DeploymentState",
    "AssignmentMask",
    "GraphReport",
    "InfeasibleMaskError",
    "generate_random_dag",
    "validate",
    "topological_order",
    "domain_caps",
    "default_chain",
    "graph_to_json",
    "graph_from_json",
    "save_graph",
    "load_graph",
    "chain_to_json",
    "chain_from_json",
    "save_chain",
    "load_chain",
    "mask_from_json",
    "mask_to_json",
]


class InfeasibleMaskError(ValueError):
    """Raised when a mask admits no ordering-feasible assignment."""


@dataclass
class VnfNode:
    id: int
    cpu: int
    ram: int


@dataclass
class VnfEdge:
    src: int
    dst: int
    bw: float


@dataclass
class VnfFg:
    """A slice's forwarding graph: nodes, directed edges, total latency budget."""

    nodes: list[VnfNode]
    edges: list[VnfEdge]
    latency_budget: float = 0.0

    def node_index(self) -> dict[int, int]:
        """Map node id -> position in ``nodes``."""
        return {n.id: i for i, n in enumerate(self.nodes)}

    def num_nodes(self) -> int:
        return len(self.nodes)

    def num_edges(self) -> int:
        return len(self.edges)


@dataclass
class Domain:
    """One domain of the chain with its advertised per-unit cost estimates."""

    index: int
    cpu_cost: float
    ram_cost: float
    link_cost: float
    vnf_latency: float = 0.0

    def __post_init__(self):
        if self.cpu_cost < 0 or self.ram_cost < 0 or self.link_cost < 0:
            raise ValueError("domain costs must be nonnegative")
        if self.vnf_latency < 0:
            raise ValueError("vnf_latency must be nonnegative")


@dataclass
class DomainChain:
    """Ordered chain of domains plus inter-domain link costs and a target CPU distribution.

    ``inter_link_cost`` maps each adjacent pair ``(m, m+1)`` to its per-unit
    bandwidth cost; traffic between non-adjacent domains transits every
    intermediate hop, so its cost is the sum along the chain.
    """

    domains: list[Domain]
    inter_link_cost: dict[tuple[int, int], float]
    target_distribution: tuple[float, ...]

    def __post_init__(self):
        m = len(self.domains)
        if m < 2:
            raise ValueError("a chain needs at least two domains")
        for i, d in enumerate(self.domains):
            if d.index != i:
                raise ValueError(f"domain at position {i} has index {d.index}")
        for i in range(m - 1):
            if (i, i + 1) not in self.inter_link_cost:
                raise ValueError(f"missing inter-domain cost for pair ({i}, {i + 1})")
        p = np.asarray(self.target_distribution, dtype=float)
        if len(p) != m:
            raise ValueError("target_distribution length must equal the number of domains")
        if np.any(p <= 0):
            raise ValueError("target_distribution entries must be positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("target_distribution must sum to 1")
        self.target_distribution = tuple(float(x) for x in p)

    def num_domains(self) -> int:
        return len(self.domains)

    def path_cost(self, mi: int, mj: int) -> float:
        """Per-unit bandwidth cost between two domains (sum of hops; 0 if equal)."""
        lo, hi = (mi, mj) if mi <= mj else (mj, mi)
        return sum(self.inter_link_cost[(k, k + 1)] for k in range(lo, hi))


def default_chain() -> DomainChain:
    """Four-domain reference chain (RAN, edge, core, cloud) used by the harness."""
    cpu = [100, 50, 20, 5]
    ram = [10, 5, 2, 1]
    link = [1.0, 0.5, 0.2, 0.1]
    domains = [Domain(i, cpu[i], ram[i], link[i], 0.0) for i in range(4)]
    inter = {(0, 1): 10.0, (1, 2): 5.0, (2, 3): 2.0}
    return DomainChain(domains, inter, (0.1, 0.2, 0.3, 0.4))


class Assignment:
    """Per-node placement: either a hard domain index per node or a row-stochastic
    probability matrix over domains. Rows/entries are positional, aligned with
    ``VnfFg.nodes``. Exactly one form is populated."""

    def __init__(self, domain_of=None, probs=None):
        if (domain_of is None) == (probs is None):
            raise ValueError("exactly one of domain_of / probs must be given")
        if domain_of is not None:
            self.domain_of = tuple(int(d) for d in domain_of)
            if any(d < 0 for d in self.domain_of):
                raise ValueError("domain indices must be nonnegative")
            self.probs = None
        else:
            p = np.asarray(probs, dtype=float)
            if p.ndim != 2:
                raise ValueError("probs must be a 2-D matrix")
            if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
                raise ValueError("probability entries must lie in [0, 1]")
            if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
                raise ValueError("probability rows must sum to 1")
            self.probs = p
            self.domain_of = None

    @classmethod
    def hard(cls, domain_of: Sequence[int]) -> "Assignment":
        return cls(domain_of=domain_of)

    @classmethod
    def soft(cls, probs) -> "Assignment":
        return cls(probs=probs)

    @property
    def is_hard(self) -> bool:
        return self.domain_of is not None

    def __repr__(self):
        if self.is_hard:
            return f"Assignment.hard({list(self.domain_of)})"
        return f"Assignment.soft(<{self.probs.shape[0]}x{self.probs.shape[1]}>)"


@dataclass
class DeploymentState:
    """CPU cores already occupied per domain by previously deployed slices."""

    occupied_cpu: tuple[int, ...]

    def __post_init__(self):
        self.occupied_cpu = tuple(int(c) for c in self.occupied_cpu)
        if any(c < 0 for c in self.occupied_cpu):
            raise ValueError("occupied_cpu entries must be nonnegative")

    @classmethod
    def empty(cls, num_domains: int) -> "DeploymentState":
        return cls((0,) * num_domains)


@dataclass
class AssignmentMask:
    """Hard pins: node id -> required domain index."""

    fixed: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.fixed = {int(k): int(v) for k, v in self.fixed.items()}
        if any(v < 0 for v in self.fixed.values()):
            raise ValueError("mask domains must be nonnegative")


@dataclass
class GraphReport:
    ok: bool
    errors: list[str]


def validate(g: VnfFg) -> GraphReport:
    """Check every structural invariant of a forwarding graph, report style."""
    errors: list[str] = []
    ids = [n.id for n in g.nodes]
    if len(set(ids)) != len(ids):
        errors.append("duplicate node ids")
    id_set = set(ids)
    for n in g.nodes:
        if n.cpu <= 0:
            errors.append(f"node {n.id}: cpu must be positive")
        if n.ram <= 0:
            errors.append(f"node {n.id}: ram must be positive")
    seen = set()
    for e in g.edges:
        if e.src not in id_set or e.dst not in id_set:
            errors.append(f"dangling endpoint on edge ({e.src}, {e.dst})")
            continue
        if e.src == e.dst:
            errors.append(f"self-loop on node {e.src}")
        if e.bw <= 0:
            errors.append(f"edge ({e.src}, {e.dst}): bandwidth must be positive")
        if (e.src, e.dst) in seen:
            errors.append(f"duplicate edge ({e.src}, {e.dst})")
        seen.add((e.src, e.dst))
    if g.latency_budget < 0:
        errors.append("latency_budget must be nonnegative")
    if not errors:
        try:
            topological_order(g)
        except ValueError:
            errors.append("cycle detected")
    return GraphReport(ok=not errors, errors=errors)


def topological_order(g: VnfFg) -> list[int]:
    """Node ids in topological order; ties broken by ascending id."""
    ids = [n.id for n in g.nodes]
    id_set = set(ids)
    indeg = {i: 0 for i in ids}
    succ: dict[int, list[int]] = {i: [] for i in ids}
    for e in g.edges:
        if e.src not in id_set or e.dst not in id_set:
            raise ValueError(f"edge ({e.src}, {e.dst}) references a missing node")
        succ[e.src].append(e.dst)
        indeg[e.dst] += 1
    ready = [i for i in ids if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != len(ids):
        raise ValueError("cycle detected")
    return order


def domain_caps(g: VnfFg, num_domains: int, mask: AssignmentMask | None) -> list[int]:
    """Per-node maximum feasible domain index under the mask and edge ordering.

    Computed by a reverse topological sweep: a node can never sit above the cap
    of any successor. Raises :class:`InfeasibleMaskError` when a pinned node's
    own cap falls below its pin, i.e. the mask admits no feasible assignment.
    Result is positional (aligned with ``g.nodes``).
    """
    idx = g.node_index()
    fixed = {} if mask is None else mask.fixed
    for nid in fixed:
        if nid not in idx:
            raise ValueError(f"mask references unknown node {nid}")
        if not 0 <= fixed[nid] < num_domains:
            raise ValueError(f"mask domain {fixed[nid]} out of range for node {nid}")
    caps = [num_domains - 1] * len(g.nodes)
    for nid, m in fixed.items():
        caps[idx[nid]] = m
    order = topological_order(g)
    succs: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    for e in g.edges:
        succs[e.src].append(e.dst)
    for nid in reversed(order):
        i = idx[nid]
        for s in succs[nid]:
            caps[i] = min(caps[i], caps[idx[s]])
        if nid in fixed and caps[i] < fixed[nid]:
            raise InfeasibleMaskError(
                f"mask pins node {nid} to domain {fixed[nid]} but a successor caps it at {caps[i]}"
            )
    return caps


def generate_random_dag(
    num_nodes: int,
    num_edges: int,
    cpu_levels: Iterable[int],
    ram_levels: Iterable[int],
    bw_levels: Iterable[float],
    seed: int,
) -> VnfFg:
    """Generate a weakly connected random DAG with attributes drawn from level sets.

    Nodes receive a random topological rank; every edge is oriented from lower
    to higher rank, which guarantees acyclicity. A random spanning arborescence
    is laid first so the graph is weakly connected, then the remaining edges are
    sampled uniformly without duplicates. The edge count is clamped into
    [num_nodes - 1, num_nodes * (num_nodes - 1) / 2]. Deterministic per seed.
    """
    if num_nodes < 2:
        raise ValueError("num_nodes must be at least 2")
    cpu_levels = sorted(set(int(x) for x in cpu_levels))
    ram_levels = sorted(set(int(x) for x in ram_levels))
    bw_levels = sorted(set(float(x) for x in bw_levels))
    if not cpu_levels or not ram_levels or not bw_levels:
        raise ValueError("level sets must be non-empty")

    n = num_nodes
    max_edges = n * (n - 1) // 2
    target = max(min(num_edges, max_edges), n - 1)
    rng = np.random.default_rng(seed)

    order = [int(x) for x in rng.permutation(n)]  # order[t] = node at rank t
    pairs: set[tuple[int, int]] = set()  # rank pairs (s, t), s < t
    for t in range(1, n):
        s = int(rng.integers(0, t))
        pairs.add((s, t))
    extra = target - (n - 1)
    if extra > 0:
        candidates = [
            (s, t) for s in range(n) for t in range(s + 1, n) if (s, t) not in pairs
        ]
        chosen = rng.choice(len(candidates), size=extra, replace=False)
        for k in chosen:
            pairs.add(candidates[int(k)])

    edge_ends = sorted((order[s], order[t]) for s, t in pairs)
    cpu = rng.choice(cpu_levels, size=n)
    ram = rng.choice(ram_levels, size=n)
    bw = rng.choice(bw_levels, size=len(edge_ends))
    nodes = [VnfNode(i, int(cpu[i]), int(ram[i])) for i in range(n)]
    edges = [VnfEdge(u, v, float(bw[k])) for k, (u, v) in enumerate(edge_ends)]
    return VnfFg(nodes=nodes, edges=edges, latency_budget=0.0)


# ---------------------------------------------------------------------------
# JSON serialization. Key order is fixed so reruns produce identical bytes.

def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def graph_to_json(g: VnfFg) -> str:
    return _dump(
        {
            "nodes": [{"id": n.id, "cpu": n.cpu, "ram": n.ram} for n in g.nodes],
            "edges": [{"src": e.src, "dst": e.dst, "bw": e.bw} for e in g.edges],
            "latency_budget": g.latency_budget,
        }
    )


def graph_from_json(text: str) -> VnfFg:
    raw = json.loads(text)
    nodes = [VnfNode(int(n["id"]), int(n["cpu"]), int(n["ram"])) for n in raw["nodes"]]
    edges = [VnfEdge(int(e["src"]), int(e["dst"]), float(e["bw"])) for e in raw["edges"]]
    return VnfFg(nodes=nodes, edges=edges, latency_budget=float(raw.get("latency_budget", 0.0)))


def save_graph(g: VnfFg, path) -> None:
    Path(path).write_text(graph_to_json(g), encoding="utf-8")


def load_graph(path) -> VnfFg:
    return graph_from_json(Path(path).read_text(encoding="utf-8"))


def chain_to_json(chain: DomainChain) -> str:
    return _dump(
        {
            "domains": [
                {
                    "index": d.index,
                    "cpu_cost": d.cpu_cost,
                    "ram_cost": d.ram_cost,
                    "link_cost": d.link_cost,
                    "vnf_latency": d.vnf_latency,
                }
                for d in chain.domains
            ],
            "inter_link_cost": {
                f"{i},{j}": c for (i, j), c in sorted(chain.inter_link_cost.items())
            },
            "target_distribution": list(chain.target_distribution),
        }
    )


def chain_from_json(text: str) -> DomainChain:
    raw = json.loads(text)
    domains = [
        Domain(
            int(d["index"]),
            float(d["cpu_cost"]),
            float(d["ram_cost"]),
            float(d["link_cost"]),
            float(d.get("vnf_latency", 0.0)),
        )
        for d in raw["domains"]
    ]
    inter = {}
    for key, c in raw["inter_link_cost"].items():
        i, j = (int(x) for x in key.split(","))
        inter[(i, j)] = float(c)
    return DomainChain(domains, inter, tuple(float(p) for p in raw["target_distribution"]))


def save_chain(chain: DomainChain, path) -> None:
    Path(path).write_text(chain_to_json(chain), encoding="utf-8")


def load_chain(path) -> DomainChain:
    return chain_from_json(Path(path).read_text(encoding="utf-8"))


def mask_to_json(mask: AssignmentMask) -> str:
    return _dump({"fixed": {str(k): v for k, v in sorted(mask.fixed.items())}})


def mask_from_json(text: str) -> AssignmentMask:
    raw = json.loads(text)
    return AssignmentMask({int(k): int(v) for k, v in raw.get("fixed", {}).items()})
