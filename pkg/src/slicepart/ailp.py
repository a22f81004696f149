"""Approximate integer linear programming solver.

The quadratic binary program behind the objective is rewritten as a linear one:
edge products become auxiliary binaries y(i, mi, j, mj) and the per-domain
square inside the load-balance term becomes node-pair binaries z(n, n', m),
both with McCormick linking constraints (exact at binary points). The
x·log x inside the KL divergence is replaced by its second-order Taylor
expansion around ``a``, making the whole objective linear in x, y, z.

The linearized model is minimized with the branch-and-bound engine, branching
on x in topological order (y and z are implied at integral points, so the
search space is unchanged). Returned objective values are always re-evaluated
under the true objective so solver comparisons stay apples-to-apples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bnb import BnbConfig, BnbResult, BnbStats, _Instance, _search
from .costs import (
    NormalizationBounds,
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
    InfeasibleMaskError,
    VnfFg,
)

__all__ = ["TaylorParams", "LinearizedProblem", "taylor_xlogx", "linearize", "solve_ailp"]


@dataclass
class TaylorParams:
    """Expansion point for the second-order approximation of r*log(r)."""

    a: float = 0.3

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError("expansion point must lie in (0, 1)")


def taylor_xlogx(r: float, a: float) -> float:
    """Second-order Taylor expansion of r*log(r) around r = a (natural log)."""
    if a <= 0:
        raise ValueError("expansion point must be positive")
    d = r - a
    return a * math.log(a) + d * (math.log(a) + 1.0) + d * d / (2.0 * a)


@dataclass
class LinearizedProblem:
    """Binary linear model equivalent to the objective up to the Taylor KL term.

    Variables are indexed 0..num_vars-1 in the order x, y, z. ``constraints``
    hold (name, lhs_terms, sense, rhs) with sense in {"<=", ">=", "="}.
    """

    num_nodes: int
    num_domains: int
    num_edges: int
    edge_ends: list[tuple[int, int]]
    var_names: list[str]
    x_index: dict[tuple[int, int], int]
    y_index: dict[tuple[int, int, int], int]
    z_index: dict[tuple[int, int, int], int]
    obj_coef: np.ndarray
    constant: float
    constraints: list[tuple[str, list[tuple[int, float]], str, float]]
    forced_zero_y: list[int]
    fixed_x: dict[int, int] = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    def implied_point(self, domain_of) -> np.ndarray:
        """Binary point (x one-hot, y and z as the implied products)."""
        v = np.zeros(self.num_vars)
        for n, d in enumerate(domain_of):
            v[self.x_index[(n, d)]] = 1.0
        for (e, mi, mj), k in self.y_index.items():
            i, j = self.edge_ends[e]
            if domain_of[i] == mi and domain_of[j] == mj:
                v[k] = 1.0
        for (n1, n2, m), k in self.z_index.items():
            if domain_of[n1] == m and domain_of[n2] == m:
                v[k] = 1.0
        return v

    def evaluate_assignment(self, domain_of) -> float:
        """Linear objective (plus constant) at the binary point implied by a
        hard assignment."""
        return float(self.obj_coef @ self.implied_point(domain_of)) + self.constant

    def to_lp_text(self) -> str:
        """Serialize in LP text format for inspection by external solvers."""
        lines = [f"\\ constant offset (add to objective value): {self.constant!r}"]
        lines.append("Minimize")
        terms = []
        for k, c in enumerate(self.obj_coef):
            if c != 0.0:
                sign = "+" if c >= 0 else "-"
                terms.append(f"{sign} {abs(c)!r} {self.var_names[k]}")
        body = " ".join(terms).lstrip("+ ") or "0"
        lines.append(f" obj: {body}")
        lines.append("Subject To")
        for name, lhs, sense, rhs in self.constraints:
            parts = []
            for k, c in lhs:
                sign = "+" if c >= 0 else "-"
                parts.append(f"{sign} {abs(c)!r} {self.var_names[k]}")
            op = {"<=": "<=", ">=": ">=", "=": "="}[sense]
            lines.append(f" {name}: {' '.join(parts).lstrip('+ ')} {op} {rhs!r}")
        lines.append("Bounds")
        for k in self.forced_zero_y:
            lines.append(f" {self.var_names[k]} = 0")
        for k, val in sorted(self.fixed_x.items()):
            lines.append(f" {self.var_names[k]} = {val}")
        lines.append("Binary")
        for name in self.var_names:
            lines.append(f" {name}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def linearize(
    g: VnfFg,
    chain: DomainChain,
    w: ObjectiveWeights,
    bounds: NormalizationBounds,
    state: DeploymentState | None = None,
    taylor: TaylorParams | None = None,
    mask: AssignmentMask | None = None,
) -> LinearizedProblem:
    """Build the binary linear model: standardized costs over x/y, Taylor KL over x/z."""
    if taylor is None:
        taylor = TaylorParams()
    m = chain.num_domains()
    n = g.num_nodes()
    if state is None:
        state = DeploymentState.empty(m)
    a = taylor.a

    idx = g.node_index()
    dc_den = bounds.dc_max - bounds.dc_min
    sdc = w.alpha / dc_den if dc_den > 0 else 0.0
    sdl = w.beta / bounds.dl_max if bounds.dl_max > 0 else 0.0
    sic = w.gamma / bounds.ic_max if bounds.ic_max > 0 else 0.0
    inter = inter_cost_matrix(chain)
    link = [d.link_cost for d in chain.domains]

    var_names: list[str] = []
    x_index: dict[tuple[int, int], int] = {}
    y_index: dict[tuple[int, int, int], int] = {}
    z_index: dict[tuple[int, int, int], int] = {}

    def new_var(name: str) -> int:
        var_names.append(name)
        return len(var_names) - 1

    for i in range(n):
        for d in range(m):
            x_index[(i, d)] = new_var(f"x_{i}_{d}")
    edge_ends = []
    for e, edge in enumerate(g.edges):
        i, j = idx[edge.src], idx[edge.dst]
        edge_ends.append((i, j))
        for mi in range(m):
            for mj in range(m):
                y_index[(e, mi, mj)] = new_var(f"y_{e}_{mi}_{mj}")
    for n1 in range(n):
        for n2 in range(n1 + 1, n):
            for d in range(m):
                z_index[(n1, n2, d)] = new_var(f"z_{n1}_{n2}_{d}")

    obj = np.zeros(len(var_names))
    cpu = [node.cpu for node in g.nodes]
    ram = [node.ram for node in g.nodes]
    total_cpu = float(sum(state.occupied_cpu) + sum(cpu))
    q = [c / total_cpu for c in cpu]
    rho = [occ / total_cpu for occ in state.occupied_cpu]
    big_l = [math.log(a / p) for p in chain.target_distribution]

    constant = -sdc * bounds.dc_min
    for d in range(m):
        constant += w.delta * (-a / 2.0 + rho[d] * big_l[d] + rho[d] * rho[d] / (2.0 * a))
    for i in range(n):
        for d in range(m):
            coef = sdc * (chain.domains[d].cpu_cost * cpu[i] + chain.domains[d].ram_cost * ram[i])
            coef += w.delta * q[i] * (big_l[d] + (2.0 * rho[d] + q[i]) / (2.0 * a))
            obj[x_index[(i, d)]] = coef
    for e, edge in enumerate(g.edges):
        for mi in range(m):
            for mj in range(m):
                c = sdl * edge.bw * link[mi] if mi == mj else sic * edge.bw * inter[mi][mj]
                obj[y_index[(e, mi, mj)]] = c
    for (n1, n2, d), k in z_index.items():
        obj[k] = w.delta * q[n1] * q[n2] / a

    constraints: list[tuple[str, list[tuple[int, float]], str, float]] = []
    for i in range(n):
        lhs = [(x_index[(i, d)], 1.0) for d in range(m)]
        constraints.append((f"assign_{i}", lhs, "=", 1.0))
    forced_zero_y: list[int] = []
    for e, (i, j) in enumerate(edge_ends):
        for mi in range(m):
            for mj in range(m):
                k = y_index[(e, mi, mj)]
                xi, xj = x_index[(i, mi)], x_index[(j, mj)]
                constraints.append((f"ylink_a_{e}_{mi}_{mj}", [(k, 1.0), (xi, -1.0)], "<=", 0.0))
                constraints.append((f"ylink_b_{e}_{mi}_{mj}", [(k, 1.0), (xj, -1.0)], "<=", 0.0))
                constraints.append(
                    (f"ylink_c_{e}_{mi}_{mj}", [(k, 1.0), (xi, -1.0), (xj, -1.0)], ">=", -1.0)
                )
                if mi > mj:
                    constraints.append((f"order_{e}_{mi}_{mj}", [(k, 1.0)], "=", 0.0))
                    forced_zero_y.append(k)
    for (n1, n2, d), k in z_index.items():
        x1, x2 = x_index[(n1, d)], x_index[(n2, d)]
        constraints.append((f"zlink_a_{n1}_{n2}_{d}", [(k, 1.0), (x1, -1.0)], "<=", 0.0))
        constraints.append((f"zlink_b_{n1}_{n2}_{d}", [(k, 1.0), (x2, -1.0)], "<=", 0.0))
        constraints.append(
            (f"zlink_c_{n1}_{n2}_{d}", [(k, 1.0), (x1, -1.0), (x2, -1.0)], ">=", -1.0)
        )

    fixed_x: dict[int, int] = {}
    if mask is not None:
        for nid, d in sorted(mask.fixed.items()):
            i = idx[nid]
            for dd in range(m):
                fixed_x[x_index[(i, dd)]] = 1 if dd == d else 0

    return LinearizedProblem(
        num_nodes=n,
        num_domains=m,
        num_edges=g.num_edges(),
        edge_ends=edge_ends,
        var_names=var_names,
        x_index=x_index,
        y_index=y_index,
        z_index=z_index,
        obj_coef=obj,
        constant=constant,
        constraints=constraints,
        forced_zero_y=forced_zero_y,
        fixed_x=fixed_x,
    )


class _TaylorKl:
    """Surrogate load-balance term for the search engine.

    phi_m(r) = -a/2 + r*log(a/p_m) + r^2/(2a) is the Taylor-expanded
    r*log(r) minus r*log(p_m); convex per domain, so the bound clamps the
    vertex into the reachable ratio interval.
    """

    needs_reach = True

    def __init__(self, delta: float, a: float, p, total_cpu: float):
        self.delta = delta
        self.a = a
        self.total = total_cpu
        self.big_l = [math.log(a / pm) for pm in p]
        self.vertex = [-a * l for l in self.big_l]

    def _phi(self, m: int, r: float) -> float:
        return -self.a / 2.0 + r * self.big_l[m] + r * r / (2.0 * self.a)

    def bound(self, cpu_dom, reach) -> float:
        if self.delta == 0.0:
            return 0.0
        s = 0.0
        for m in range(len(self.big_l)):
            rlo = cpu_dom[m] / self.total
            rhi = (cpu_dom[m] + reach[m]) / self.total
            r = self.vertex[m]
            if r < rlo:
                r = rlo
            elif r > rhi:
                r = rhi
            s += self._phi(m, r)
        return self.delta * s

    def leaf(self, cpu_dom) -> float:
        if self.delta == 0.0:
            return 0.0
        s = 0.0
        for m in range(len(self.big_l)):
            s += self._phi(m, cpu_dom[m] / self.total)
        return self.delta * s


def solve_ailp(
    g: VnfFg,
    chain: DomainChain,
    w: ObjectiveWeights,
    mask: AssignmentMask | None = None,
    state: DeploymentState | None = None,
    taylor: TaylorParams | None = None,
    config: BnbConfig | None = None,
) -> BnbResult:
    """Minimize the Taylor-linearized objective; report under the true one.

    The search is the branch-and-bound engine with the KL term swapped for its
    convex surrogate, which is exactly the linearized model restricted to
    integral points. With delta = 0 the surrogate vanishes and the result
    matches ``solve_bnb``.
    """
    if taylor is None:
        taylor = TaylorParams()
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
    kl = _TaylorKl(w.delta, taylor.a, inst.p, inst.total_cpu)
    best, stats = _search(inst, kl, config)
    a = Assignment.hard(inst.to_positional(best))
    value = objective(g, chain, a, w, bounds, inst.state)
    status = "optimal" if stats.proven_optimal else "feasible"
    return BnbResult(assignment=a, objective=value, stats=stats, status=status)
