"""Benchmark harness: corpus builder, solver comparison, sweeps, and ablations.

Every artifact written here is byte-reproducible from its seeds; wall-clock
measurements are therefore kept out of the primary report files and emitted
through a separate timing side channel (``timing_dict``/``*.timing.json``).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ailp import solve_ailp
from .bnb import BnbConfig, solve_bnb
from .costs import (
    ObjectiveWeights,
    check_feasibility,
    kl_divergence,
    normalization_bounds,
    objective,
)
from .gnn import GnnModel, TrainConfig, calibrate_staircase_cuts, infer_with_repair, train
from .graphs import (
    Assignment,
    DeploymentState,
    DomainChain,
    VnfFg,
    generate_random_dag,
    load_graph,
    save_graph,
)

__all__ = [
    "CorpusSpec",
    "build_corpus",
    "load_corpus",
    "InstanceRow",
    "ComparisonReport",
    "run_comparison",
    "sweep_hyperparams",
    "sample_kl_distribution",
    "run_ablations",
    "default_train_fn",
    "write_json",
]

CORPUS_SCHEMA = "corpus/v1"


@dataclass
class CorpusSpec:
    count: int
    node_choices: tuple[int, ...] = (10, 15, 20)
    edge_choices: tuple[int, ...] = (15, 30, 60)
    cpu_levels: tuple[int, ...] = (2, 4, 8, 16)
    ram_levels: tuple[int, ...] = (8, 16, 32, 64)
    bw_levels: tuple[float, ...] = (100, 200, 500, 1000)
    seed: int = 0

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError("count must be positive")
        for name in ("node_choices", "edge_choices", "cpu_levels", "ram_levels", "bw_levels"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def build_corpus(spec: CorpusSpec, out_dir) -> list[Path]:
    """Generate ``spec.count`` random slice graphs plus a manifest.

    Node and edge counts are sampled per graph from the choice sets; rebuilding
    with the same seed produces byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    entries = []
    paths = []
    for i in range(spec.count):
        n = int(rng.choice(spec.node_choices))
        e = int(rng.choice(spec.edge_choices))
        gseed = int(rng.integers(0, 2**31 - 1))
        g = generate_random_dag(n, e, spec.cpu_levels, spec.ram_levels, spec.bw_levels, gseed)
        fname = f"graph_{i:04d}.json"
        save_graph(g, out / fname)
        paths.append(out / fname)
        entries.append({"file": fname, "seed": gseed, "nodes": g.num_nodes(), "edges": g.num_edges()})
    manifest = {
        "schema": CORPUS_SCHEMA,
        "count": spec.count,
        "seed": spec.seed,
        "node_choices": list(spec.node_choices),
        "edge_choices": list(spec.edge_choices),
        "cpu_levels": list(spec.cpu_levels),
        "ram_levels": list(spec.ram_levels),
        "bw_levels": list(spec.bw_levels),
        "graphs": entries,
    }
    write_json(out / "manifest.json", manifest)
    return paths


def load_corpus(corpus_dir) -> list[tuple[str, VnfFg]]:
    """(file name, graph) pairs in manifest order."""
    root = Path(corpus_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("schema") != CORPUS_SCHEMA:
        raise ValueError(f"unsupported corpus schema: {manifest.get('schema')!r}")
    return [(entry["file"], load_graph(root / entry["file"])) for entry in manifest["graphs"]]


@dataclass
class InstanceRow:
    graph: str
    solver: str
    nodes: int
    edges: int
    dc: float
    dl: float
    ic: float
    raw_cost: float
    kl: float
    objective: float
    feasible: bool
    status: str
    seconds: float  # timing side channel; excluded from deterministic output

    def to_dict(self) -> dict:
        return {
            "graph": self.graph,
            "solver": self.solver,
            "nodes": self.nodes,
            "edges": self.edges,
            "dc": self.dc,
            "dl": self.dl,
            "ic": self.ic,
            "raw_cost": self.raw_cost,
            "kl": self.kl,
            "objective": self.objective,
            "feasible": self.feasible,
            "status": self.status,
        }


@dataclass
class ComparisonReport:
    weights: dict
    sequential: bool
    solvers: dict[str, dict]
    rows: list[InstanceRow]

    def to_dict(self) -> dict:
        return {
            "schema": "compare-report/v1",
            "weights": self.weights,
            "sequential": self.sequential,
            "solvers": self.solvers,
            "instances": [r.to_dict() for r in self.rows],
        }

    def timing_dict(self) -> dict:
        per_solver: dict[str, dict] = {}
        for name in self.solvers:
            secs = [r.seconds for r in self.rows if r.solver == name]
            per_solver[name] = {
                "total_seconds": sum(secs),
                "mean_seconds": sum(secs) / len(secs) if secs else 0.0,
            }
        return {
            "schema": "compare-timing/v1",
            "solvers": per_solver,
            "instances": [
                {"graph": r.graph, "solver": r.solver, "seconds": r.seconds} for r in self.rows
            ],
        }

    def csv_text(self) -> str:
        header = "graph,solver,nodes,edges,dc,dl,ic,raw_cost,kl,objective,feasible"
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.graph},{r.solver},{r.nodes},{r.edges},{r.dc!r},{r.dl!r},{r.ic!r},"
                f"{r.raw_cost!r},{r.kl!r},{r.objective!r},{int(r.feasible)}"
            )
        return "\n".join(lines) + "\n"


def run_comparison(
    corpus: list[tuple[str, VnfFg]],
    chain: DomainChain,
    w: ObjectiveWeights,
    solvers: list[str],
    model: GnnModel | None = None,
    budgets: dict[str, BnbConfig] | None = None,
    sequential: bool = False,
) -> ComparisonReport:
    """Run each solver over the corpus and aggregate costs, KL, and feasibility.

    Each graph is solved against a fresh deployment state by default; with
    ``sequential`` the per-solver state accumulates assigned CPUs in corpus
    order, so later slices see earlier deployments. Per-instance failures are
    recorded, not raised. Solver names: ``bnb``, ``ailp``, ``gnnp``.
    """
    known = {"bnb", "ailp", "gnnp"}
    for s in solvers:
        if s not in known:
            raise ValueError(f"unknown solver {s!r}")
    if "gnnp" in solvers and model is None:
        raise ValueError("the gnnp solver needs a trained model")
    budgets = budgets or {}
    m = chain.num_domains()
    rows: list[InstanceRow] = []
    summaries: dict[str, dict] = {}

    for solver in solvers:
        state = DeploymentState.empty(m)
        agg_cpu = np.zeros(m)
        total_cpu = 0.0
        for name, g in corpus:
            bounds = normalization_bounds(g, chain)
            t0 = time.perf_counter()
            status = "ok"
            assignment = None
            try:
                if solver == "gnnp":
                    assignment = infer_with_repair(model, g, chain)
                else:
                    fn = solve_bnb if solver == "bnb" else solve_ailp
                    res = fn(g, chain, w, state=state, config=budgets.get(solver))
                    assignment = res.assignment
                    status = res.status
            except Exception as exc:  # recorded per instance, not fatal
                status = f"error: {exc}"
            seconds = time.perf_counter() - t0
            if assignment is None:
                rows.append(
                    InstanceRow(name, solver, g.num_nodes(), g.num_edges(),
                                math.nan, math.nan, math.nan, math.nan, math.nan,
                                math.nan, False, status or "infeasible", seconds)
                )
                continue
            val = objective(g, chain, assignment, w, bounds, state)
            feasible = check_feasibility(g, chain, assignment).feasible
            rows.append(
                InstanceRow(
                    name, solver, g.num_nodes(), g.num_edges(),
                    val.raw.dc, val.raw.dl, val.raw.ic, val.raw.total,
                    val.kl, val.total, feasible, status, seconds,
                )
            )
            for i, d in enumerate(assignment.domain_of):
                agg_cpu[d] += g.nodes[i].cpu
            total_cpu += sum(n.cpu for n in g.nodes)
            if sequential:
                occ = list(state.occupied_cpu)
                for i, d in enumerate(assignment.domain_of):
                    occ[d] += g.nodes[i].cpu
                state = DeploymentState(tuple(occ))
        ok_rows = [r for r in rows if r.solver == solver and r.status != "infeasible" and not r.status.startswith("error")]
        agg_kl = kl_divergence(agg_cpu / total_cpu, chain.target_distribution) if total_cpu > 0 else math.nan
        summaries[solver] = {
            "solved": len(ok_rows),
            "total_cost": sum(r.raw_cost for r in ok_rows),
            "mean_kl": sum(r.kl for r in ok_rows) / len(ok_rows) if ok_rows else math.nan,
            "aggregate_kl": agg_kl,
            "mean_objective": sum(r.objective for r in ok_rows) / len(ok_rows) if ok_rows else math.nan,
            "feasibility_rate": (
                sum(1 for r in ok_rows if r.feasible) / len(ok_rows) if ok_rows else 0.0
            ),
            "aggregate_distribution": [float(x) for x in agg_cpu / total_cpu] if total_cpu else [],
        }

    weights = {"alpha": w.alpha, "beta": w.beta, "gamma": w.gamma, "delta": w.delta, "mu": w.mu}
    return ComparisonReport(weights=weights, sequential=sequential, solvers=summaries, rows=rows)


def _boxplot_stats(values: list[float]) -> dict:
    v = np.asarray(values, dtype=float)
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return {"min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]}


def sweep_hyperparams(
    train_set: list[VnfFg],
    val_set: list[VnfFg],
    chain: DomainChain,
    w: ObjectiveWeights,
    latent_grid: tuple[int, ...] = (5, 10, 25, 50),
    layer_grid: tuple[int, ...] = (1, 3, 5, 7),
    base_latent: int = 10,
    base_layers: int = 3,
    repeats: int = 10,
    seed: int = 0,
    train_config: TrainConfig | None = None,
) -> dict:
    """Repeated seeded trainings per hyperparameter setting, boxplot statistics out.

    One axis varies the latent size at fixed depth, the other varies the depth
    at fixed latent size; each setting runs ``repeats`` trainings with paired
    seeds and records the distribution of best validation true objectives.
    """
    if repeats <= 0:
        raise ValueError("repeats must be positive")
    template = train_config or TrainConfig()
    # one calibration serves every run: it depends only on the corpus and weights
    cuts = calibrate_staircase_cuts(train_set, chain, w, template.standardize)
    settings = [("latent", latent, base_layers) for latent in latent_grid]
    settings += [("layers", base_latent, layers) for layers in layer_grid]
    results = []
    for axis, latent, layers in settings:
        scores = []
        for r in range(repeats):
            run_seed = seed + r
            model = GnnModel.create(chain.num_domains(), latent, layers, seed=run_seed, cuts=cuts)
            cfg = TrainConfig(
                learning_rate=template.learning_rate,
                epochs=template.epochs,
                optimizer=template.optimizer,
                seed=run_seed,
                patience=template.patience,
                standardize=template.standardize,
                calibrate_init=False,
            )
            _, history = train(model, train_set, val_set, chain, w, cfg)
            scores.append(history.best_val_true)
        results.append(
            {
                "axis": axis,
                "latent_size": latent,
                "num_layers": layers,
                "scores": scores,
                "stats": _boxplot_stats(scores),
            }
        )
    return {"schema": "sweep-report/v1", "repeats": repeats, "seed": seed, "settings": results}


def sample_kl_distribution(n_samples: int, p, seed: int = 0, bins: int = 40) -> dict:
    """KL divergence of uniformly drawn simplex points against ``p``.

    Uniformity on the simplex comes from a symmetric Dirichlet with unit
    concentration. Histogram range is [0, ln(1/min p)], the largest value any
    distribution can reach against ``p``.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    p = np.asarray(p, dtype=float)
    rng = np.random.default_rng(seed)
    draws = rng.dirichlet(np.ones(len(p)), size=n_samples)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(draws > 0, draws * np.log(draws / p), 0.0)
    kls = terms.sum(axis=1)
    top = math.log(1.0 / p.min())
    counts, edges = np.histogram(kls, bins=bins, range=(0.0, top))
    return {
        "schema": "klsample-report/v1",
        "samples": n_samples,
        "target": [float(x) for x in p],
        "mean": float(kls.mean()),
        "median": float(np.median(kls)),
        "max": float(kls.max()),
        "bin_edges": [float(x) for x in edges],
        "counts": [int(c) for c in counts],
    }


def default_train_fn(
    train_set: list[VnfFg],
    val_set: list[VnfFg],
    chain: DomainChain,
    template: TrainConfig | None = None,
    latent_size: int = 10,
    num_layers: int = 3,
):
    """Training routine for ablation pairs: (weights, seed, standardize) -> model."""
    template = template or TrainConfig()

    def train_fn(w: ObjectiveWeights, seed: int, standardize: bool = True) -> GnnModel:
        model = GnnModel.create(chain.num_domains(), latent_size, num_layers, seed=seed)
        cfg = TrainConfig(
            learning_rate=template.learning_rate,
            epochs=template.epochs,
            optimizer=template.optimizer,
            seed=seed,
            patience=template.patience,
            standardize=standardize,
        )
        trained, _ = train(model, train_set, val_set, chain, w, cfg)
        return trained

    return train_fn


def _eval_model(model: GnnModel, corpus: list[tuple[str, VnfFg]], chain: DomainChain):
    """Mean per-graph KL, mean CPU cost, cloud share, aggregate distribution."""
    m = chain.num_domains()
    kls = []
    cpu_costs = []
    agg = np.zeros(m)
    total_cpu = 0.0
    for _, g in corpus:
        a = infer_with_repair(model, g, chain)
        r = np.zeros(m)
        cost = 0.0
        for i, d in enumerate(a.domain_of):
            r[d] += g.nodes[i].cpu
            cost += chain.domains[d].cpu_cost * g.nodes[i].cpu
        gc = r.sum()
        kls.append(kl_divergence(r / gc, chain.target_distribution))
        cpu_costs.append(cost)
        agg += r
        total_cpu += gc
    dist = agg / total_cpu
    return {
        "mean_kl": float(np.mean(kls)),
        "mean_cpu_cost": float(np.mean(cpu_costs)),
        "cloud_share": float(dist[-1]),
        "distribution": [float(x) for x in dist],
        "extreme_mass": float(dist[0] + dist[-1]),
    }


def run_ablations(
    corpus: list[tuple[str, VnfFg]],
    chain: DomainChain,
    base_w: ObjectiveWeights,
    train_fn,
    seed: int = 0,
) -> dict:
    """Four paired GNNP runs differing in exactly one knob from the baseline.

    (A) halved vs. baseline KL weight, (B) standardization off vs. on,
    (C) compute-cost weight doubled, (D) inter-domain weight doubled. All runs
    share seeds so the only difference is the varied knob.
    """
    half_delta = ObjectiveWeights(base_w.alpha, base_w.beta, base_w.gamma, base_w.delta / 2, base_w.mu)
    double_alpha = ObjectiveWeights(base_w.alpha * 2, base_w.beta, base_w.gamma, base_w.delta, base_w.mu)
    double_gamma = ObjectiveWeights(base_w.alpha, base_w.beta, base_w.gamma * 2, base_w.delta, base_w.mu)

    base = _eval_model(train_fn(base_w, seed), corpus, chain)
    low_delta = _eval_model(train_fn(half_delta, seed), corpus, chain)
    unstd = _eval_model(train_fn(base_w, seed, False), corpus, chain)
    alpha2 = _eval_model(train_fn(double_alpha, seed), corpus, chain)
    gamma2 = _eval_model(train_fn(double_gamma, seed), corpus, chain)

    return {
        "schema": "ablation-report/v1",
        "seed": seed,
        "baseline": base,
        "delta_doubling": {
            "kl_low_delta": low_delta["mean_kl"],
            "kl_baseline": base["mean_kl"],
            "kl_dropped": base["mean_kl"] < low_delta["mean_kl"],
        },
        "standardization": {
            "kl_standardized": base["mean_kl"],
            "kl_unstandardized": unstd["mean_kl"],
            "kl_worse_without": unstd["mean_kl"] > base["mean_kl"],
        },
        "alpha_doubling": {
            "cpu_cost_baseline": base["mean_cpu_cost"],
            "cpu_cost_doubled": alpha2["mean_cpu_cost"],
            "cloud_share_baseline": base["cloud_share"],
            "cloud_share_doubled": alpha2["cloud_share"],
        },
        "gamma_doubling": {
            "distribution_baseline": base["distribution"],
            "distribution_doubled": gamma2["distribution"],
            "extreme_mass_baseline": base["extreme_mass"],
            "extreme_mass_doubled": gamma2["extreme_mass"],
            "kl_doubled": gamma2["mean_kl"],
        },
    }
