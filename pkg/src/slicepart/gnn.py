"""Graph-convolutional partitioner trained without labels.

Each node carries two input features: a demand blend (cpu and ram scaled to
their level maxima) and a CPU-mass coordinate, i.e. where the node's
(depth, cpu, ram) group sits in the cumulative CPU distribution of its graph
when groups are swept in topological depth order. The coordinate is strictly
increasing along every edge, so a monotone map from it to domain indices is
always ordering-feasible; nodes in automorphic positions share a coordinate.

The network is the standard symmetric-normalized GCN over the undirected
skeleton (self-loops included, no inter-layer nonlinearity), with a softmax
head that reads the final latent concatenated with the raw input features.
Multi-hop averaging destroys the ordering information carried by the mass
coordinate, hence the skip: the head sees the unsmoothed coordinate while the
GCN layers contribute neighborhood demand context.

Models are initialized as a sharp "staircase": the head maps the mass
coordinate to domains through cut points, so the initial argmax splits each
graph's CPU mass across the chain. ``train`` first fits those cut points to
the training set under the given objective weights, then runs per-graph
gradient steps on the relaxed objective (standardized costs + KL + ordering
penalty) and keeps the parameters with the best validation true objective.
Gradients are exact and hand-derived; tests check every parameter against
central finite differences. Inference takes the per-row argmax and repairs
any ordering violations with a topological sweep.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costs import (
    CostContext,
    NormalizationBounds,
    ObjectiveWeights,
    normalization_bounds,
    objective,
)
from .graphs import (
    Assignment,
    AssignmentMask,
    DeploymentState,
    DomainChain,
    VnfFg,
    domain_caps,
    topological_order,
)

__all__ = [
    "GnnModel",
    "TrainConfig",
    "TrainHistory",
    "forward",
    "loss_relaxed",
    "backward",
    "train",
    "infer_with_repair",
    "calibrate_staircase_cuts",
    "save_model",
    "load_model",
]

FEAT_CPU_SCALE = 16.0
FEAT_RAM_SCALE = 64.0
INPUT_DIM = 2
CHECKPOINT_SCHEMA = "gnnp-checkpoint/1"


@dataclass
class GnnModel:
    """Per-layer GCN weights plus a softmax head over [latent, input features]."""

    layer_ws: list[np.ndarray]
    layer_bs: list[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray
    input_dim: int
    latent_size: int
    num_layers: int
    num_domains: int
    staircase_cuts: tuple[float, ...] = ()

    @classmethod
    def create(
        cls,
        num_domains: int,
        latent_size: int = 10,
        num_layers: int = 3,
        seed: int = 0,
        cuts: tuple[float, ...] | None = None,
        sharpness: float = 20.0,
        noise_scale: float = 0.1,
    ) -> "GnnModel":
        """Staircase initialization: the head starts as a sharp monotone map from
        the mass coordinate to domains with breakpoints ``cuts`` (defaults to an
        even split), plus scaled Glorot noise everywhere."""
        if num_layers < 1 or latent_size < 1:
            raise ValueError("num_layers and latent_size must be positive")
        rng = np.random.default_rng(seed)
        if cuts is None:
            cuts = tuple(m / num_domains for m in range(1, num_domains))
        if len(cuts) != num_domains - 1 or any(
            cuts[i] > cuts[i + 1] for i in range(len(cuts) - 1)
        ):
            raise ValueError("cuts must be num_domains - 1 nondecreasing values")

        def glorot(fan_in, fan_out, scale=1.0):
            s = math.sqrt(6.0 / (fan_in + fan_out)) * scale
            return rng.uniform(-s, s, size=(fan_in, fan_out))

        dims = [INPUT_DIM] + [latent_size] * num_layers
        ws = [glorot(dims[k], dims[k + 1], noise_scale) for k in range(num_layers)]
        bs = [np.zeros(dims[k + 1]) for k in range(num_layers)]
        head_w, head_b = _staircase_head(
            latent_size, num_domains, cuts, sharpness, noise_scale, rng
        )
        return cls(
            layer_ws=ws,
            layer_bs=bs,
            head_w=head_w,
            head_b=head_b,
            input_dim=INPUT_DIM,
            latent_size=latent_size,
            num_layers=num_layers,
            num_domains=num_domains,
            staircase_cuts=tuple(float(c) for c in cuts),
        )

    def copy(self) -> "GnnModel":
        return GnnModel(
            layer_ws=[w.copy() for w in self.layer_ws],
            layer_bs=[b.copy() for b in self.layer_bs],
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
            input_dim=self.input_dim,
            latent_size=self.latent_size,
            num_layers=self.num_layers,
            num_domains=self.num_domains,
            staircase_cuts=self.staircase_cuts,
        )

    def params(self) -> list[np.ndarray]:
        return [*self.layer_ws, *self.layer_bs, self.head_w, self.head_b]


def _staircase_head(latent_size, num_domains, cuts, sharpness, noise_scale, rng):
    """Head weights whose argmax is a staircase in the mass-coordinate channel.

    Domain m wins on the coordinate interval (cuts[m-1], cuts[m]): logit lines
    have slopes sharpness*m and consecutive intersections at the cuts.
    """
    s = math.sqrt(6.0 / (latent_size + INPUT_DIM + num_domains)) * noise_scale
    head_w = rng.uniform(-s, s, size=(latent_size + INPUT_DIM, num_domains))
    head_b = np.zeros(num_domains)
    for m in range(num_domains):
        head_w[latent_size + 1, m] += sharpness * m
        if m > 0:
            head_b[m] = head_b[m - 1] - sharpness * cuts[m - 1]
    return head_w, head_b


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int = 20
    standardize: bool = True
    calibrate_init: bool = True  # fit staircase cuts on the training set first
    penalty_warmup_frac: float = 0.0  # optional mu ramp over the first epochs

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.patience <= 0:
            raise ValueError("learning_rate, epochs, and patience must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if not 0 <= self.penalty_warmup_frac <= 1:
            raise ValueError("penalty_warmup_frac must lie in [0, 1]")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_true_objective: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1  # -1 when no epoch beat the calibrated starting point
    best_val_true: float = math.inf

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_true_objective": self.val_true_objective,
            "epoch_seconds": self.epoch_seconds,
            "best_epoch": self.best_epoch,
            "best_val_true": self.best_val_true,
        }


def _node_depths(g: VnfFg) -> list[int]:
    idx = g.node_index()
    depth = [0] * g.num_nodes()
    preds: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    for e in g.edges:
        preds[e.dst].append(e.src)
    for nid in topological_order(g):
        i = idx[nid]
        for p in preds[nid]:
            depth[i] = max(depth[i], depth[idx[p]] + 1)
    return depth


def mass_coordinate(g: VnfFg) -> np.ndarray:
    """Cumulative-CPU position of each node's (depth, cpu, ram) group.

    Groups are swept in ascending (depth, cpu, ram) order; every node in a
    group receives the midpoint of the group's CPU mass interval. Strictly
    increasing along edges (depth increases), identical for automorphic nodes.
    """
    depth = _node_depths(g)
    total = float(sum(n.cpu for n in g.nodes))
    groups: dict[tuple[int, int, int], list[int]] = {}
    for i, n in enumerate(g.nodes):
        groups.setdefault((depth[i], n.cpu, n.ram), []).append(i)
    q = np.zeros(g.num_nodes())
    acc = 0.0
    for key in sorted(groups):
        members = groups[key]
        mass = sum(g.nodes[i].cpu for i in members)
        mid = (acc + mass / 2.0) / total
        for i in members:
            q[i] = mid
        acc += mass
    return q


def _graph_inputs(g: VnfFg) -> tuple[np.ndarray, np.ndarray]:
    """(features, normalized adjacency): demand blend + mass coordinate, and
    the symmetric D^-1/2 (A+I) D^-1/2 over the undirected skeleton."""
    n = g.num_nodes()
    idx = g.node_index()
    q = mass_coordinate(g)
    feats = np.array(
        [
            [(node.cpu / FEAT_CPU_SCALE + node.ram / FEAT_RAM_SCALE) / 2.0, q[i]]
            for i, node in enumerate(g.nodes)
        ]
    )
    adj = np.eye(n)
    for e in g.edges:
        i, j = idx[e.src], idx[e.dst]
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    deg = adj.sum(axis=1)
    dinv = 1.0 / np.sqrt(deg)
    return feats, adj * np.outer(dinv, dinv)


def _forward_pass(model: GnnModel, feats: np.ndarray, ahat: np.ndarray):
    """Returns (probs, cached layer inputs) for backprop."""
    hs = [feats]
    h = feats
    for w, b in zip(model.layer_ws, model.layer_bs):
        h = ahat @ (h @ w + b)
        hs.append(h)
    logits = np.hstack([h, feats]) @ model.head_w + model.head_b
    logits = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(logits)
    probs = ex / ex.sum(axis=1, keepdims=True)
    return probs, hs


def forward(model: GnnModel, g: VnfFg) -> Assignment:
    """Per-node domain probabilities (soft assignment, rows sum to 1)."""
    if model.input_dim != INPUT_DIM:
        raise ValueError(f"model expects {INPUT_DIM} input features per node")
    feats, ahat = _graph_inputs(g)
    probs, _ = _forward_pass(model, feats, ahat)
    return Assignment.soft(probs)


def loss_relaxed(
    soft: Assignment,
    g: VnfFg,
    chain: DomainChain,
    w: ObjectiveWeights,
    bounds: NormalizationBounds,
    state: DeploymentState | None = None,
    standardize: bool = True,
) -> float:
    """Relaxed training objective of a soft assignment (penalty included)."""
    return objective(g, chain, soft, w, bounds, state, standardize).total


@dataclass
class Gradients:
    layer_ws: list[np.ndarray]
    layer_bs: list[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray

    def params(self) -> list[np.ndarray]:
        return [*self.layer_ws, *self.layer_bs, self.head_w, self.head_b]


def backward(
    model: GnnModel,
    g: VnfFg,
    chain: DomainChain,
    w: ObjectiveWeights,
    bounds: NormalizationBounds,
    state: DeploymentState | None = None,
    standardize: bool = True,
    _ctx: CostContext | None = None,
    _inputs: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, Gradients]:
    """Loss and exact gradients of every parameter via reverse-mode differentiation."""
    feats, ahat = _inputs if _inputs is not None else _graph_inputs(g)
    ctx = _ctx if _ctx is not None else CostContext(g, chain, w, bounds, state, standardize)
    probs, hs = _forward_pass(model, feats, ahat)
    value, dprobs = ctx.soft_grad(probs)

    # softmax rows: dz = p ⊙ (dp − <dp, p>)
    dz = probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))
    gw_head = np.hstack([hs[-1], feats]).T @ dz
    gb_head = dz.sum(axis=0)
    dh = dz @ model.head_w[: model.latent_size].T
    gws: list[np.ndarray] = [None] * model.num_layers
    gbs: list[np.ndarray] = [None] * model.num_layers
    for k in range(model.num_layers - 1, -1, -1):
        ds = ahat @ dh  # Â is symmetric
        gws[k] = hs[k].T @ ds
        gbs[k] = ds.sum(axis=0)
        dh = ds @ model.layer_ws[k].T
    return value.total, Gradients(layer_ws=gws, layer_bs=gbs, head_w=gw_head, head_b=gb_head)


def calibrate_staircase_cuts(
    train_set: list[VnfFg],
    chain: DomainChain,
    w: ObjectiveWeights,
    standardize: bool = True,
    grid: int = 161,
    rounds: int = 2,
    start: tuple[float, ...] | None = None,
    max_graphs: int = 200,
) -> tuple[float, ...]:
    """Fit staircase cut points by coordinate descent on the mean true objective.

    Each candidate cut vector induces a hard assignment per graph (domain =
    number of cuts below the node's mass coordinate); the mean objective over
    the training set is minimized one cut at a time over a uniform grid. Large
    training sets are subsampled deterministically (evenly spaced) for speed.
    """
    m = chain.num_domains()
    if start is None:
        start = tuple(np.cumsum(chain.target_distribution)[:-1])
    cuts = [float(c) for c in start]
    candidates = np.linspace(0.0, 1.0, grid)
    if len(train_set) > max_graphs:
        step = len(train_set) / max_graphs
        train_set = [train_set[int(i * step)] for i in range(max_graphs)]
    compiled = []
    for g in train_set:
        q = mass_coordinate(g)
        bounds = normalization_bounds(g, chain)
        ctx = CostContext(g, chain, w, bounds, standardize=standardize)
        compiled.append((g, q, ctx))

    def mean_objective(cs) -> float:
        arr = np.asarray(cs)
        total = 0.0
        for g, q, ctx in compiled:
            dom = np.searchsorted(arr, q, side="left")
            total += ctx.hard_value(Assignment.hard(dom.tolist())).total
        return total / len(compiled)

    best = mean_objective(cuts)
    for _ in range(rounds):
        for k in range(m - 1):
            lo = cuts[k - 1] if k > 0 else 0.0
            hi = cuts[k + 1] if k + 1 < m - 1 else 1.0
            for c in candidates:
                if not lo <= c <= hi:
                    continue
                trial = list(cuts)
                trial[k] = float(c)
                val = mean_objective(trial)
                if val < best - 1e-12:
                    best = val
                    cuts = trial
    return tuple(cuts)


class _Adam:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1**self.t
        b2t = 1.0 - c.beta2**self.t
        for p, gr, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * gr
            v *= c.beta2
            v += (1 - c.beta2) * gr * gr
            p -= c.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + c.eps)


class _Sgd:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, params, grads) -> None:
        for p, gr in zip(params, grads):
            p -= self.cfg.learning_rate * gr


def train(
    model: GnnModel,
    train_set: list[VnfFg],
    val_set: list[VnfFg],
    chain: DomainChain,
    w: ObjectiveWeights,
    config: TrainConfig | None = None,
) -> tuple[GnnModel, TrainHistory]:
    """Staircase calibration followed by per-graph gradient descent.

    With ``calibrate_init`` the head staircase is re-anchored at cut points
    fitted to the training set under the given weights. Each epoch then
    shuffles the training graphs and takes one optimizer step per graph on the
    relaxed objective (normalization bounds are per graph; the deployment
    state is zero throughout training). Returns the parameters of the epoch
    with the best mean validation true objective, i.e. the hard objective of
    the repaired argmax assignment; the calibrated starting point competes on
    the same footing. Stops early when the validation loss has not improved
    for ``patience`` epochs. Deterministic for a fixed seed.
    """
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    if config is None:
        config = TrainConfig()
    rng = np.random.default_rng(config.seed)
    model = model.copy()
    if config.calibrate_init:
        cuts = calibrate_staircase_cuts(train_set, chain, w, config.standardize)
        hw, hb = _staircase_head(
            model.latent_size, model.num_domains, cuts, 20.0, 0.1, rng
        )
        model.head_w = hw
        model.head_b = hb
        model.staircase_cuts = cuts
    params = model.params()
    opt = _Adam(params, config) if config.optimizer == "adam" else _Sgd(params, config)

    def compile_set(graphs):
        return [(g, normalization_bounds(g, chain), _graph_inputs(g)) for g in graphs]

    train_c = compile_set(train_set)
    val_c = [
        (g, bounds, CostContext(g, chain, w, bounds, standardize=config.standardize), inputs)
        for g, bounds, inputs in compile_set(val_set)
    ]

    def validate():
        val_losses = []
        val_true = []
        for g, bounds, ctx, inputs in val_c:
            probs, _ = _forward_pass(model, inputs[0], inputs[1])
            val_losses.append(ctx.soft_value(probs).total)
            hard = infer_with_repair(model, g, chain, _probs=probs)
            val_true.append(objective(g, chain, hard, w, bounds).total)
        return float(np.mean(val_losses)), float(np.mean(val_true))

    warmup_epochs = int(round(config.penalty_warmup_frac * config.epochs))
    ramp = -1.0
    train_ctx: list[CostContext] = []

    history = TrainHistory()
    _, best_val_true = validate()  # the calibrated start competes with every epoch
    best_params = [p.copy() for p in params]
    best_val_loss = math.inf
    stale = 0

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        new_ramp = min(1.0, (epoch + 1) / warmup_epochs) if warmup_epochs > 0 else 1.0
        if new_ramp != ramp:
            ramp = new_ramp
            w_t = ObjectiveWeights(w.alpha, w.beta, w.gamma, w.delta, w.mu * ramp)
            train_ctx = [
                CostContext(g, chain, w_t, bounds, standardize=config.standardize)
                for g, bounds, _ in train_c
            ]
        order = rng.permutation(len(train_c))
        losses = []
        for gi in order:
            g, bounds, inputs = train_c[gi]
            loss, grads = backward(
                model, g, chain, w, bounds,
                standardize=config.standardize, _ctx=train_ctx[gi], _inputs=inputs,
            )
            if not math.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}")
            opt.step(params, grads.params())
            losses.append(loss)

        val_loss, val_true = validate()
        history.train_loss.append(float(np.mean(losses)))
        history.val_loss.append(val_loss)
        history.val_true_objective.append(val_true)
        history.epoch_seconds.append(time.perf_counter() - t0)

        if val_true < best_val_true:
            best_val_true = val_true
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
        if val_loss < best_val_loss - 1e-12:
            best_val_loss = val_loss
            stale = 0
        elif epoch >= warmup_epochs:
            stale += 1
            if stale >= config.patience:
                break

    history.best_val_true = best_val_true
    for p, bp in zip(params, best_params):
        p[...] = bp
    return model, history


def infer_with_repair(
    model: GnnModel,
    g: VnfFg,
    chain: DomainChain,
    mask: AssignmentMask | None = None,
    _probs: np.ndarray | None = None,
) -> Assignment:
    """Argmax assignment with mask overrides and ordering repair.

    Sweeps nodes in topological order, lifting each free node to the maximum
    of its predecessors' repaired domains and clamping it below the caps the
    mask imposes via its descendants. Masked nodes never move; an internally
    contradictory mask raises ``InfeasibleMaskError``.
    """
    m = chain.num_domains()
    caps = domain_caps(g, m, mask)  # raises InfeasibleMaskError when contradictory
    if _probs is None:
        _probs = forward(model, g).probs
    arg = np.argmax(_probs, axis=1)  # ties resolve to the lower domain index
    idx = g.node_index()
    fixed = {} if mask is None else mask.fixed
    dom = [0] * g.num_nodes()
    preds: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    for e in g.edges:
        preds[e.dst].append(e.src)
    for nid in topological_order(g):
        i = idx[nid]
        lo = 0
        for p in preds[nid]:
            lo = max(lo, dom[idx[p]])
        if nid in fixed:
            dom[i] = fixed[nid]
        else:
            dom[i] = min(max(int(arg[i]), lo), caps[i])
    return Assignment.hard(dom)


def save_model(model: GnnModel, path, config_echo: dict | None = None) -> None:
    """Write a JSON checkpoint (schema-tagged, row-major arrays)."""
    data = {
        "schema": CHECKPOINT_SCHEMA,
        "input_dim": model.input_dim,
        "latent_size": model.latent_size,
        "num_layers": model.num_layers,
        "num_domains": model.num_domains,
        "staircase_cuts": list(model.staircase_cuts),
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(model.layer_ws, model.layer_bs)
        ],
        "head": {"w": model.head_w.tolist(), "b": model.head_b.tolist()},
        "config": config_echo or {},
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def load_model(path) -> GnnModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema: {data.get('schema')!r}")
    return GnnModel(
        layer_ws=[np.array(layer["w"], dtype=float) for layer in data["layers"]],
        layer_bs=[np.array(layer["b"], dtype=float) for layer in data["layers"]],
        head_w=np.array(data["head"]["w"], dtype=float),
        head_b=np.array(data["head"]["b"], dtype=float),
        input_dim=int(data["input_dim"]),
        latent_size=int(data["latent_size"]),
        num_layers=int(data["num_layers"]),
        num_domains=int(data["num_domains"]),
        staircase_cuts=tuple(float(c) for c in data.get("staircase_cuts", [])),
    )
