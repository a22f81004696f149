"""Command-line interface: corpus generation, solving, training, benchmarks.

Exit codes: 0 success, 1 infeasible, 2 bad input, 3 budget exhausted without
an incumbent. Artifacts written by ``gen``, ``train``, and ``bench`` are
byte-identical across reruns with the same seeds; wall-clock data goes to
``*.timing.json`` side files (and ``train --history``), never into the
primary outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import ailp, bnb, gnn, harness, oracle
from .costs import ObjectiveWeights, check_feasibility, normalization_bounds, objective
from .graphs import (
    InfeasibleMaskError,
    default_chain,
    load_chain,
    load_graph,
    mask_from_json,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_BAD_INPUT = 2
EXIT_NO_INCUMBENT = 3


def _parse_weights(text: str) -> ObjectiveWeights:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 5:
        raise ValueError("weights must be five comma-separated numbers: a,b,g,d,mu")
    return ObjectiveWeights(*parts)


def _parse_levels(text: str) -> tuple:
    return tuple(float(x) if "." in x else int(x) for x in text.split(","))


def _load_chain_arg(path: str | None):
    return load_chain(path) if path else default_chain()


def _budget(args) -> bnb.BnbConfig:
    return bnb.BnbConfig(
        time_limit=getattr(args, "time_limit", None),
        node_limit=getattr(args, "node_limit", None),
    )


def cmd_gen(args) -> int:
    spec = harness.CorpusSpec(
        count=args.count,
        node_choices=_parse_levels(args.nodes),
        edge_choices=_parse_levels(args.edges),
        cpu_levels=_parse_levels(args.cpu_levels),
        ram_levels=_parse_levels(args.ram_levels),
        bw_levels=_parse_levels(args.bw_levels),
        seed=args.seed,
    )
    paths = harness.build_corpus(spec, args.out)
    print(f"wrote {len(paths)} graphs and manifest.json to {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    g = load_graph(args.graph)
    chain = _load_chain_arg(args.chain)
    w = _parse_weights(args.weights)
    mask = None
    if args.mask:
        mask = mask_from_json(Path(args.mask).read_text(encoding="utf-8"))
    state = None

    if args.solver == "oracle":
        res = oracle.solve_exact(g, chain, w, mask=mask, state=state, limit=args.limit)
        if res.assignment is None:
            print("infeasible: the mask admits no ordering-feasible assignment")
            return EXIT_INFEASIBLE
        assignment, value = res.assignment, res.objective
        extra = {"enumerated": res.enumerated}
    elif args.solver == "gnnp":
        if not args.checkpoint:
            raise ValueError("--checkpoint is required for the gnnp solver")
        model = gnn.load_model(args.checkpoint)
        try:
            assignment = gnn.infer_with_repair(model, g, chain, mask)
        except InfeasibleMaskError as exc:
            print(f"infeasible: {exc}")
            return EXIT_INFEASIBLE
        bounds = normalization_bounds(g, chain)
        value = objective(g, chain, assignment, w, bounds)
        extra = {}
    else:
        fn = bnb.solve_bnb if args.solver == "bnb" else ailp.solve_ailp
        res = fn(g, chain, w, mask=mask, state=state, config=_budget(args))
        if res.status == "infeasible":
            print("infeasible: the mask admits no ordering-feasible assignment")
            return EXIT_INFEASIBLE
        if res.assignment is None:
            print("budget exhausted without an incumbent")
            return EXIT_NO_INCUMBENT
        assignment, value = res.assignment, res.objective
        extra = {"status": res.status, "stats": res.stats.to_dict()}

    report = {
        "solver": args.solver,
        "assignment": list(assignment.domain_of),
        "objective": value.to_dict(),
        "feasible": check_feasibility(g, chain, assignment, mask).feasible,
        **extra,
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_train(args) -> int:
    chain = _load_chain_arg(args.chain)
    w = _parse_weights(args.weights)
    train_set = [g for _, g in harness.load_corpus(args.corpus)]
    val_set = [g for _, g in harness.load_corpus(args.val)]
    config = gnn.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        optimizer=args.optimizer,
        seed=args.seed,
        patience=args.patience,
    )
    model = gnn.GnnModel.create(
        chain.num_domains(), latent_size=args.latent, num_layers=args.layers, seed=args.seed
    )
    model, history = gnn.train(model, train_set, val_set, chain, w, config)
    echo = {
        "latent_size": args.latent,
        "num_layers": args.layers,
        "learning_rate": args.lr,
        "epochs": args.epochs,
        "optimizer": args.optimizer,
        "seed": args.seed,
        "patience": args.patience,
    }
    gnn.save_model(model, args.out, config_echo=echo)
    print(
        f"checkpoint written to {args.out} "
        f"(best epoch {history.best_epoch}, validation objective {history.best_val_true:.6f})"
    )
    if args.history:
        harness.write_json(args.history, history.to_dict())
    return EXIT_OK


def _write_bench_outputs(args, report_dict, timing=None, csv_text=None) -> None:
    if args.report:
        harness.write_json(args.report, report_dict)
        if timing is not None:
            sidecar = Path(args.report).with_suffix(".timing.json")
            harness.write_json(sidecar, timing)
    if args.csv and csv_text is not None:
        Path(args.csv).write_text(csv_text, encoding="utf-8")


def cmd_bench_compare(args) -> int:
    chain = _load_chain_arg(args.chain)
    w = _parse_weights(args.weights)
    corpus = harness.load_corpus(args.corpus)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    model = gnn.load_model(args.checkpoint) if args.checkpoint else None
    budgets = {
        "bnb": _budget(args),
        "ailp": _budget(args),
    }
    report = harness.run_comparison(
        corpus, chain, w, solvers, model=model, budgets=budgets, sequential=args.sequential
    )
    _write_bench_outputs(args, report.to_dict(), report.timing_dict(), report.csv_text())
    timing = report.timing_dict()["solvers"]
    for name, summ in report.solvers.items():
        print(
            f"{name}: total_cost={summ['total_cost']:.1f} mean_kl={summ['mean_kl']:.4f} "
            f"aggregate_kl={summ['aggregate_kl']:.4f} feasible={summ['feasibility_rate']:.2%} "
            f"mean_s={timing[name]['mean_seconds']:.4f}"
        )
    return EXIT_OK


def cmd_bench_sweep(args) -> int:
    chain = _load_chain_arg(args.chain)
    w = _parse_weights(args.weights)
    train_set = [g for _, g in harness.load_corpus(args.train)]
    val_set = [g for _, g in harness.load_corpus(args.val)]
    config = gnn.TrainConfig(epochs=args.epochs, seed=args.seed, patience=args.patience)
    report = harness.sweep_hyperparams(
        train_set,
        val_set,
        chain,
        w,
        latent_grid=tuple(int(x) for x in args.latent_grid.split(",")),
        layer_grid=tuple(int(x) for x in args.layer_grid.split(",")),
        repeats=args.repeats,
        seed=args.seed,
        train_config=config,
    )
    csv_lines = ["axis,latent_size,num_layers,min,q1,median,q3,max"]
    for s in report["settings"]:
        st = s["stats"]
        csv_lines.append(
            f"{s['axis']},{s['latent_size']},{s['num_layers']},"
            f"{st['min']!r},{st['q1']!r},{st['median']!r},{st['q3']!r},{st['max']!r}"
        )
    _write_bench_outputs(args, report, csv_text="\n".join(csv_lines) + "\n")
    for s in report["settings"]:
        st = s["stats"]
        print(
            f"{s['axis']}: latent={s['latent_size']} layers={s['num_layers']} "
            f"median={st['median']:.4f} [{st['min']:.4f}, {st['max']:.4f}]"
        )
    return EXIT_OK


def cmd_bench_klsample(args) -> int:
    chain = _load_chain_arg(args.chain)
    report = harness.sample_kl_distribution(
        args.samples, chain.target_distribution, seed=args.seed, bins=args.bins
    )
    csv_lines = ["bin_left,bin_right,count"]
    for i, c in enumerate(report["counts"]):
        csv_lines.append(f"{report['bin_edges'][i]!r},{report['bin_edges'][i + 1]!r},{c}")
    _write_bench_outputs(args, report, csv_text="\n".join(csv_lines) + "\n")
    print(
        f"{report['samples']} samples: mean={report['mean']:.4f} "
        f"median={report['median']:.4f} max={report['max']:.4f}"
    )
    return EXIT_OK


def cmd_bench_ablate(args) -> int:
    chain = _load_chain_arg(args.chain)
    w = _parse_weights(args.weights)
    corpus = harness.load_corpus(args.corpus)
    train_set = [g for _, g in harness.load_corpus(args.train)]
    val_set = [g for _, g in harness.load_corpus(args.val)]
    config = gnn.TrainConfig(epochs=args.epochs, seed=args.seed, patience=args.patience)
    train_fn = harness.default_train_fn(train_set, val_set, chain, config)
    report = harness.run_ablations(corpus, chain, w, train_fn, seed=args.seed)
    csv_lines = ["pair,metric,value"]
    for pair in ("delta_doubling", "standardization", "alpha_doubling", "gamma_doubling"):
        for k, v in report[pair].items():
            csv_lines.append(f"{pair},{k},{v!r}")
    _write_bench_outputs(args, report, csv_text="\n".join(csv_lines) + "\n")
    print(json.dumps({k: report[k] for k in
                      ("delta_doubling", "standardization", "alpha_doubling", "gamma_doubling")},
                     indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicepart", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random slice corpus")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--nodes", default="10,15,20")
    g.add_argument("--edges", default="15,30,60")
    g.add_argument("--cpu-levels", default="2,4,8,16")
    g.add_argument("--ram-levels", default="8,16,32,64")
    g.add_argument("--bw-levels", default="100,200,500,1000")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="partition one slice graph")
    s.add_argument("--solver", choices=["bnb", "ailp", "gnnp", "oracle"], required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--chain")
    s.add_argument("--weights", default="1,1,1,2,10")
    s.add_argument("--mask")
    s.add_argument("--time-limit", type=float, dest="time_limit")
    s.add_argument("--node-limit", type=int, dest="node_limit")
    s.add_argument("--limit", type=int, default=10_000_000, help="oracle enumeration guard")
    s.add_argument("--checkpoint")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="train the GNN partitioner")
    t.add_argument("--corpus", required=True)
    t.add_argument("--val", required=True)
    t.add_argument("--chain")
    t.add_argument("--weights", default="1,1,1,2,10")
    t.add_argument("--latent", type=int, default=10)
    t.add_argument("--layers", type=int, default=3)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--patience", type=int, default=20)
    t.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    t.add_argument("--out", required=True)
    t.add_argument("--history", help="optional history JSON (contains wall times)")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="benchmark harness")
    bsub = b.add_subparsers(dest="bench_command", required=True)

    bc = bsub.add_parser("compare", help="solver comparison over a corpus")
    bc.add_argument("--corpus", required=True)
    bc.add_argument("--chain")
    bc.add_argument("--weights", default="1,1,1,2,10")
    bc.add_argument("--solvers", default="gnnp,ailp,bnb")
    bc.add_argument("--checkpoint")
    bc.add_argument("--node-limit", type=int, dest="node_limit", default=150_000)
    bc.add_argument("--time-limit", type=float, dest="time_limit")
    bc.add_argument("--sequential", action="store_true")
    bc.add_argument("--report")
    bc.add_argument("--csv")
    bc.set_defaults(func=cmd_bench_compare)

    bs = bsub.add_parser("sweep", help="hyperparameter sweep")
    bs.add_argument("--train", required=True)
    bs.add_argument("--val", required=True)
    bs.add_argument("--chain")
    bs.add_argument("--weights", default="1,1,1,2,10")
    bs.add_argument("--latent-grid", default="5,10,25,50")
    bs.add_argument("--layer-grid", default="1,3,5,7")
    bs.add_argument("--repeats", type=int, default=10)
    bs.add_argument("--epochs", type=int, default=200)
    bs.add_argument("--patience", type=int, default=20)
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--report")
    bs.add_argument("--csv")
    bs.set_defaults(func=cmd_bench_sweep)

    bk = bsub.add_parser("klsample", help="KL distribution of random simplex points")
    bk.add_argument("--samples", type=int, default=10_000)
    bk.add_argument("--bins", type=int, default=40)
    bk.add_argument("--seed", type=int, default=0)
    bk.add_argument("--chain")
    bk.add_argument("--report")
    bk.add_argument("--csv")
    bk.set_defaults(func=cmd_bench_klsample)

    ba = bsub.add_parser("ablate", help="weight and standardization ablations")
    ba.add_argument("--corpus", required=True)
    ba.add_argument("--train", required=True)
    ba.add_argument("--val", required=True)
    ba.add_argument("--chain")
    ba.add_argument("--weights", default="1,1,1,2,10")
    ba.add_argument("--epochs", type=int, default=30)
    ba.add_argument("--patience", type=int, default=30)
    ba.add_argument("--seed", type=int, default=0)
    ba.add_argument("--report")
    ba.add_argument("--csv")
    ba.set_defaults(func=cmd_bench_ablate)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleMaskError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
