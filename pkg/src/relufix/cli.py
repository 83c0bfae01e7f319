"""Command-line interface.

Subcommands cover the whole pipeline: gen-data, train, verify, repair,
baseline, eval, plot, report, compare. Models travel as JSON, datasets as
CSV directories, properties as JSON lists, trial logs as CSV.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import datagen, encoder, evaluator, network, repair, trainer
from .smtio import SolverConfig


def _solver_from_args(args) -> SolverConfig:
    cmd = tuple(args.solver_cmd.split())
    return SolverConfig(cmd=cmd, timeout_s=args.trial_timeout, archive_dir=args.archive_smt)


def _add_solver_args(p):
    p.add_argument("--solver-cmd", default="z3 -in", help="external SMT-LIB2 solver command")
    p.add_argument("--trial-timeout", type=float, default=600.0, help="per-query timeout in seconds")
    p.add_argument("--archive-smt", default=None, help="directory to archive emitted scripts")


def cmd_gen_data(args):
    spec = datagen.NAMED_SPECS[args.spec]()
    sizes = {"xor-a": (2400, 1600), "xor-b": (1562, 1600), "blobs": (6000, 4000)}
    n_train, n_test = sizes[args.spec]
    if args.n_train:
        n_train = args.n_train
    if args.n_test:
        n_test = args.n_test
    ds = datagen.generate_mixture(spec, n_train, n_test, args.seed)
    ds.meta["spec_name"] = args.spec
    datagen.save_dataset(ds, args.out)
    print(f"wrote {n_train}/{n_test} points to {args.out}")


def cmd_train(args):
    ds = datagen.load_dataset(args.data)
    topology = tuple(int(v) for v in args.topology.split(","))
    net0 = trainer.init_network(topology, args.seed)
    cfg = trainer.TrainConfig(
        optimizer=args.optimizer,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    net = trainer.train(net0, ds.train, cfg)
    if args.sampled:
        bounds = datagen.data_bounds(ds.train)
        ds.sampled = datagen.sample_uniform_labeled(net, bounds, args.sampled, args.seed + 1)
        datagen.save_dataset(ds, args.data)
    network.save(net, args.out)
    report = evaluator.weighted_accuracy(net, ds)
    print(f"trained {topology} -> {args.out}")
    for split, (size, acc) in report.per_split.items():
        print(f"  {split}: {size} points, accuracy {acc:.5f}")
    print(f"  weighted: {report.weighted:.6f}")


def cmd_verify(args):
    net = network.load(args.model)
    props = encoder.load_properties(args.props)
    solver = _solver_from_args(args)
    failures = 0
    for prop in props:
        check = encoder.verify_property(net, prop, solver)
        if check.holds is True:
            print(f"{prop.name}: HOLDS")
        elif check.holds is False:
            failures += 1
            cex = tuple(float(v) for v in check.counterexample)
            print(f"{prop.name}: VIOLATED at {cex}")
        else:
            failures += 1
            print(f"{prop.name}: INCONCLUSIVE ({check.verdict.status.value})")
    sys.exit(1 if failures else 0)


def _build_soft(args, net, ds):
    if args.heuristic == "samples":
        m = args.samples if args.samples else len(ds.train)
        return encoder.heuristic_samples(ds.train, m, args.seed)
    bounds = datagen.data_bounds(ds.train)
    if args.heuristic == "grid":
        cfg = encoder.GridConfig(bounds, args.grid_cells, seed=args.seed)
        return encoder.heuristic_grid(net, cfg)
    if args.heuristic == "voronoi":
        source = ds.sampled if ds.sampled else ds.train
        import numpy as np

        rng = np.random.default_rng(args.seed)
        count = min(args.voronoi_cells, len(source))
        idx = rng.choice(len(source), size=count, replace=False)
        gens = tuple(source[i] for i in idx)
        return encoder.heuristic_voronoi(net, encoder.VoronoiConfig(gens, bounds, args.seed))
    raise SystemExit(f"unknown heuristic {args.heuristic}")


def cmd_repair(args):
    net = network.load(args.model)
    ds = datagen.load_dataset(args.data)
    props = encoder.load_properties(args.props)
    soft = _build_soft(args, net, ds)
    cfg = repair.RepairConfig(
        max_combination_size=args.max_size,
        trial_timeout_s=args.trial_timeout,
        global_timeout_s=args.global_timeout,
        thresholds=tuple(int(v) for v in args.thresholds.split(",")),
        weight_layers=tuple(int(v) for v in args.layers.split(",")) if args.layers else None,
        weight_kinds=tuple(args.kinds.split(",")) if args.kinds else None,
        top_k_for_greedy=args.top_k,
        workers=args.workers,
        allow_satisfied=args.allow_satisfied,
        solver=_solver_from_args(args),
    )
    state = repair.greedy_repair(net, props, soft, ds, cfg)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "trials.csv"), "w") as fh:
        fh.write(evaluator.trials_csv(state.trials))
    before = evaluator.weighted_accuracy(net, ds).weighted
    rows = evaluator.aggregate_trials(state.trials, "threshold", accuracy_before=before)
    with open(os.path.join(args.out, "aggregate_by_threshold.csv"), "w") as fh:
        fh.write(evaluator.aggregate_csv(rows))

    prop_key = ";".join(p.name for p in props)
    if state.already_safe:
        print("all properties already hold; nothing to repair")
        network.save(net, os.path.join(args.out, "best_model.json"))
        return
    if state.best is None:
        print(f"no SAT trial found ({len(state.trials)} trials, {state.elapsed_s:.1f}s)")
        sys.exit(2)
    best_net = network.substitute(net, state.best.weight_values)
    network.save(best_net, os.path.join(args.out, "best_model.json"))
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({"property": prop_key, "ours": state.best.accuracy}, fh)
    sel = ";".join(
        f"{w.layer}:{w.kind}:{w.row}:{w.col}" for w in state.best.selection
    )
    print(
        f"best repair: accuracy {state.best.accuracy:.6f} (before {before:.6f}), "
        f"selection [{sel}], threshold {state.best.threshold}"
    )
    print(f"{len(state.trials)} trials in {state.elapsed_s:.1f}s -> {args.out}")


def cmd_baseline(args):
    net = network.load(args.model)
    ds = datagen.load_dataset(args.data)
    props = encoder.load_properties(args.props)
    train_cfg = trainer.TrainConfig(
        optimizer=args.optimizer, learning_rate=args.lr, epochs=args.epochs,
        batch_size=args.batch_size, seed=args.seed,
    )
    result = repair.naive_baseline(
        net, props, ds, train_cfg, max_iters=args.max_iters,
        n_spec=args.n_spec, n_train=args.n_train, seed=args.seed,
        solver=_solver_from_args(args),
    )
    os.makedirs(args.out, exist_ok=True)
    network.save(result.net, os.path.join(args.out, "baseline_model.json"))
    with open(os.path.join(args.out, "baseline_log.json"), "w") as fh:
        json.dump(result.log, fh, indent=2)
    acc = evaluator.weighted_accuracy(result.net, ds).weighted
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({"property": ";".join(p.name for p in props), "naive": acc}, fh)
    status = "repaired" if result.repaired else "NOT repaired"
    print(f"baseline {status} after {result.iterations} iterations, accuracy {acc:.6f}")
    sys.exit(0 if result.repaired else 2)


def cmd_eval(args):
    net = network.load(args.model)
    ds = datagen.load_dataset(args.data)
    report = evaluator.weighted_accuracy(net, ds)
    for split, (size, acc) in report.per_split.items():
        print(f"{split}: {size} points, accuracy {acc:.5f}")
    print(f"weighted: {report.weighted:.6f}")


def cmd_plot(args):
    net = network.load(args.model)
    ds = datagen.load_dataset(args.data) if args.data else None
    props = encoder.load_properties(args.props) if args.props else []
    if ds is not None:
        bounds = datagen.data_bounds(ds.train)
    else:
        bounds = datagen.Rect((-50.0, -50.0), (50.0, 50.0))
    if props:
        lo = [min(b, min(p.center[i] - p.delta for p in props)) for i, b in enumerate(bounds.lo)]
        hi = [max(b, max(p.center[i] + p.delta for p in props)) for i, b in enumerate(bounds.hi)]
        bounds = datagen.Rect(tuple(lo), tuple(hi))
    overlays = {}
    if ds is not None:
        overlays = {"train": ds.train, "test": ds.test, "sampled": ds.sampled}
    svg = evaluator.boundary_svg(net, bounds, resolution=args.resolution,
                                 datasets=overlays, properties=props)
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    if args.png:
        from . import plotting

        plotting.boundary_figure(net, bounds, ds, props, out_path=args.png)
        print(f"wrote {args.png}")


def cmd_report(args):
    from . import plotting

    net = network.load(args.model)
    ds = datagen.load_dataset(args.data)
    props = encoder.load_properties(args.props) if args.props else []
    os.makedirs(args.out, exist_ok=True)

    records = _read_trials(os.path.join(args.run, "trials.csv"))
    before = evaluator.weighted_accuracy(net, ds).weighted
    for group_by in ("threshold", "size"):
        rows = evaluator.aggregate_trials(records, group_by, accuracy_before=before)
        path = os.path.join(args.out, f"aggregate_by_{group_by}.csv")
        with open(path, "w") as fh:
            fh.write(evaluator.aggregate_csv(rows))
        print(f"wrote {path}")

    bounds = datagen.data_bounds(ds.train)
    if props:
        lo = [min(b, min(p.center[i] - p.delta for p in props)) for i, b in enumerate(bounds.lo)]
        hi = [max(b, max(p.center[i] + p.delta for p in props)) for i, b in enumerate(bounds.hi)]
        bounds = datagen.Rect(tuple(lo), tuple(hi))
    best_path = os.path.join(args.run, "best_model.json")
    if os.path.exists(best_path):
        best = network.load(best_path)
        fig_path = os.path.join(args.out, "boundaries_before_after.png")
        plotting.before_after_figure(net, best, bounds, ds, props, out_path=fig_path)
    else:
        fig_path = os.path.join(args.out, "boundaries.png")
        plotting.boundary_figure(net, bounds, ds, props, title="original", out_path=fig_path)
    print(f"wrote {fig_path}")


def _read_trials(path):
    import csv as _csv

    from .network import WeightId

    records = []
    with open(path) as fh:
        for row in _csv.DictReader(fh):
            selection = tuple(
                WeightId(int(l), k, int(r), int(c))
                for part in row["selection"].split(";")
                if part
                for l, k, r, c in [part.split(":")]
            )
            records.append(
                repair.TrialRecord(
                    selection=selection,
                    threshold=int(row["threshold"]),
                    status=row["status"],
                    accuracy=float(row["accuracy"]) if row["accuracy"] else None,
                    solver_time_s=float(row["solver_time_s"]),
                    skipped=bool(int(row["skipped"])),
                )
            )
    return records


def cmd_compare(args):
    import csv as _csv

    merged: dict[str, dict] = {}
    for run in args.runs:
        with open(os.path.join(run, "summary.json")) as fh:
            row = json.load(fh)
        merged.setdefault(row["property"], {}).update(row)
    with open(args.out, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["property", "our_method", "naive_method"])
        for prop in sorted(merged):
            row = merged[prop]
            writer.writerow([prop, row.get("ours", "NA"), row.get("naive", "NA")])
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relufix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a benchmark dataset")
    p.add_argument("--spec", choices=sorted(datagen.NAMED_SPECS), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=0)
    p.add_argument("--n-test", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an MLP on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--topology", default="2,4,2")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampled", type=int, default=0,
                   help="also draw this many uniform points labeled by the trained net")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="check robustness properties of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--props", required=True)
    _add_solver_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("repair", help="greedy SMT repair search")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--props", required=True)
    p.add_argument("--heuristic", choices=["samples", "grid", "voronoi"], default="samples")
    p.add_argument("--samples", type=int, default=0, help="sample count for the samples heuristic")
    p.add_argument("--grid-cells", type=int, default=10)
    p.add_argument("--voronoi-cells", type=int, default=150)
    p.add_argument("--thresholds", default="1")
    p.add_argument("--max-size", type=int, default=1)
    p.add_argument("--global-timeout", type=float, default=36000.0)
    p.add_argument("--layers", default="", help="restrict free weights to these layers, e.g. 2")
    p.add_argument("--kinds", default="", help="restrict to weight or bias")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-satisfied", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_solver_args(p)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("baseline", help="naive verify-retrain repair loop")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--props", required=True)
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--n-spec", type=int, default=200)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_solver_args(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="accuracy report for a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render decision boundaries to SVG (and PNG)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--props", default=None)
    p.add_argument("--resolution", type=int, default=96)
    p.add_argument("--out", required=True)
    p.add_argument("--png", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("report", help="aggregate a repair run into tables and figures")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--props", default=None)
    p.add_argument("--run", required=True, help="directory produced by the repair command")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="merge run summaries into a comparison table")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
