"""Command-line entry point: data generation, training, evaluation, causal
analyses, exports, the reproduction suite, and the interactive service."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import data, engine, rules, suite, wire
from .checkpoint import load_model, save_model
from .model import CgmConfig, joint_accuracy, train


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.time()
    try:
        args.func(args)
    except BrokenPipeError:
        return 0
    except Exception as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc),
                           "command": args.command})
        print(line, file=sys.stderr)
        return 1
    if getattr(args, "time", False):
        print(f'{{"phase": "{args.command}", "seconds": {time.time() - t0:.3f}}}',
              file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccgm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=fn)
        p.add_argument("--time", action="store_true", help="report wall-clock time")
        return p

    p = cmd("gen", cmd_gen, help="generate a synthetic dataset as CSV")
    p.add_argument("--dataset", required=True,
                   choices=["checkmark", "dsprites-lite", "incompleteness"])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--ratio", type=float, default=0.0, help="incompleteness ratio")
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--perturb", type=float, default=0.0, help="feature noise strength")
    p.add_argument("--out", required=True)

    p = cmd("train", cmd_train, help="train a model on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="cgm", choices=["cgm", "blackbox", "cbm", "cem"])
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=1.0)
    p.add_argument("--lambda3", type=float, default=0.05)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--graph-mode", default="learned", choices=["learned", "fixed"])
    p.add_argument("--graph-file", help="structured adjacency JSON for --graph-mode fixed")
    p.add_argument("--split", default="0.8,0.1,0.1")
    p.add_argument("--out", required=True)

    p = cmd("eval", cmd_eval, help="joint accuracy, or one sample's node states")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, help="print this row's node states")

    p = cmd("graph", cmd_graph, help="export the learnt graph")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--format", default="structured", choices=["dot", "structured"])
    p.add_argument("--data", help="dataset for PNS annotations")
    p.add_argument("--out")

    p = cmd("intervene", cmd_intervene, help="apply an intervention spec to a sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--spec", help="JSON file with [{node,kind,value}...]")
    p.add_argument("--do", action="append", default=[], metavar="NODE=K")
    p.add_argument("--ground-truth", action="append", default=[], metavar="NODE")
    p.add_argument("--block", action="append", default=[], metavar="NODE")

    p = cmd("counterfactual", cmd_counterfactual, help="three-step counterfactual query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--do", action="append", default=[], metavar="NODE=K")

    p = cmd("cace", cmd_cace, help="concept causal effect table")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--cause")
    p.add_argument("--effect")
    p.add_argument("--out")

    p = cmd("pns", cmd_pns, help="probability of necessity and sufficiency bounds")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = cmd("curve", cmd_curve, help="ground-truth intervention sweep")
    p.add_argument("--cgm", required=True)
    p.add_argument("--cbm")
    p.add_argument("--cem")
    p.add_argument("--data", required=True)
    p.add_argument("--perturb", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=0)
    p.add_argument("--out")

    p = cmd("rules", cmd_rules, help="extract boolean structural equations")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = cmd("suite", cmd_suite, help="run the full reproduction suite")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--datasets", nargs="+",
                   default=["checkmark", "dsprites", "incompleteness"])
    p.add_argument("--lambda3-grid", type=float, nargs="+", default=[0.0, 0.05, 0.2])

    p = cmd("serve", cmd_serve, help="serve a checkpoint over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--addr", default="127.0.0.1:8321")
    p.add_argument("--data", help="dataset for the PNS endpoint")
    return parser


def _load_splits(args):
    ds = data.load_csv(args.data)
    fracs = tuple(float(f) for f in args.split.split(","))
    return ds, data.split_dataset(ds, fracs, seed=args.seed)


def cmd_gen(args) -> None:
    if args.dataset == "checkmark":
        ds = data.gen_checkmark(args.n, seed=args.seed)
    elif args.dataset == "dsprites-lite":
        ds = data.gen_scm_dataset(data.dsprites_lite(), args.n, seed=args.seed,
                                  label_noise=args.label_noise)
    else:
        ds = data.gen_incompleteness(args.n, seed=args.seed, ratio=args.ratio)
    if args.perturb > 0:
        ds = data.perturb_features(ds, args.perturb, seed=args.seed + 10_000)
    data.save_csv(ds, args.out)
    print(json.dumps({"written": args.out, "n": ds.n, "d": ds.d, "k": ds.k}))


def cmd_train(args) -> None:
    ds, (tr, va, te) = _load_splits(args)
    fixed_edges = []
    if args.graph_mode == "fixed":
        if args.graph_file:
            spec = json.loads(open(args.graph_file, encoding="utf-8").read())
            fixed_edges = [(e["src"], e["dst"], e.get("weight", 1.0)) for e in spec["edges"]]
        elif ds.ground_truth_graph:
            fixed_edges = [(s, t, 1.0) for s, t in ds.ground_truth_graph]
        else:
            raise ValueError("--graph-mode fixed needs --graph-file or a ground-truth graph")
    cfg = CgmConfig(k=ds.k, d=ds.d, hidden_dim=args.hidden_dim, embed_dim=args.embed_dim,
                    lambda1=args.lambda1, lambda2=args.lambda2, lambda3=args.lambda3,
                    lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                    seed=args.seed, graph_mode=args.graph_mode, fixed_edges=fixed_edges)
    if args.model == "cgm":
        model, _ = train(tr, va, cfg)
        test_acc = joint_accuracy(model, te)
    else:
        model, _ = bl.train_baseline(args.model, tr, va, cfg)
        test_acc = model.accuracy(te)
    model.metrics["test_accuracy"] = test_acc
    save_model(args.out, model)
    print(json.dumps({"written": args.out, "model": args.model,
                      "test_accuracy": round(test_acc, 6)}))


def cmd_eval(args) -> None:
    model = load_model(args.checkpoint)
    ds = data.load_csv(args.data)
    if args.sample is not None:
        states = engine.unfold_predict(model, ds.features[args.sample], [])
        print(wire.dumps(wire.states_payload(states)))
        return
    if isinstance(model, bl.BaselineModel):
        acc = model.accuracy(ds)
    else:
        acc = joint_accuracy(model, ds)
    print(json.dumps({"joint_accuracy": round(acc, 6), "n": ds.n}))


def cmd_graph(args) -> None:
    model = load_model(args.checkpoint)
    x = data.load_csv(args.data).features if args.data else None
    if args.format == "dot":
        text = wire.graph_dot(model, x)
    else:
        text = wire.dumps(wire.graph_payload(model, x)) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")


def _parse_do(items) -> list[engine.Action]:
    actions = []
    for item in items:
        node, _, value = item.partition("=")
        actions.append(engine.Action(node, "do", float(value)))
    return actions


def cmd_intervene(args) -> None:
    model = load_model(args.checkpoint)
    ds = data.load_csv(args.data)
    x = ds.features[args.sample]
    actions = []
    if args.spec:
        actions = wire.spec_from_payload(json.loads(open(args.spec, encoding="utf-8").read()))
    actions += _parse_do(args.do)
    for node in args.ground_truth:
        label = float(ds.labels[args.sample, ds.concept_names.index(node)])
        actions.append(engine.Action(node, "ground_truth", label))
    for node in args.block:
        actions.append(engine.Action(node, "block"))
    before = engine.unfold_predict(model, x, [])
    after = engine.unfold_predict(model, x, actions)
    changed = [model.concept_names[i] for i in range(model.config.k)
               if before.probs[i] != after.probs[i]]
    print(wire.dumps({"before": wire.states_payload(before),
                      "after": wire.states_payload(after),
                      "changed": changed,
                      "spec": wire.spec_payload(actions)}))


def cmd_counterfactual(args) -> None:
    model = load_model(args.checkpoint)
    ds = data.load_csv(args.data)
    report = engine.counterfactual_query(model, ds.features[args.sample], _parse_do(args.do))
    print(wire.dumps(wire.report_payload(report)))


def cmd_cace(args) -> None:
    model = load_model(args.checkpoint)
    ds = data.load_csv(args.data)
    names = model.concept_names
    rows = []
    if args.cause and args.effect:
        pairs = [(args.cause, args.effect)]
    else:
        pairs = [(c, e) for c in names for e in names if c != e]
    for cause, effect in pairs:
        rows.append([cause, effect, engine.cace(model, ds.features, cause, effect)])
    _emit_table(args.out, ["cause", "effect", "value"], rows)


def cmd_pns(args) -> None:
    model = load_model(args.checkpoint)
    ds = data.load_csv(args.data)
    rows = [[r["cause"], r["effect"], r["value"], r["lower"], r["upper"]]
            for r in wire.pns_table(model, ds.features)]
    _emit_table(args.out, ["cause", "effect", "value", "lower", "upper"], rows)


def cmd_curve(args) -> None:
    cgm = load_model(args.cgm)
    others = {}
    if args.cbm:
        others["cbm"] = load_model(args.cbm)
    if args.cem:
        others["cem"] = load_model(args.cem)
    ds = data.load_csv(args.data)
    if args.perturb > 0:
        ds = data.perturb_features(ds, args.perturb, seed=args.seed + 30_000)
    steps = args.max_steps or ds.k
    rows = [[r["model"], r["step"], r["intervened"], r["delta_all"], r["delta_concepts"]]
            for r in engine.intervention_curve(cgm, others, ds, steps)]
    _emit_table(args.out, ["model", "step", "intervened", "delta_all", "delta_concepts"], rows)


def cmd_rules(args) -> None:
    model = load_model(args.checkpoint)
    ds = data.load_csv(args.data)
    rows = [[r.node, ";".join(r.parents), r.formula, int(r.skipped)]
            for r in rules.extract_logic_rules(model, ds)]
    _emit_table(args.out, ["node", "parents", "rule", "skipped"], rows)


def cmd_suite(args) -> None:
    result = suite.run_suite(args.out, seeds=tuple(args.seeds),
                             lambda3_grid=tuple(args.lambda3_grid),
                             workers=args.workers, datasets=tuple(args.datasets))
    print(json.dumps({"out": str(result.out_dir), "phases": result.summary["phases"]}))


def cmd_serve(args) -> None:
    from .service import serve
    print(json.dumps({"serving": args.addr, "checkpoint": args.checkpoint}), flush=True)
    serve(args.checkpoint, args.addr, args.data)


def _emit_table(out_path, header, rows) -> None:
    if out_path:
        suite.write_csv(Path(out_path), header, rows)
        print(json.dumps({"written": out_path, "rows": len(rows)}))
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(suite.fmt_cell(v) for v in row))


if __name__ == "__main__":
    sys.exit(main())
