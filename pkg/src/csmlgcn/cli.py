"""Command-line interface: ``csmlgcn {synth,train,query,eval,ablate}``.

Settings resolve as defaults < ``--config`` file < explicit flags.  Each
command writes its files and a ``manifest.json`` under ``--out``.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import os
import sys

from . import __version__
from .bench import (
    QuerySplit,
    SynthSpec,
    gen_synthetic,
    make_splits,
    run_ablation,
    run_eval,
    write_ablation_csv,
)
from .config import TrainConfig, load_config
from .graph import (
    GraphFormatError,
    file_digest,
    load_multiplex,
    node_features,
    read_queries,
    write_multiplex,
    write_queries,
)
from .model import CheckpointError, check_compatible, load_checkpoint, save_checkpoint
from .query import batch_query
from .trainer import train

logger = logging.getLogger("csmlgcn")

class CLIError(Exception):
    """A runtime failure reported to the user without a traceback."""

# -- argument parsing ------------------------------------------------------------

def _common(p, *, needs_graph=True, model=False):
    if needs_graph:
        p.add_argument("--edges", required=True, help="edge file: 'layer src dst' per line")
        p.add_argument("--attrs", help="node attribute CSV with a 'node,...' header")
    if model:
        p.add_argument("--model", required=True, help="checkpoint written by 'train'")
    p.add_argument("--config", help="'key = value' settings file")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--eta", type=float, help="membership threshold in [0, 1]")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--dropout", type=float, dest="dropout_rate")
    p.add_argument("--hops", type=int, dest="candidate_hops",
                   help="train/query on the k-hop candidate subgraph")
    p.add_argument("-v", "--verbose", action="store_true")

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csmlgcn",
        description="Query-driven multiplex GCN community search.",
        epilog="Precedence: explicit flags > --config file > built-in defaults.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-partition multiplex benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=200)
    p.add_argument("--communities", type=int, default=4)
    p.add_argument("--layers", type=int, default=3, help="signal layers")
    p.add_argument("--noise-layers", type=int, default=0)
    p.add_argument("--p-in", type=float, default=0.3)
    p.add_argument("--p-out", type=float, default=0.05)
    p.add_argument("--p-noise", type=float, default=0.1)
    p.add_argument("--flip", type=float, default=0.1, help="attribute flip probability")
    p.add_argument("--no-attrs", action="store_true")
    p.add_argument("--n-queries", type=int, default=None)
    p.add_argument("--split", default="150,100,100", help="train,val,test ratio")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("train", help="train a model on (query, community) pairs")
    _common(p)
    p.add_argument("--queries", required=True, help="training pairs (JSON lines)")
    p.add_argument("--val-queries", help="validation pairs for model selection")
    p.add_argument("--out", required=True)

    p = sub.add_parser("query", help="find communities for query nodes")
    _common(p, model=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--query", action="append", help="comma-separated node ids (repeatable)")
    src.add_argument("--queries", help="JSON-lines query file")
    p.add_argument("--out", help="also write communities.jsonl and a manifest here")

    p = sub.add_parser("eval", help="score a model on held-out pairs")
    _common(p, model=True)
    p.add_argument("--queries", required=True, help="test pairs (JSON lines)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="sensitivity of test F1 to eta, epochs or dropout")
    _common(p)
    p.add_argument("--queries", required=True, help="training pairs")
    p.add_argument("--val-queries", required=True)
    p.add_argument("--test-queries", required=True)
    p.add_argument("--axis", required=True, choices=["eta", "epochs", "dropout"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--model", help="reuse this checkpoint for the eta axis")
    p.add_argument("--out", required=True)
    return parser

# -- helpers ---------------------------------------------------------------------

def resolve_config(args, base: TrainConfig | None = None) -> TrainConfig:
    """Defaults (or ``base``) < config file < flags."""
    values = (base or TrainConfig()).to_dict()
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    for key in ("epochs", "learning_rate", "dropout_rate", "candidate_hops", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "eta", None) is not None:
        values["eta_default"] = args.eta
    return TrainConfig.from_dict(values)

def _load_graph(args):
    g = load_multiplex(args.edges, args.attrs)
    return g, node_features(g)

def _inputs(args, names):
    out = {}
    for name in names:
        path = getattr(args, name, None)
        if path:
            out[path] = file_digest(path)
    return out

def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path

def write_manifest(out_dir, command, config, inputs, seed, outputs):
    doc = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": inputs,
        "seed": seed,
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path

def _parse_ids(text, g):
    ids = [t.strip() for t in text.split(",") if t.strip()]
    if not ids:
        raise CLIError(f"empty query {text!r}")
    out = []
    for t in ids:
        try:
            out.append(g.index_of(t))
        except KeyError:
            raise CLIError(f"unknown node id {t!r}") from None
    return out

def _parse_values(text):
    try:
        return [json.loads(v) for v in text.split(",") if v.strip()]
    except json.JSONDecodeError:
        raise CLIError(f"--values must be comma-separated numbers, got {text!r}") from None

def _pairs(path, g, need_truth=True):
    pairs = read_queries(path, g)
    if need_truth:
        missing = [i + 1 for i, (_, c) in enumerate(pairs) if c is None]
        if missing:
            raise CLIError(f"{path}: line(s) {missing[:5]} have no 'community'")
    return pairs

def _load_model(args, g, X):
    params, config, _, _ = load_checkpoint(args.model)
    try:
        check_compatible(params, g, X)
    except ValueError as exc:
        raise CLIError(f"model does not fit this graph: {exc}") from None
    return params, config

# -- commands --------------------------------------------------------------------

def cmd_synth(args):
    ratio = tuple(int(x) for x in args.split.split(","))
    spec = SynthSpec(node_count=args.nodes, community_count=args.communities,
                     layer_count=args.layers, p_in=args.p_in, p_out=args.p_out,
                     noise_layers=args.noise_layers, p_noise=args.p_noise,
                     attribute_mode="none" if args.no_attrs else "community",
                     flip_prob=args.flip, n_queries=args.n_queries, seed=args.seed)
    data = gen_synthetic(spec)
    split = make_splits(data.pairs, ratio, args.seed)
    out = _out_dir(args.out)
    j = lambda name: os.path.join(out, name)
    outputs = [j("edges.txt"), j("queries.jsonl"), j("train.jsonl"), j("val.jsonl"),
               j("test.jsonl"), j("truth.csv")]
    attr_path = None if args.no_attrs else j("attrs.csv")
    write_multiplex(data.graph, outputs[0], attr_path)
    if attr_path:
        outputs.append(attr_path)
    write_queries(outputs[1], data.pairs, data.graph)
    write_queries(outputs[2], split.train, data.graph)
    write_queries(outputs[3], split.validation, data.graph)
    write_queries(outputs[4], split.test, data.graph)
    with open(outputs[5], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "community"])
        for u, c in enumerate(data.membership):
            w.writerow([data.graph.label_of(u), int(c)])
    write_manifest(out, "synth", dict(vars(spec), split=list(ratio)), {}, args.seed, outputs)
    logger.info("wrote %d nodes, %d layers, %d query pairs to %s",
                spec.node_count, data.graph.layer_count, len(data.pairs), out)
    return 0

def cmd_train(args):
    config = resolve_config(args)
    g, X = _load_graph(args)
    pairs = _pairs(args.queries, g)
    val = _pairs(args.val_queries, g) if args.val_queries else None
    out = _out_dir(args.out)

    def report(it, loss, f1):
        if it == 1 or it % 10 == 0 or it == config.epochs:
            logger.info("iteration %d  loss %.4f  val F1 %.4f", it, loss, f1)

    params, record = train(g, X, pairs, config, val, callback=report)
    model = os.path.join(out, "model.json")
    save_checkpoint(model, params, config, g.node_labels,
                    {"best_iteration": record.best_iteration})
    curve = os.path.join(out, "training.csv")
    with open(curve, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss", "val_f1"])
        for it, loss, f1, _ in record.rows():
            w.writerow([it, repr(loss), repr(f1)])
    timings = os.path.join(out, "training_timings.csv")
    with open(timings, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "seconds"])
        for it, _, _, sec in record.rows():
            w.writerow([it, f"{sec:.4f}"])
    write_manifest(out, "train", config.to_dict(),
                   _inputs(args, ["edges", "attrs", "queries", "val_queries", "config"]),
                   config.seed, [model, curve, timings])
    return 0

def cmd_query(args):
    g, X = _load_graph(args)
    params, ckpt_config = _load_model(args, g, X)
    config = resolve_config(args, ckpt_config)
    if args.query:
        queries = [_parse_ids(q, g) for q in args.query]
    else:
        queries = [q for q, _ in _pairs(args.queries, g, need_truth=False)]
    comms, stats = batch_query(g, X, params, queries, config.eta_default, config.candidate_hops)
    lines = []
    for c in comms:
        rec = {
            "query": [g.label_of(u) for u in c.query],
            "community": [g.label_of(u) for u in c.sorted_members()],
            "scores": {g.label_of(u): float(c.scores[u]) for u in c.sorted_members()},
            "millis": round(c.millis, 4),
        }
        lines.append(json.dumps(rec))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args.out)
        path = os.path.join(out, "communities.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        write_manifest(out, "query", config.to_dict(),
                       _inputs(args, ["edges", "attrs", "model", "queries", "config"]),
                       config.seed, [path])
    logger.info("%d queries, mean %.2f ms", stats["count"], stats["mean_millis"])
    return 0

def cmd_eval(args):
    g, X = _load_graph(args)
    params, ckpt_config = _load_model(args, g, X)
    config = resolve_config(args, ckpt_config)
    pairs = _pairs(args.queries, g)
    res = run_eval(g, X, params, pairs, config.eta_default, config.candidate_hops)
    out = _out_dir(args.out)
    metrics = os.path.join(out, "metrics.csv")
    timings = os.path.join(out, "timings.csv")
    summary = os.path.join(out, "summary.json")
    res.write_csv(metrics)
    res.write_timings(timings)
    with open(summary, "w", encoding="utf-8") as fh:
        json.dump({"queries": len(res.rows), "eta": config.eta_default,
                   "mean_f1": res.mean_f1, "mean_size": res.mean_size}, fh, indent=2)
        fh.write("\n")
    write_manifest(out, "eval", config.to_dict(),
                   _inputs(args, ["edges", "attrs", "model", "queries", "config"]),
                   config.seed, [metrics, timings, summary])
    logger.info("mean F1 %.4f over %d queries (eta %.2f)", res.mean_f1, len(res.rows),
                config.eta_default)
    print(f"mean_f1 {res.mean_f1:.6f}")
    return 0

def cmd_ablate(args):
    config = resolve_config(args)
    g, X = _load_graph(args)
    split = QuerySplit(_pairs(args.queries, g), _pairs(args.val_queries, g),
                       _pairs(args.test_queries, g))
    params = None
    if args.model:
        if args.axis != "eta":
            raise CLIError("--model only applies to --axis eta")
        params, _ = _load_model(args, g, X)
    rows = run_ablation(args.axis, _parse_values(args.values), config, g, X, split, params)
    out = _out_dir(args.out)
    path = os.path.join(out, "ablation.csv")
    write_ablation_csv(rows, path)
    write_manifest(out, "ablate", dict(config.to_dict(), axis=args.axis, values=args.values),
                   _inputs(args, ["edges", "attrs", "queries", "val_queries", "test_queries",
                                  "model", "config"]),
                   config.seed, [path])
    for v, f1, size in rows:
        print(f"{args.axis}={v}  mean_f1={f1:.4f}  mean_size={size:.1f}")
    return 0

COMMANDS = {"synth": cmd_synth, "train": cmd_train, "query": cmd_query, "eval": cmd_eval,
            "ablate": cmd_ablate}

def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (CLIError, GraphFormatError, CheckpointError, OSError, ValueError,
            FloatingPointError) as exc:
        print(f"csmlgcn {args.command}: error: {exc}", file=sys.stderr)
        return 1

if __name__ == "__main__":
    sys.exit(main())
