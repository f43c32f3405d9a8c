"""Command-line interface.

Subcommands: train, embed, probe, diagnose, ablate, bench, gen. Every
command resolves its configuration as defaults < config file < CLI flags,
writes its artifacts plus a manifest.json into --out, and exits 0 on
success, 2 on configuration errors, 3 on input errors, 4 on numeric
failures. Report commands render a matplotlib figure next to each CSV.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench as bench_mod
from . import plots
from .discriminate import (AGGREGATIONS, TrainConfig, train,
                           train_dgi_constant_summary)
from .encoder import load_checkpoint, save_checkpoint
from .errors import (ConfigError, CorruptionError, GraphError, IdRangeError,
                     NumericError, ParseError, ShapeError)
from .graph_store import (load_edge_list, load_features, load_labels,
                          save_edge_list, save_features, save_labels)
from .inference import (EmbeddingSet, bench_graph_power, embed, encode_frozen,
                        graph_checksum, load_embeddings, save_embeddings)
from .probe import (ProbeConfig, cora_shape, logistic_probe, sbm_generate,
                    summary_params, summary_stats)
from .sampler import minibatch_train
from .tensor_ops import RngState

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4

SWEEP_EPSILONS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
_SBM_FIXTURE = dict(n=2000, k=4, p_in=0.02, p_out=0.002, feat_dim=32,
                    noise=0.3)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_patience(text: str):
    low = text.strip().lower()
    if low == "none":
        return None
    return int(text)


def _parse_fanouts(text: str):
    low = text.strip().lower()
    if low == "auto":
        return "auto"
    return [int(tok) for tok in text.split(",") if tok.strip()]


# key -> (parser, default); the resolved dict is what gets hashed
CONFIG_SCHEMA = {
    "seed": (int, 0),
    "lr": (float, 1e-3),
    "epochs": (int, 500),
    "patience": (_parse_patience, 20),
    "hidden": (int, 512),
    "num_conv": (int, 1),
    "num_proj": (int, 1),
    "aggregation": (str, "sum"),
    "activation": (str, "prelu"),
    "augment": (_parse_bool, False),
    "drop_edge_p": (float, 0.2),
    "drop_feat_p": (float, 0.2),
    "power": (int, 5),
    "minibatch": (_parse_bool, False),
    "batch_size": (int, 2048),
    "fanouts": (_parse_fanouts, "auto"),
    "prefetch_depth": (int, 0),
    "workers": (int, 1),
    "probe_lr": (float, 1e-2),
    "probe_epochs": (int, 1000),
    "probe_l2": (float, 1e-5),
    "stats_hidden": (int, 512),
    "sweep_hidden": (int, 8),
    "sweep_epochs": (int, 200),
}


def load_config_file(path: str) -> dict:
    """Parse flat "key = value" lines; unknown keys are a hard error."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, "
                                  f"got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            parser, _ = CONFIG_SCHEMA[key]
            try:
                values[key] = parser(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit CLI flags."""
    cfg = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in CONFIG_SCHEMA:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["fanouts"] == "auto":
        cfg["fanouts"] = [12] * cfg["num_conv"]
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        lr=cfg["lr"], epochs=cfg["epochs"], patience=cfg["patience"],
        hidden=cfg["hidden"], num_conv=cfg["num_conv"],
        num_proj=cfg["num_proj"], aggregation=cfg["aggregation"],
        activation=cfg["activation"], seed=cfg["seed"],
        augment=cfg["augment"], drop_edge_p=cfg["drop_edge_p"],
        drop_feat_p=cfg["drop_feat_p"])


def _probe_config(cfg: dict) -> ProbeConfig:
    return ProbeConfig(lr=cfg["probe_lr"], epochs=cfg["probe_epochs"],
                       l2=cfg["probe_l2"], seed=cfg["seed"])


def file_checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: str, command: str, cfg: dict, inputs: dict,
                   artifacts: dict, started: float,
                   extra: dict | None = None) -> None:
    """Atomic manifest write: run metadata lands complete or not at all."""
    manifest = {
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "config_hash": config_hash(cfg),
        "seed": cfg.get("seed"),
        "inputs": {path: file_checksum(path) for path in sorted(inputs)},
        "artifacts": {name: artifacts[name] for name in sorted(artifacts)},
        "wall_clock_seconds": time.perf_counter() - started,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    os.replace(tmp, path)


def _load_dataset(args) -> tuple:
    g, _ = load_edge_list(args.graph)
    x = load_features(args.features)
    if x.shape[0] != g.num_nodes:
        raise ShapeError(f"features cover {x.shape[0]} nodes, "
                         f"graph has {g.num_nodes}")
    return g, x


def _write_csv(path: str, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


# -- commands ----------------------------------------------------------------

def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    tcfg = _train_config(cfg)
    g, x = _load_dataset(args)
    if cfg["minibatch"]:
        params, trace = minibatch_train(g, x, tcfg, cfg["batch_size"],
                                        cfg["fanouts"], cfg["prefetch_depth"])
    else:
        params, trace = train(g, x, tcfg)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.ggdp")
    trace_csv = os.path.join(args.out, "trace.csv")
    curve = os.path.join(args.out, "loss_curve.png")
    save_checkpoint(ckpt, params)
    trace.write_csv(trace_csv)
    plots.save_loss_curve(trace.losses, curve, trace.best_epoch)
    write_manifest(args.out, "train", cfg,
                   {args.graph: None, args.features: None},
                   {"checkpoint": ckpt, "trace": trace_csv,
                    "loss_curve": curve}, started,
                   extra={"epochs_run": len(trace.losses),
                          "best_epoch": trace.best_epoch,
                          "final_loss": trace.losses[-1]})
    print(f"trained {len(trace.losses)} epochs, "
          f"best epoch {trace.best_epoch}, final loss {trace.losses[-1]:.6f}")
    return EXIT_OK


def cmd_embed(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    g, x = _load_dataset(args)
    params = load_checkpoint(args.checkpoint)
    if params.in_dim != x.shape[1]:
        raise ShapeError(f"checkpoint expects {params.in_dim} feature dims, "
                         f"features have {x.shape[1]}")
    h = embed(g, x, params, cfg["power"])
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "embeddings.ggdf")
    emb = EmbeddingSet(h=h, meta={
        "config_hash": config_hash(cfg),
        "graph_checksum": graph_checksum(g),
        "power": str(cfg["power"]),
        "seed": str(cfg["seed"]),
    })
    save_embeddings(out_path, emb)
    write_manifest(args.out, "embed", cfg,
                   {args.graph: None, args.features: None,
                    args.checkpoint: None},
                   {"embeddings": out_path, "sidecar": out_path + ".meta"},
                   started)
    print(f"wrote {h.shape[0]}x{h.shape[1]} embeddings to {out_path}")
    return EXIT_OK


def cmd_probe(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    emb = load_embeddings(args.embeddings)
    split = load_labels(args.labels, num_nodes=emb.h.shape[0])
    acc = logistic_probe(emb, split, _probe_config(cfg))
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "probe_results.csv")
    _write_csv(csv_path, "split,accuracy",
               [f"{name},{acc[name]:.6f}" for name in ("train", "val", "test")])
    write_manifest(args.out, "probe", cfg,
                   {args.embeddings: None, args.labels: None},
                   {"probe_results": csv_path}, started)
    print(f"probe accuracy train={acc['train']:.4f} val={acc['val']:.4f} "
          f"test={acc['test']:.4f}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    rng = RngState(cfg["seed"])
    os.makedirs(args.out, exist_ok=True)
    inputs = {}

    # summary statistics across activations, one conv layer at init
    if args.synthetic:
        g_stats, x_stats = cora_shape(rng.stream("cora_shape"))
    else:
        g_stats, _ = load_edge_list(args.graph)
        x_stats = load_features(args.features)
        inputs.update({args.graph: None, args.features: None})
    stats_lines = []
    for activation in ("relu", "lrelu", "prelu", "sigmoid"):
        params = summary_params(x_stats.shape[1], cfg["stats_hidden"],
                                activation, rng.stream(f"stats_{activation}"))
        stats = summary_stats(g_stats, x_stats, params, activation,
                              outer="sigmoid")
        stats_lines += [f"{activation}.mean={stats.mean:.6f}",
                        f"{activation}.std={stats.std:.6e}",
                        f"{activation}.range={stats.range:.6e}"]
    stats_path = os.path.join(args.out, "summary_stats.txt")
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(stats_lines) + "\n")

    # constant-summary epsilon sweep on a labeled dataset
    if args.synthetic:
        g, x, split = sbm_generate(rng=rng.stream("sbm"),
                                   **_SBM_FIXTURE)
    else:
        if not args.labels:
            raise ConfigError("diagnose on a real dataset needs --labels")
        g, x = _load_dataset(args)
        split = load_labels(args.labels, num_nodes=g.num_nodes)
        inputs[args.labels] = None
    sweep_cfg = TrainConfig(
        lr=cfg["lr"], epochs=cfg["sweep_epochs"], patience=None,
        hidden=cfg["sweep_hidden"], num_conv=cfg["num_conv"],
        num_proj=cfg["num_proj"], aggregation="sum",
        activation=cfg["activation"], seed=cfg["seed"])
    pcfg = _probe_config(cfg)
    accs = []
    for eps in SWEEP_EPSILONS:
        params, _ = train_dgi_constant_summary(g, x, sweep_cfg, eps)
        h = encode_frozen(g, x, params)
        accs.append(logistic_probe(h, split, pcfg)["test"])
    others = accs[1:]
    flag = "collapsed" if accs[0] < min(others) - 0.05 else ""
    rows = [f"{eps:g},{acc:.6f},{flag if i == 0 else ''}"
            for i, (eps, acc) in enumerate(zip(SWEEP_EPSILONS, accs))]
    sweep_path = os.path.join(args.out, "epsilon_sweep.csv")
    _write_csv(sweep_path, "epsilon,test_accuracy,flag", rows)
    fig_path = os.path.join(args.out, "epsilon_sweep.png")
    plots.save_epsilon_sweep(SWEEP_EPSILONS, accs, fig_path)

    write_manifest(args.out, "diagnose", cfg, inputs,
                   {"summary_stats": stats_path, "epsilon_sweep": sweep_path,
                    "epsilon_sweep_figure": fig_path}, started)
    for line in stats_lines:
        print(line)
    print(f"epsilon sweep accuracies: "
          + " ".join(f"{e:g}:{a:.4f}" for e, a in zip(SWEEP_EPSILONS, accs)))
    return EXIT_OK


def cmd_ablate(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    g, x = _load_dataset(args)
    split = load_labels(args.labels, num_nodes=g.num_nodes)
    pcfg = _probe_config(cfg)
    rows, accs = [], []
    for mode in AGGREGATIONS:
        tcfg = _train_config({**cfg, "aggregation": mode})
        params, _ = train(g, x, tcfg)
        h = embed(g, x, params, cfg["power"])
        acc = logistic_probe(h, split, pcfg)["test"]
        rows.append(f"{mode},{acc:.6f}")
        accs.append(acc)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "ablation.csv")
    _write_csv(csv_path, "aggregation,test_accuracy", rows)
    fig_path = os.path.join(args.out, "ablation.png")
    plots.save_ablation(list(AGGREGATIONS), accs, fig_path)
    write_manifest(args.out, "ablate", cfg,
                   {args.graph: None, args.features: None, args.labels: None},
                   {"ablation": csv_path, "ablation_figure": fig_path},
                   started)
    for row in rows:
        print(row.replace(",", " = "))
    return EXIT_OK


def cmd_bench(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    sizes = tuple(int(tok) for tok in args.sizes.split(","))
    bcfg = bench_mod.BenchConfig(sizes=sizes, hidden=cfg["hidden"],
                                 seed=cfg["seed"])
    report = bench_mod.scaling_report(bcfg)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "bench.csv")
    _write_csv(csv_path, "nodes,gd_epoch_seconds,pairwise_pass_seconds",
               [f"{r['nodes']},{r['gd_epoch_seconds']:.6g},"
                f"{r['pairwise_pass_seconds']:.6g}" for r in report["rows"]])
    fig_path = os.path.join(args.out, "scaling.png")
    plots.save_scaling(report, fig_path)
    artifacts = {"bench": csv_path, "scaling_figure": fig_path}
    extra = {"gd_slope": report["gd_slope"], "gd_r2": report["gd_r2"],
             "pairwise_slope": report["pairwise_slope"],
             "pairwise_r2": report["pairwise_r2"],
             "bench_config": {"hidden": bcfg.hidden, "feat_dim": bcfg.feat_dim,
                              "avg_degree": bcfg.avg_degree,
                              "num_conv": 1, "num_proj": 0}}
    if args.graph_power:
        rows = bench_graph_power(list(sizes), n=10, hidden=cfg["hidden"],
                                 seed=cfg["seed"])
        gp_path = os.path.join(args.out, "power_bench.csv")
        _write_csv(gp_path, "nodes,nnz,power,seconds",
                   [f"{r['nodes']},{r['nnz']},{r['power']},{r['seconds']:.6g}"
                    for r in rows])
        gp_fig = os.path.join(args.out, "power_bench.png")
        plots.save_power_bench(rows, gp_fig)
        artifacts.update({"power_bench": gp_path,
                          "power_bench_figure": gp_fig})
    write_manifest(args.out, "bench", cfg, {}, artifacts, started, extra)
    print(f"gd slope {report['gd_slope']:.3f} (r2 {report['gd_r2']:.3f}); "
          f"pairwise slope {report['pairwise_slope']:.3f} "
          f"(r2 {report['pairwise_r2']:.3f})")
    for r in report["rows"]:
        print(f"n={r['nodes']}: gd {r['gd_epoch_seconds']:.4f}s  "
              f"pairwise {r['pairwise_pass_seconds']:.4f}s")
    return EXIT_OK


def cmd_gen(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    rng = RngState(cfg["seed"])
    g, x, split = sbm_generate(n=args.nodes, k=args.classes, p_in=args.p_in,
                               p_out=args.p_out, feat_dim=args.feat_dim,
                               noise=args.noise, rng=rng.stream("sbm"))
    os.makedirs(args.out, exist_ok=True)
    graph_path = os.path.join(args.out, "edges.txt")
    feat_path = os.path.join(args.out, "features.ggdf")
    label_path = os.path.join(args.out, "labels.txt")
    save_edge_list(graph_path, g)
    save_features(feat_path, x)
    save_labels(label_path, split)
    write_manifest(args.out, "gen", cfg, {},
                   {"graph": graph_path, "features": feat_path,
                    "labels": label_path}, started,
                   extra={"nodes": g.num_nodes, "edges": g.nnz // 2,
                          "classes": args.classes})
    print(f"generated {g.num_nodes} nodes, {g.nnz // 2} undirected edges, "
          f"{args.classes} classes")
    return EXIT_OK


# -- argument wiring ---------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=_parse_patience)
    p.add_argument("--hidden", type=int)
    p.add_argument("--num-conv", dest="num_conv", type=int)
    p.add_argument("--num-proj", dest="num_proj", type=int)
    p.add_argument("--aggregation", choices=AGGREGATIONS)
    p.add_argument("--activation", choices=("prelu", "relu", "lrelu"))
    p.add_argument("--augment", dest="augment", action="store_const",
                   const=True, default=None)
    p.add_argument("--drop-edge-p", dest="drop_edge_p", type=float)
    p.add_argument("--drop-feat-p", dest="drop_feat_p", type=float)
    p.add_argument("--power", type=int)
    p.add_argument("--minibatch", dest="minibatch", action="store_const",
                   const=True, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--fanouts", type=_parse_fanouts)
    p.add_argument("--prefetch-depth", dest="prefetch_depth", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--probe-lr", dest="probe_lr", type=float)
    p.add_argument("--probe-epochs", dest="probe_epochs", type=int)
    p.add_argument("--probe-l2", dest="probe_l2", type=float)
    p.add_argument("--stats-hidden", dest="stats_hidden", type=int)
    p.add_argument("--sweep-hidden", dest="sweep_hidden", type=int)
    p.add_argument("--sweep-epochs", dest="sweep_epochs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ggd",
        description="Self-supervised node embeddings via group discrimination")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an encoder")
    p.add_argument("--graph", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="emit embeddings from a checkpoint")
    p.add_argument("--graph", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("probe", help="logistic readout on embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("diagnose",
                       help="summary statistics and constant-summary sweep")
    p.add_argument("--graph")
    p.add_argument("--features")
    p.add_argument("--labels")
    p.add_argument("--synthetic", choices=("cora-shape",),
                   help="run on built-in synthetic fixtures")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("ablate", help="compare aggregation modes")
    p.add_argument("--graph", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="scaling benchmark")
    p.add_argument("--sizes", default="1024,2048,4096,8192")
    p.add_argument("--graph-power", dest="graph_power", action="store_true")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write a synthetic block-model dataset")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--p-in", dest="p_in", type=float, default=0.02)
    p.add_argument("--p-out", dest="p_out", type=float, default=0.002)
    p.add_argument("--feat-dim", dest="feat_dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "diagnose" and not args.synthetic:
        if not (args.graph and args.features):
            parser.error("diagnose needs --graph/--features or --synthetic")
    try:
        workers = getattr(args, "workers", None)
        if workers is None and getattr(args, "config", None):
            workers = load_config_file(args.config).get("workers")
        if workers is None:
            workers = CONFIG_SCHEMA["workers"][1]
        if workers < 1:
            raise ConfigError(f"workers must be >= 1, got {workers}")
        with threadpool_limits(limits=workers):
            return args.func(args)
    except (ConfigError, CorruptionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, IdRangeError, ShapeError, GraphError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
