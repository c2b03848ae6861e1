"""Command line entry point: ``gdmsr <subcommand> [--config C] [--seed S] [--out DIR]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ConfigError, RunConfig, load_config
from .dataset import (DataError, SocialGraph, co_interaction_stats, inject_fake_relations, load_prepared,
                      save_prepared, write_stats_csv)
from .denoiser import ConfidenceStore, DenoiseConfig, denoise_graph, rule_based_denoise, train_denoiser, write_denoised
from .evaluation import bench_inference, evaluate_ranking
from .experiments import build_id, load_data, run_experiment, with_target
from .numerics import Tensor
from .recommender import TrainedRecommender, train_recommender
from .graphconv import LayerStack, ModelParams

log = logging.getLogger("gdmsr")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.dataset.seed = args.seed
        cfg.denoiser = dataclasses.replace(cfg.denoiser, seed=args.seed)
        cfg.recommender = dataclasses.replace(cfg.recommender, seed=args.seed)
        cfg.experiment.seeds = [args.seed]
    return cfg


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def _read_graph_tsv(path, n_users: int) -> SocialGraph:
    rows = np.loadtxt(path, dtype=np.float64, delimiter="\t", ndmin=2)
    if rows.size == 0:
        return SocialGraph(n_users, [], [])
    return SocialGraph(n_users, rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64))


def cmd_prepare(args):
    cfg, out = _config(args), _out(args)
    d, g = load_data(cfg)
    save_prepared(out / "prepared.npz", d, g)
    users, ratios = co_interaction_stats(d, g)
    write_stats_csv(out / "co_interaction.csv", users, ratios)
    _dump(out / "prepare.json", {"n_users": d.n_users, "n_items": d.n_items, "n_train": len(d.train),
                                  "n_valid": len(d.valid), "n_test": len(d.test),
                                  "n_relations_directed": g.n_edges,
                                  "median_co_interaction_ratio": float(np.median(ratios)) if len(ratios) else None})
    print(f"prepared {d.n_users} users, {d.n_items} items, {len(d.all_pairs())} interactions, "
          f"{g.undirected_count()} relations -> {out / 'prepared.npz'}")


def cmd_inject_noise(args):
    cfg, out = _config(args), _out(args)
    d, g = load_prepared(args.data)
    gf = inject_fake_relations(g, cfg.experiment.fake_seed if args.seed is None else args.seed)
    save_prepared(out / "prepared.npz", d, gf)
    print(f"injected {gf.undirected_count() - g.undirected_count()} fake relations -> {out / 'prepared.npz'}")


def cmd_train_denoiser(args):
    cfg, out = _config(args), _out(args)
    d, g = load_prepared(args.data)
    dcfg = with_target(g, cfg.denoiser, cfg.experiment.target_ratio)
    model = train_denoiser(d, g, dcfg)
    tensors = model.tensors()
    tensors["store.scores"] = model.store.scores
    tensors["curriculum.active"] = model.graph.active.astype(np.float32)
    checkpoint.save_checkpoint(out / "denoiser.gdmsr", tensors,
                               {"config": dataclasses.asdict(dcfg), "period": model.store.period,
                                "losses": model.losses})
    print(f"trained denoiser ({dcfg.epochs} epochs, {model.n_updates} curriculum updates) -> {out / 'denoiser.gdmsr'}")


def cmd_denoise(args):
    cfg, out = _config(args), _out(args)
    d, g = load_prepared(args.data)
    tensors, meta = checkpoint.load_checkpoint(args.checkpoint)
    dcfg = DenoiseConfig(**meta["config"])
    if cfg.experiment.target_ratio is not None:
        dcfg = with_target(g, dcfg, cfg.experiment.target_ratio)
    # scores are kept in float32 by the container; widen before ranking
    store = ConfidenceStore(tensors["store.scores"].astype(np.float64), meta.get("period", 0))
    if args.rule is not None:
        res = rule_based_denoise(d, g, args.rule)
    else:
        res = denoise_graph(g, store, dcfg)
    seed = dcfg.seed if args.seed is None else args.seed
    write_denoised(out / "denoised.tsv", out / "denoised.json", res, store, dcfg, seed)
    print(f"removed {res.summary['overall_removal_ratio']:.4f} of relations -> {out / 'denoised.tsv'}")


def _save_rec(path: Path, m: TrainedRecommender, meta: dict) -> None:
    checkpoint.save_checkpoint(path, {"E1": m.params.E1.data, "E2": m.params.E2.data,
                                      "E1_star": m.user_table, "E2_star": m.item_table}, meta)


def _load_rec(path) -> TrainedRecommender:
    t, meta = checkpoint.load_checkpoint(path)
    stack = LayerStack([Tensor(t["E1"])], [Tensor(t["E2"])], Tensor(t["E1_star"]), Tensor(t["E2_star"]))
    return TrainedRecommender(ModelParams(Tensor(t["E1"]), Tensor(t["E2"]), meta.get("K", 2)), stack, None)


def cmd_train_rec(args):
    cfg, out = _config(args), _out(args)
    d, g = load_prepared(args.data)
    if args.graph:
        g = _read_graph_tsv(args.graph, d.n_users)
    m = train_recommender(d, g, cfg.recommender)
    _save_rec(out / "recommender.gdmsr", m, {"K": cfg.recommender.K, "config": dataclasses.asdict(cfg.recommender)})
    print(f"trained recommender on {int(g.active.sum())} relations -> {out / 'recommender.gdmsr'}")


def cmd_evaluate(args):
    cfg, out = _config(args), _out(args)
    d, _ = load_prepared(args.data)
    m = _load_rec(args.checkpoint)
    seed = cfg.recommender.seed if args.seed is None else args.seed
    rep = evaluate_ranking(m, d, cfg.eval.n_negatives, seed=seed, ks=tuple(cfg.eval.ks))
    _dump(out / "metrics.json", {"metrics": rep.metrics, "config": cfg.to_dict(), "seed": seed,
                                 "build": build_id(), "flagged_users": rep.flagged})
    print(json.dumps(rep.metrics, sort_keys=True))


def cmd_bench(args):
    cfg, out = _config(args), _out(args)
    d, g = load_prepared(args.data)
    ratios = [float(r) for r in args.ratios.split(",")]
    graphs = {r: rule_based_denoise(d, g, r).graph for r in ratios}
    if args.checkpoint:
        table = _load_rec(args.checkpoint).user_table
    else:
        table = np.random.default_rng(cfg.recommender.seed).normal(0, 0.01, (d.n_users, cfg.recommender.dim))
    reports = bench_inference(table.astype(np.float32), graphs, args.workload, hops=cfg.recommender.K,
                              repeats=args.repeats, seed=cfg.recommender.seed)
    rows = [dict(dataclasses.asdict(r), dispersion=r.dispersion) for r in reports]
    _dump(out / "bench.json", {"reports": rows, "build": build_id()})
    for r in reports:
        print(f"ratio={r.ratio:.2f} edges={r.n_edges} median={r.median_seconds * 1e3:.3f} ms")


def cmd_experiment(args):
    cfg, out = _config(args), _out(args)
    if args.kind:
        cfg.experiment.kind = args.kind
    res = run_experiment(cfg, out)
    print(f"{res['kind']}: {len(res['metrics']['rows'])} rows -> {out / 'metrics.json'}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdmsr", description="Preference-guided social graph denoising.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.set_defaults(func=fn)
        return sp

    add("prepare", cmd_prepare, "filter, remap and split raw data")
    add("inject-noise", cmd_inject_noise, "add fake relations").add_argument("--data", required=True)
    sp = add("train-denoiser", cmd_train_denoiser, "train the relation denoiser")
    sp.add_argument("--data", required=True)
    sp = add("denoise", cmd_denoise, "export a denoised graph")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--rule", type=float, default=None, help="use co-interaction rule at this ratio instead")
    sp = add("train-rec", cmd_train_rec, "train the downstream recommender")
    sp.add_argument("--data", required=True)
    sp.add_argument("--graph", help="denoised graph TSV (defaults to the full graph)")
    sp = add("evaluate", cmd_evaluate, "real-plus-N ranking evaluation")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp = add("bench", cmd_bench, "social-side inference benchmark")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--ratios", default="0,0.2,0.4")
    sp.add_argument("--workload", type=int, default=500_000)
    sp.add_argument("--repeats", type=int, default=5)
    sp = add("experiment", cmd_experiment, "run an experiment driver")
    sp.add_argument("--kind", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, DataError, checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
