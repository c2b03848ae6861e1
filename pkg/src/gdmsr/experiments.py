"""End-to-end experiment drivers: denoise -> recommend -> evaluate, plus ablations."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import subprocess
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .dataset import Dataset, SocialGraph, inject_fake_relations, load_dataset, load_synthetic
from .denoiser import (DenoiseConfig, Denoiser, calibrate_R, denoise_graph, rule_based_denoise, train_denoiser,
                       user_ratios, write_denoised)
from .evaluation import evaluate_ranking
from .recommender import train_recommender

log = logging.getLogger(__name__)

KINDS = ("pipeline", "alpha_sweep", "scorer_ablation", "uniform_vs_adaptive", "synthetic_noise", "zero_shot")


@lru_cache(maxsize=1)
def build_id() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def load_data(cfg: RunConfig) -> tuple[Dataset, SocialGraph]:
    ds = cfg.dataset
    if ds.interactions and ds.social:
        return load_dataset(ds.interactions, ds.social, cfg.filter, cfg.split, ds.seed)
    if ds.synthetic is not None:
        return load_synthetic(cfg.filter, cfg.split, ds.seed, **ds.synthetic)
    raise ConfigError("dataset: give either interactions+social paths or a synthetic section")


def with_target(g: SocialGraph, dcfg: DenoiseConfig, target: float | None) -> DenoiseConfig:
    """Config whose adaptive R removes ``target`` of ``g``'s edges overall."""
    if target is None:
        return dcfg
    if target <= 0:
        return dataclasses.replace(dcfg, ratio_mode="uniform", uniform_ratio=0.0)
    return dataclasses.replace(dcfg, R=calibrate_R(g, target, dcfg.epsilon, dcfg.gamma))


def fit_and_score(d: Dataset, g: SocialGraph, cfg: RunConfig, seed: int) -> dict:
    rcfg = dataclasses.replace(cfg.recommender, seed=seed)
    model = train_recommender(d, g, rcfg)
    rep = evaluate_ranking(model, d, cfg.eval.n_negatives, seed=seed, ks=tuple(cfg.eval.ks))
    return dict(rep.metrics)


def _removal(g: SocialGraph) -> float:
    return float(1.0 - g.active.mean()) if g.n_edges else 0.0


def _row(**kw) -> dict:
    return {k: (round(v, 10) if isinstance(v, float) else v) for k, v in kw.items()}


# ------------------------------------------------------------------ drivers


def run_pipeline(d, g, cfg: RunConfig, out: Path) -> list:
    rows = []
    for seed in cfg.experiment.seeds:
        dcfg = with_target(g, dataclasses.replace(cfg.denoiser, seed=seed), cfg.experiment.target_ratio)
        model = train_denoiser(d, g, dcfg)
        res = denoise_graph(g, model.store, dcfg)
        write_denoised(out / f"denoised_seed{seed}.tsv", out / f"denoised_seed{seed}.json", res, model.store,
                       dcfg, seed)
        rule_ratio = cfg.experiment.rule_ratio
        if rule_ratio is None:
            rule_ratio = user_ratios(g, dcfg)
        rule = rule_based_denoise(d, g, rule_ratio)
        for arm, graph in (("full", g.reset()), ("gdmsr", res.graph), ("rule", rule.graph)):
            rows.append(_row(seed=seed, arm=arm, removal=_removal(graph), **fit_and_score(d, graph, cfg, seed)))
    return rows


def run_alpha_sweep(d, g, cfg: RunConfig, out: Path) -> list:
    rows = []
    for seed in cfg.experiment.seeds:
        for alpha in cfg.experiment.alphas:
            dcfg = with_target(g, dataclasses.replace(cfg.denoiser, seed=seed, alpha=alpha),
                               cfg.experiment.target_ratio)
            model = train_denoiser(d, g, dcfg)
            graph = denoise_graph(g, model.store, dcfg).graph
            rows.append(_row(seed=seed, alpha=alpha, removal=_removal(graph), **fit_and_score(d, graph, cfg, seed)))
    return rows


def run_scorer_ablation(d, g, cfg: RunConfig, out: Path) -> list:
    rows = []
    for seed in cfg.experiment.seeds:
        for scorer in cfg.experiment.scorers:
            dcfg = with_target(g, dataclasses.replace(cfg.denoiser, seed=seed, scorer=scorer),
                               cfg.experiment.target_ratio)
            model = train_denoiser(d, g, dcfg)
            graph = denoise_graph(g, model.store, dcfg).graph
            rows.append(_row(seed=seed, scorer=scorer, removal=_removal(graph), **fit_and_score(d, graph, cfg, seed)))
    return rows


def ratio_arms(g: SocialGraph, model: Denoiser, ratios, cfg: DenoiseConfig):
    """Yield ``(mode, ratio, graph)`` re-denoising one trained store at each overall ratio."""
    for ratio in ratios:
        if ratio <= 0:
            yield "control", 0.0, g.reset()
            continue
        adaptive = with_target(g, cfg, ratio)
        yield "adaptive", ratio, denoise_graph(g, model.store, adaptive).graph
        uniform = dataclasses.replace(cfg, ratio_mode="uniform", uniform_ratio=ratio)
        yield "uniform", ratio, denoise_graph(g, model.store, uniform).graph


def run_uniform_vs_adaptive(d, g, cfg: RunConfig, out: Path) -> list:
    rows = []
    for seed in cfg.experiment.seeds:
        dcfg = with_target(g, dataclasses.replace(cfg.denoiser, seed=seed), cfg.experiment.target_ratio)
        model = train_denoiser(d, g, dcfg)
        control = None
        for mode, ratio, graph in ratio_arms(g, model, cfg.experiment.ratios, dcfg):
            if mode == "control":
                control = fit_and_score(d, graph, cfg, seed)
                for m in ("adaptive", "uniform"):
                    rows.append(_row(seed=seed, mode=m, ratio=0.0, removal=0.0, **control))
                continue
            rows.append(_row(seed=seed, mode=mode, ratio=ratio, removal=_removal(graph),
                             **fit_and_score(d, graph, cfg, seed)))
    return rows


def synthetic_variants(dcfg: DenoiseConfig, uniform_ratio: float) -> dict:
    """GDMSR and its two ablated variants for the fake-relation study."""
    plain = dataclasses.replace(dcfg, ratio_mode="uniform", uniform_ratio=uniform_ratio, beta=0.0)
    return {
        "gdmsr": dcfg,
        "wo_ad": plain,
        "wo_ad_sc": dataclasses.replace(plain, curriculum=False),
    }


def run_synthetic_noise(d, g, cfg: RunConfig, out: Path) -> tuple[list, list]:
    gf = inject_fake_relations(g, cfg.experiment.fake_seed)
    target = cfg.experiment.target_ratio if cfg.experiment.target_ratio is not None else 0.125
    rows, curves = [], []
    for seed in cfg.experiment.seeds:
        base = with_target(gf, dataclasses.replace(cfg.denoiser, seed=seed), target)
        for name, vcfg in synthetic_variants(base, target).items():
            def track(epoch, model, name=name, vcfg=vcfg):
                if epoch % vcfg.curriculum_period == 0:
                    s = denoise_graph(gf, model.store, vcfg).summary
                    r = s["per_provenance_retention"]
                    curves.append(_row(seed=seed, variant=name, epoch=epoch, observed=r["observed"], fake=r["fake"]))

            model = train_denoiser(d, gf, vcfg, callback=track)
            s = denoise_graph(gf, model.store, vcfg).summary
            r = s["per_provenance_retention"]
            obs_rm, fake_rm = 1.0 - r["observed"], 1.0 - r["fake"]
            rows.append(_row(seed=seed, variant=name, observed_removal=obs_rm, fake_removal=fake_rm,
                             factor=fake_rm / obs_rm if obs_rm > 0 else float("inf"),
                             gap=fake_rm - obs_rm, overall_removal=s["overall_removal_ratio"]))
    return rows, curves


def run_zero_shot(d, g, cfg: RunConfig, out: Path) -> list:
    rows = []
    for seed in cfg.experiment.seeds:
        dcfg = with_target(g, dataclasses.replace(cfg.denoiser, seed=seed,
                                                  interaction_fraction=cfg.experiment.zero_shot_fraction),
                           cfg.experiment.target_ratio)
        model = train_denoiser(d, g, dcfg)
        graph = denoise_graph(g, model.store, dcfg).graph
        rows.append(_row(seed=seed, arm="full", removal=0.0, **fit_and_score(d, g.reset(), cfg, seed)))
        rows.append(_row(seed=seed, arm="zero_shot", removal=_removal(graph), **fit_and_score(d, graph, cfg, seed)))
    return rows


def write_csv(path: Path, rows: list) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def run_experiment(cfg: RunConfig, out_dir, data: tuple | None = None) -> dict:
    """Run ``cfg.experiment.kind`` and write ``metrics.json`` plus CSV plot data into ``out_dir``."""
    kind = cfg.experiment.kind
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d, g = data if data is not None else load_data(cfg)
    extra = {}
    if kind == "synthetic_noise":
        rows, curves = run_synthetic_noise(d, g, cfg, out)
        write_csv(out / "retention_curves.csv", curves)
        extra["curves"] = curves
    else:
        driver = {"pipeline": run_pipeline, "alpha_sweep": run_alpha_sweep, "scorer_ablation": run_scorer_ablation,
                  "uniform_vs_adaptive": run_uniform_vs_adaptive, "zero_shot": run_zero_shot}[kind]
        rows = driver(d, g, cfg, out)
    write_csv(out / f"{kind}.csv", rows)
    result = {"kind": kind, "metrics": {"rows": rows, **extra}, "config": cfg.to_dict(),
              "seed": list(cfg.experiment.seeds), "build": build_id()}
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    return result
