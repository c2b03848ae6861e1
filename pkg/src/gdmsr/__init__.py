"""Preference-guided social graph denoising for GCN social recommenders."""

from ._accel import backend
from .dataset import Dataset, SocialGraph, load_dataset, inject_fake_relations, co_interaction_stats
from .denoiser import DenoiseConfig, train_denoiser, denoise_graph, rule_based_denoise
from .recommender import RecConfig, train_recommender, score_all
from .evaluation import evaluate_ranking, bench_inference
from .experiments import run_experiment

__version__ = "0.1.0"

__all__ = [
    "backend", "Dataset", "SocialGraph", "load_dataset", "inject_fake_relations", "co_interaction_stats",
    "DenoiseConfig", "train_denoiser", "denoise_graph", "rule_based_denoise", "RecConfig", "train_recommender",
    "score_all", "evaluate_ranking", "bench_inference", "run_experiment",
]
