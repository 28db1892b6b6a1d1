"""Episodic evaluation: task sampling, accuracy with 95% intervals, parameter sweeps."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from .baselines import gap_proto_predict, local_match_predict, matching_predict, nbnn_predict
from .core import Episode, MethodConfig, Predictions
from .io import FeatureStore
from .propagation import local_propagation_predict

METHODS: Dict[str, Callable[[Episode, MethodConfig], Predictions]] = {
    "gap-proto": gap_proto_predict,
    "matching": matching_predict,
    "local-match": local_match_predict,
    "nbnn": nbnn_predict,
    "local-lp": local_propagation_predict,
    "global-lp": local_propagation_predict,
}

GLOBAL_KNN = 5
LOCAL_KNN = 50

# sweep parameter name -> MethodConfig field; queries-per-class is an episode setting
SWEEP_PARAMS = {
    "tau": "tau",
    "clusters": "clusters",
    "knn": "knn",
    "gamma": "gamma",
    "alpha-feature": "alpha_feature",
    "alpha-label": "alpha_label",
    "queries-per-class": None,
}


class EpisodeError(RuntimeError):
    def __init__(self, index: int, seed: int, cause: Exception):
        super().__init__(f"episode {index} (seed {seed}) failed: {cause}")
        self.index = index
        self.seed = seed


def method_config(method: str, config: MethodConfig) -> MethodConfig:
    """Apply method-specific overrides; ``global-lp`` is local propagation with one cluster."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    if method == "global-lp":
        return dataclasses.replace(config, clusters=1, use_pooling=True)
    return config


def run_method(method: str, episode: Episode, config: MethodConfig) -> Predictions:
    """Predict every query, jointly when ``config.transductive`` and one at a time otherwise."""
    config = method_config(method, config)
    fn = METHODS[method]
    if config.transductive or episode.num_queries <= 1:
        return fn(episode, config)
    parts = [fn(single, config) for single in episode.singletons()]
    return Predictions(np.vstack([p.scores for p in parts]), np.concatenate([p.labels for p in parts]))


def sample_episode(store: FeatureStore, ways: int, shots: int, queries: int,
                   rng: np.random.Generator) -> Episode:
    """Draw ``ways`` classes, then ``shots`` supports and ``queries // ways`` queries per class."""
    if ways < 1 or shots < 1 or queries < 0:
        raise ValueError("ways and shots must be positive, queries nonnegative")
    if queries % ways:
        raise ValueError(f"{queries} queries cannot be split evenly over {ways} classes")
    per_class = queries // ways
    if store.num_classes < ways:
        raise ValueError(f"store has {store.num_classes} classes, episode needs {ways}")
    need = shots + per_class
    for name, count in zip(store.class_names, store.counts):
        if count < need:
            raise ValueError(f"class {name!r} has {count} images, episode needs {need}")

    classes = rng.choice(store.num_classes, size=ways, replace=False)
    support, support_labels, query, query_labels = [], [], [], []
    for label, cls in enumerate(classes):
        picks = rng.choice(store.counts[cls], size=need, replace=False)
        for i in picks[:shots]:
            support.append(store.tensor(cls, i))
            support_labels.append(label)
        for i in picks[shots:]:
            query.append(store.tensor(cls, i))
            query_labels.append(label)
    return Episode(ways, shots, support, support_labels, query, query_labels)


def episode_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class EvalReport:
    method: str
    config: dict
    episodes: int
    mean_accuracy: float
    ci95: float
    accuracies: List[float]
    ways: int = 5
    shots: int = 1
    queries_per_class: int = 15
    seed: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @classmethod
    def from_accuracies(cls, accuracies: Sequence[float], **kwargs) -> "EvalReport":
        acc = np.asarray(accuracies, dtype=np.float64)
        if acc.size == 0:
            raise ValueError("no episodes")
        std = float(acc.std(ddof=1)) if acc.size > 1 else 0.0
        return cls(episodes=int(acc.size), mean_accuracy=float(acc.mean()),
                   ci95=1.96 * std / math.sqrt(acc.size), accuracies=acc.tolist(), **kwargs)

    def to_dict(self, include_time: bool = False) -> dict:
        out = dataclasses.asdict(self)
        if not include_time:
            # timing varies between runs; keep report files reproducible
            out.pop("wall_time")
        return out

    def to_json(self, include_time: bool = False) -> str:
        return json.dumps(self.to_dict(include_time), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        return f"{self.method}: {100 * self.mean_accuracy:.2f} +- {100 * self.ci95:.2f} % over {self.episodes} episodes"


def evaluate(store: FeatureStore, method: str, config: MethodConfig, episodes: int = 2000,
             seed: int = 0, ways: int = 5, shots: int = 1, queries_per_class: int = 15,
             workers: int = 1) -> EvalReport:
    """Accuracy of ``method`` over ``episodes`` sampled tasks.

    Episode ``i`` is sampled from a generator keyed by ``(seed, i)``, so the
    result does not depend on ``workers``.
    """
    if episodes < 1:
        raise ValueError("episodes must be positive")
    method_config(method, config)
    queries = ways * queries_per_class
    # fail fast on store preconditions before spawning work
    sample_episode(store, ways, shots, queries, episode_rng(seed, 0))

    def one(index: int) -> float:
        try:
            episode = sample_episode(store, ways, shots, queries, episode_rng(seed, index))
            pred = run_method(method, episode, config)
        except Exception as exc:
            raise EpisodeError(index, seed, exc) from exc
        return float(np.mean(pred.labels == np.asarray(episode.query_labels)))

    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            accuracies = list(pool.map(one, range(episodes)))
    else:
        accuracies = [one(i) for i in range(episodes)]
    report = EvalReport.from_accuracies(
        accuracies, method=method, config=dataclasses.asdict(config), ways=ways, shots=shots,
        queries_per_class=queries_per_class, seed=seed,
    )
    report.wall_time = time.perf_counter() - start
    return report


def sweep(store: FeatureStore, method: str, config: MethodConfig, param: str, values: Sequence,
          episodes: int = 2000, seed: int = 0, ways: int = 5, shots: int = 1,
          queries_per_class: int = 15, workers: int = 1) -> List[EvalReport]:
    """One report per value of ``param``; every value sees the same episode seeds."""
    key = param.replace("_", "-")
    if key not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    if len(values) == 0:
        raise ValueError("no sweep values")
    reports = []
    for value in values:
        qpc, cfg = queries_per_class, config
        if SWEEP_PARAMS[key] is None:
            qpc = int(value)
        else:
            field_type = type(getattr(config, SWEEP_PARAMS[key]))
            cfg = dataclasses.replace(config, **{SWEEP_PARAMS[key]: field_type(value)})
        reports.append(evaluate(store, method, cfg, episodes, seed, ways, shots, qpc, workers))
    return reports


def sweep_csv(param: str, values: Sequence, reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["param", "value", "method", "episodes", "mean_accuracy", "ci95"])
    for value, r in zip(values, reports):
        writer.writerow([param, value, r.method, r.episodes, repr(r.mean_accuracy), repr(r.ci95)])
    return buf.getvalue()
