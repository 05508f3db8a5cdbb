"""Run-quality metrics: cumulative max fitness, mean fitness, fDiv."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def cumulative_max(pool, upto_round: int) -> float:
    values = pool.fitness_values(upto_round)
    if values.size == 0:
        raise ValueError(f"no entries acquired by round {upto_round}")
    return float(values.max())


def top_k_entries(pool, K: int) -> list:
    """The K best (sequence, fitness) pairs, ties broken lexicographically."""
    if len(pool) < K:
        raise ValueError(f"pool has {len(pool)} entries, fewer than K={K}")
    ranked = sorted(pool.items(), key=lambda kv: (-kv[1].fitness, kv[0].indices))
    return [(seq, entry.fitness) for seq, entry in ranked[:K]]


def mean_fitness_topk(pool, K: int) -> float:
    if K < 1:
        raise ValueError("K must be >= 1")
    return float(np.mean([f for _, f in top_k_entries(pool, K)]))


def mean_fitness_all(pool) -> float:
    values = pool.fitness_values()
    if values.size == 0:
        raise ValueError("pool is empty")
    return float(values.mean())


def fdiv(top_k: list) -> float:
    """Fitness-weighted diversity.

    Sum over ordered pairs i != j of ``d(x_i, x_j) * (F_i + F_j)``, divided
    by ``2 |D| (|D| - 1)``; ``d`` is the Hamming distance.
    """
    n = len(top_k)
    if n < 2:
        raise ValueError("fdiv needs at least two sequences")
    X = np.array([s.indices for s, _ in top_k])
    F = np.array([f for _, f in top_k], dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("all sequences must have the same length")
    dist = (X[:, None, :] != X[None, :, :]).sum(axis=-1)
    weight = F[:, None] + F[None, :]
    return float((dist * weight).sum() / (2.0 * n * (n - 1)))


@dataclass
class MetricsSummary:
    cumulative_max_fitness: float
    mean_fitness: float
    fdiv: float
    per_round_max: list
    mean_fitness_all: float = float("nan")
    seeds: int = 1
    std: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.per_round_max and self.cumulative_max_fitness != max(self.per_round_max):
            raise ValueError("cumulative max must equal the last per-round max")


def summarize(pool, rounds: int, K: int) -> MetricsSummary:
    per_round = [cumulative_max(pool, r) for r in range(1, rounds + 1)]
    top = top_k_entries(pool, K)
    div = fdiv(top) if len(top) >= 2 else 0.0
    return MetricsSummary(
        cumulative_max_fitness=per_round[-1],
        mean_fitness=float(np.mean([f for _, f in top])),
        fdiv=div,
        per_round_max=per_round,
        mean_fitness_all=mean_fitness_all(pool),
    )


def aggregate(summaries: list) -> MetricsSummary:
    """Mean and population standard deviation over per-seed summaries."""
    if not summaries:
        raise ValueError("nothing to aggregate")
    keys = ("cumulative_max_fitness", "mean_fitness", "fdiv", "mean_fitness_all")
    means = {k: float(np.mean([getattr(s, k) for s in summaries])) for k in keys}
    std = {k: float(np.std([getattr(s, k) for s in summaries])) for k in keys}
    curves = np.array([s.per_round_max for s in summaries])
    std["per_round_max"] = curves.std(axis=0).tolist()
    per_round = curves.mean(axis=0).tolist()
    # the mean of per-seed maxima is the mean curve's final point
    return MetricsSummary(
        cumulative_max_fitness=per_round[-1],
        mean_fitness=means["mean_fitness"],
        fdiv=means["fdiv"],
        per_round_max=per_round,
        mean_fitness_all=means["mean_fitness_all"],
        seeds=len(summaries),
        std=std,
    )
