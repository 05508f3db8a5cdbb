"""Outer Bayesian-optimisation loop.

Each round: measure the current batch, refit the surrogate ensemble on
everything measured so far, run HMC proposal chains from the best measured
sequence under every ensemble member, and keep the top-K candidates by
upper confidence bound (ensemble mean + standard deviation).
"""

from __future__ import annotations

import json
import logging
from math import comb
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from .hmc import HmcConfig, run_chains
from .pool import EvaluatedPool
from .seq import Sequence, TaskDefinition, encode_batch, random_mutant
from .surrogate import ModelConfig, SurrogateEnsemble, TrainConfig

log = logging.getLogger(__name__)

PROPOSAL_KINDS = ("hmc", "random")

# spawn_key tags for the seed tree under the master seed
_INIT_MEMBER, _INIT_BATCH, _TRAIN, _CHAINS, _FILL, _RANDOM_PROPOSALS = range(10, 16)


@dataclass
class ModelSettings:
    hidden_width: int = 64
    encoder_depth: int = 2


@dataclass
class RunConfig:
    rounds: int = 10
    queries_per_round: int = 100
    ensemble_size: int = 4
    master_seed: int = 0
    init_mutations: int = 2
    max_chain_restarts: int = 50
    proposals: str = "hmc"
    use_structure: bool = True
    use_ucb: bool = True
    warm_start: bool = False
    hmc: HmcConfig = field(default_factory=HmcConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelSettings = field(default_factory=ModelSettings)

    def __post_init__(self):
        if self.rounds < 1 or self.queries_per_round < 1:
            raise ValueError("rounds and queries_per_round must be >= 1")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.init_mutations < 1:
            raise ValueError("init_mutations must be >= 1")
        if self.proposals not in PROPOSAL_KINDS:
            raise ValueError(f"proposals must be one of {PROPOSAL_KINDS}")

    @property
    def members(self) -> int:
        # without UCB the acquisition relies on a single model
        return self.ensemble_size if self.use_ucb else 1


@dataclass
class RoundRecord:
    round_index: int
    queried: list
    best_so_far: tuple
    candidate_pool_size: int
    acceptance_rate: Optional[float]
    cumulative_max: float
    mean_topk: float
    oracle_calls: int

    @property
    def round_max(self) -> float:
        return max(f for _, f in self.queried)

    def log_fields(self, alphabet) -> dict:
        return {
            "round": self.round_index,
            "queried_count": len(self.queried),
            "round_max": self.round_max,
            "cumulative_max": self.cumulative_max,
            "mean_topk": self.mean_topk,
            "acceptance_rate": self.acceptance_rate,
            "best_sequence": self.best_so_far[0].to_string(alphabet),
        }


@dataclass
class Proposal:
    candidates: list
    proposals: int = 0
    acceptances: int = 0

    @property
    def acceptance_rate(self) -> Optional[float]:
        return self.acceptances / self.proposals if self.proposals else None


def _seed(cfg: RunConfig, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.master_seed, spawn_key=tuple(key))


def _rng(cfg: RunConfig, *key) -> np.random.Generator:
    return np.random.default_rng(_seed(cfg, *key))


def initialize_round_one(task: TaskDefinition, cfg: RunConfig,
                         rng: Optional[np.random.Generator] = None) -> list:
    """Wild type plus K-1 distinct random mutants with ``init_mutations`` substitutions."""
    rng = rng if rng is not None else _rng(cfg, _INIT_BATCH)
    K = cfg.queries_per_round
    L, S = task.length, task.alphabet.size
    m = min(cfg.init_mutations, L)
    reachable = 1 + comb(L, m) * (S - 1) ** m
    if reachable < K:
        raise ValueError(f"only {reachable} sequences reachable with {m} mutations, need K={K}")
    batch = [task.wild_type]
    seen = {task.wild_type}
    while len(batch) < K:
        mutant = random_mutant(task.wild_type, m, rng, S)
        if mutant not in seen:
            seen.add(mutant)
            batch.append(mutant)
    return batch


def _random_fill(parent: Sequence, exclude, n: int, rng: np.random.Generator,
                 alphabet_size: int, max_tries: int = 10_000) -> list:
    """Up to ``n`` new random mutants of ``parent`` (1..L substitutions each)."""
    out = []
    L = len(parent)
    tries = 0
    while len(out) < n and tries < max_tries:
        tries += 1
        mutant = random_mutant(parent, int(rng.integers(1, L + 1)), rng, alphabet_size)
        if mutant not in exclude:
            exclude.add(mutant)
            out.append(mutant)
    return out


def propose_candidates(ens: SurrogateEnsemble, x_best: Sequence, cfg: RunConfig,
                       round_index: int = 0) -> Proposal:
    """Per-member candidate sets seeded with ``x_best`` and grown to K.

    HMC batches of ``cfg.hmc.chains`` chains are run until the member's set
    holds K distinct sequences or ``max_chain_restarts`` batches have run;
    any shortfall is padded with random mutants of ``x_best``.  Each member
    set is truncated to its first K entries, and the union across members
    keeps first-seen order.
    """
    K = cfg.queries_per_round
    S = ens.members[0].config.input_shape[1]
    union: dict = {}
    total = Proposal([])
    for i, model in enumerate(ens.members):
        found = {x_best: None}
        if cfg.proposals == "hmc":
            for restart in range(cfg.max_chain_restarts):
                if len(found) >= K:
                    break
                streams = [np.random.default_rng(s)
                           for s in _seed(cfg, _CHAINS, round_index, i, restart).spawn(cfg.hmc.chains)]
                for res in run_chains(x_best, model, cfg.hmc, streams):
                    total.proposals += res.proposals
                    total.acceptances += res.acceptances
                    for seq in res.accepted:
                        found.setdefault(seq, None)
        if len(found) < K:
            rng = _rng(cfg, _RANDOM_PROPOSALS, round_index, i)
            exclude = set(found)
            for seq in _random_fill(x_best, exclude, K - len(found), rng, S):
                found[seq] = None
        for seq in list(found)[:K]:
            union.setdefault(seq, None)
    total.candidates = list(union)
    return total


def rank_candidates(ens: SurrogateEnsemble, candidates: list, use_ucb: bool = True) -> list:
    """(score, sequence) pairs sorted by score descending, then sequence."""
    if not candidates:
        return []
    S = ens.members[0].config.input_shape[1]
    X = encode_batch(candidates, S)
    preds = ens.member_predictions(X)
    score = preds.mean(axis=0)
    if use_ucb:
        score = score + preds.std(axis=0)
    order = sorted(range(len(candidates)), key=lambda j: (-score[j], candidates[j].indices))
    return [(float(score[j]), candidates[j]) for j in order]


def select_top_k(ens: SurrogateEnsemble, candidates, pool: EvaluatedPool, K: int,
                 rng: Optional[np.random.Generator] = None, use_ucb: bool = True) -> list:
    """Top K unmeasured candidates by UCB, padded with random mutants of the
    pool's best sequence if too few survive."""
    fresh = list(dict.fromkeys(c for c in candidates if c not in pool))
    chosen = [seq for _, seq in rank_candidates(ens, fresh, use_ucb)[:K]]
    if len(chosen) < K:
        if rng is None:
            raise ValueError("a random stream is needed to pad the batch")
        parent = pool.best()[0] if len(pool) else chosen[0]
        S = ens.members[0].config.input_shape[1]
        exclude = set(pool) | set(chosen)
        chosen += _random_fill(parent, exclude, K - len(chosen), rng, S)
    return chosen


class Experiment:
    """One optimisation run against a landscape.

    After :meth:`run`, ``pool`` holds every measurement, ``records`` the
    per-round summaries and ``ensemble`` the last trained surrogate (None if
    no training happened, i.e. a single round).
    """

    def __init__(self, task: TaskDefinition, oracle, cfg: RunConfig,
                 log_path=None):
        self.task = task
        self.oracle = oracle
        self.cfg = cfg
        self.log_path = Path(log_path) if log_path is not None else None
        self.pool = EvaluatedPool()
        self.records: list = []
        self.ensemble: Optional[SurrogateEnsemble] = None
        self.oracle_calls = 0
        model_cfg = ModelConfig((task.length, task.alphabet.size),
                                cfg.model.hidden_width, cfg.model.encoder_depth)
        seeds = [_seed(cfg, _INIT_MEMBER, i) for i in range(cfg.members)]
        self._initial = SurrogateEnsemble.initialize(model_cfg, seeds)

    def _query(self, batch: list, round_index: int) -> list:
        measured = []
        for seq in batch:
            if seq in self.pool:
                continue
            resp = self.oracle.evaluate(seq)
            self.oracle_calls += 1
            self.pool.add(seq, resp.fitness, resp.structure_distance, round_index)
            measured.append((seq, resp.fitness))
        return measured

    def _train(self, round_index: int) -> SurrogateEnsemble:
        if self.cfg.warm_start and self.ensemble is not None:
            ens = self.ensemble
        else:
            ens = self._initial.copy()
        X, fit, struct = self.pool.training_arrays(self.task.alphabet.size)
        rngs = [_rng(self.cfg, _TRAIN, round_index, i) for i in range(len(ens))]
        ens.fit(X, fit, struct, self.cfg.train, self.cfg.use_structure, rngs)
        return ens

    def _emit(self, record: RoundRecord) -> None:
        self.records.append(record)
        if self.log_path is not None:
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.log_fields(self.task.alphabet)) + "\n")

    def run(self) -> list:
        cfg = self.cfg
        K = cfg.queries_per_round
        if self.log_path is not None:
            self.log_path.write_text("", encoding="utf-8")
        batch = initialize_round_one(self.task, cfg)
        proposal = Proposal(batch)
        for n in range(1, cfg.rounds + 1):
            measured = self._query(batch, n)
            best = self.pool.best()
            self._emit(RoundRecord(
                round_index=n,
                queried=measured,
                best_so_far=best,
                candidate_pool_size=len(proposal.candidates),
                acceptance_rate=proposal.acceptance_rate,
                cumulative_max=metrics.cumulative_max(self.pool, n),
                mean_topk=metrics.mean_fitness_topk(self.pool, min(K, len(self.pool))),
                oracle_calls=self.oracle_calls,
            ))
            log.debug("round %d: best %.4f, %d calls", n, best[1], self.oracle_calls)
            if n == cfg.rounds:
                break
            self.ensemble = self._train(n)
            proposal = propose_candidates(self.ensemble, best[0], cfg, n)
            batch = select_top_k(self.ensemble, proposal.candidates, self.pool, K,
                                 _rng(cfg, _FILL, n), cfg.use_ucb)
        return self.records


def run_experiment(task: TaskDefinition, oracle, cfg: RunConfig, log_path=None) -> list:
    return Experiment(task, oracle, cfg, log_path).run()
