"""Ground-truth landscapes.

Every landscape answers ``fitness(seq)`` and ``structure_distance(seq)``;
``evaluate(seq)`` returns both in a single response.  All landscapes are
read-only after construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .seq import Alphabet, Sequence, TaskDefinition, encode_one_hot

UNKNOWN_POLICIES = ("error", "zero")
STRUCTURE_MODES = ("weighted_hamming", "smooth_random")
ENUMERATION_LIMIT = 10 ** 6
MAX_PROBES = 10 ** 5


class UnknownSequenceError(KeyError):
    pass


@dataclass(frozen=True)
class OracleResponse:
    fitness: float
    structure_distance: float


class ProxyStructureOracle:
    """Synthetic structural distance to the wild type.

    ``weighted_hamming`` sums a positive per-(position, symbol) weight over
    the mutated sites; ``smooth_random`` is the Euclidean distance between
    fixed random linear embeddings of the two one-hot encodings.
    """

    def __init__(self, wild_type: Sequence, alphabet_size: int, seed: int = 0,
                 mode: str = "weighted_hamming", embed_dim: int = 16):
        if mode not in STRUCTURE_MODES:
            raise ValueError(f"structure mode must be one of {STRUCTURE_MODES}")
        self.wild_type = wild_type
        self.alphabet_size = alphabet_size
        self.mode = mode
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
        L = len(wild_type)
        self.weights = rng.uniform(0.1, 1.0, size=(L, alphabet_size))
        self.embedding = rng.standard_normal((L * alphabet_size, embed_dim)) / np.sqrt(embed_dim)
        self._wt_embed = self._embed(wild_type)

    def _embed(self, seq: Sequence) -> np.ndarray:
        return encode_one_hot(seq, self.alphabet_size).reshape(-1) @ self.embedding

    def distance(self, seq: Sequence, wt: Optional[Sequence] = None) -> float:
        wt = self.wild_type if wt is None else wt
        if len(seq) != len(wt):
            raise ValueError(f"length mismatch: {len(seq)} vs {len(wt)}")
        if self.mode == "weighted_hamming":
            return float(sum(self.weights[i, a] for i, (a, b) in enumerate(zip(seq, wt)) if a != b))
        ref = self._wt_embed if wt is self.wild_type else self._embed(wt)
        return float(np.linalg.norm(self._embed(seq) - ref))


def proxy_structure_distance(oracle: ProxyStructureOracle, seq: Sequence, wt: Sequence) -> float:
    return oracle.distance(seq, wt)


class Landscape:
    """Base class: subclasses implement ``fitness``."""

    length: int
    alphabet_size: int
    structure: ProxyStructureOracle

    def fitness(self, seq: Sequence) -> float:
        raise NotImplementedError

    def structure_distance(self, seq: Sequence) -> float:
        return self.structure.distance(seq)

    def evaluate(self, seq: Sequence) -> OracleResponse:
        return OracleResponse(self.fitness(seq), self.structure_distance(seq))

    def space_size(self) -> Optional[int]:
        return self.alphabet_size ** self.length


class LookupLandscape(Landscape):
    """Exhaustive measurement table, normalised by its maximum."""

    def __init__(self, table: dict, task: TaskDefinition, unknown_policy: str = "error",
                 structure: Optional[ProxyStructureOracle] = None):
        if not table:
            raise ValueError("lookup table is empty")
        if unknown_policy not in UNKNOWN_POLICIES:
            raise ValueError(f"unknown_policy must be one of {UNKNOWN_POLICIES}")
        self.task = task
        self.alphabet_size = task.alphabet.size
        self.length = task.length
        self.unknown_policy = unknown_policy
        self.max_fitness = max(table.values())
        if not self.max_fitness > 0:
            raise ValueError("lookup table maximum must be positive to normalise")
        self.table = {k: v / self.max_fitness for k, v in table.items()}
        self.structure = structure or ProxyStructureOracle(task.wild_type, self.alphabet_size)

    def fitness(self, seq: Sequence) -> float:
        key = seq.to_string(self.task.alphabet)
        try:
            return self.table[key]
        except KeyError:
            if self.unknown_policy == "zero":
                return 0.0
            raise UnknownSequenceError(f"sequence {key} is not in the lookup table") from None

    def space_size(self) -> Optional[int]:
        return self.alphabet_size ** self.length


def read_fitness_table(path, alphabet: Alphabet, length: Optional[int] = None) -> dict:
    """Parse a ``sequence<TAB>fitness`` file into a dict of raw values.

    A first line whose second field is not a number is taken as a header.
    """
    path = Path(path)
    table = {}
    with path.open("r", encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}")
            seq, value = parts[0].strip(), parts[1].strip()
            try:
                fit = float(value)
            except ValueError:
                if lineno == 1 and not table:
                    continue
                raise ValueError(f"{path}:{lineno}: fitness {value!r} is not a number") from None
            if not np.isfinite(fit):
                raise ValueError(f"{path}:{lineno}: fitness must be finite")
            if any(c not in alphabet.index_of for c in seq):
                raise ValueError(f"{path}:{lineno}: sequence {seq!r} uses symbols outside the alphabet")
            if length is not None and len(seq) != length:
                raise ValueError(f"{path}:{lineno}: sequence {seq!r} has length {len(seq)}, expected {length}")
            table[seq] = fit
    if not table:
        raise ValueError(f"{path}: no data rows")
    return table


def load_lookup(path, task: TaskDefinition, unknown_policy: str = "error",
                structure: Optional[ProxyStructureOracle] = None) -> LookupLandscape:
    table = read_fitness_table(path, task.alphabet, task.length)
    return LookupLandscape(table, task, unknown_policy, structure)


class NkLandscape(Landscape):
    """NK model over an S-letter alphabet with cyclic neighbourhoods.

    Position ``i`` contributes ``tables[i][x_i, x_{i+1}, ..., x_{i+k}]``
    (indices mod L), each entry uniform on [0, 1].  Fitness is the mean
    contribution divided by the landscape maximum: exact when ``S**L`` is at
    most 10^6, otherwise estimated from 10^5 seeded probes (values above the
    estimate are clipped to 1).
    """

    def __init__(self, length: int, alphabet_size: int, k: int, seed: int = 0,
                 wild_type: Optional[Sequence] = None, structure_mode: str = "weighted_hamming"):
        if not 0 <= k < length:
            raise ValueError(f"k must satisfy 0 <= k < L, got k={k}, L={length}")
        if alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2")
        self.length = length
        self.alphabet_size = alphabet_size
        self.k = k
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        self.tables = rng.uniform(0.0, 1.0, size=(length,) + (alphabet_size,) * (k + 1))
        self._neighbours = np.array([[(i + j) % length for j in range(k + 1)] for i in range(length)])
        self.enumerated = alphabet_size ** length <= ENUMERATION_LIMIT
        if self.enumerated:
            values = self.raw_fitness_batch(self.all_indices())
            self.max_raw = float(values.max())
        else:
            probe_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
            probes = probe_rng.integers(alphabet_size, size=(MAX_PROBES, length))
            self.max_raw = float(self.raw_fitness_batch(probes).max())
        if wild_type is None:
            wt_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
            wild_type = Sequence(tuple(wt_rng.integers(alphabet_size, size=length)))
        self.wild_type = wild_type
        self.structure = ProxyStructureOracle(wild_type, alphabet_size, seed, structure_mode)

    def all_indices(self) -> np.ndarray:
        return np.array(list(itertools.product(range(self.alphabet_size), repeat=self.length)),
                        dtype=np.intp)

    def raw_fitness_batch(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        total = np.zeros(len(idx))
        for i in range(self.length):
            total += self.tables[i][tuple(idx[:, j] for j in self._neighbours[i])]
        return total / self.length

    def fitness_batch(self, idx: np.ndarray) -> np.ndarray:
        return np.minimum(self.raw_fitness_batch(idx) / self.max_raw, 1.0)

    def fitness(self, seq: Sequence) -> float:
        if len(seq) != self.length:
            raise ValueError(f"sequence length {len(seq)} does not match landscape L={self.length}")
        seq.validate(self.alphabet_size)
        return float(self.fitness_batch(np.array([seq.indices]))[0])

    def global_optimum(self) -> tuple:
        """(sequence, fitness) of the best point; needs an enumerable space."""
        if not self.enumerated:
            raise ValueError("space too large to enumerate")
        idx = self.all_indices()
        values = self.fitness_batch(idx)
        best = int(np.argmax(values))
        return Sequence(tuple(idx[best])), float(values[best])


def nk_fitness(landscape: NkLandscape, seq: Sequence) -> float:
    return landscape.fitness(seq)


def parse_oracle_spec(spec: str) -> tuple:
    """``lookup:PATH`` or ``nk:L,S,k,seed`` -> (kind, args)."""
    kind, _, rest = spec.partition(":")
    if kind == "lookup" and rest:
        return "lookup", (rest,)
    if kind == "nk":
        try:
            L, S, k, seed = (int(x) for x in rest.split(","))
        except ValueError:
            raise ValueError(f"bad nk oracle {spec!r}; expected nk:L,S,k,seed") from None
        return "nk", (L, S, k, seed)
    raise ValueError(f"bad oracle {spec!r}; expected lookup:PATH or nk:L,S,k,seed")
