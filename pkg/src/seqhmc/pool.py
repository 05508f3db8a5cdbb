from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seq import Sequence, encode_batch


@dataclass(frozen=True)
class PoolEntry:
    fitness: float
    structure_distance: float
    round_acquired: int


class EvaluatedPool:
    """Ground-truth measurements gathered so far, in acquisition order."""

    def __init__(self):
        self.entries: dict = {}

    def __len__(self):
        return len(self.entries)

    def __contains__(self, seq):
        return seq in self.entries

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def add(self, seq: Sequence, fitness: float, structure_distance: float, round_acquired: int):
        if seq in self.entries:
            raise ValueError(f"sequence {seq.indices} already measured")
        self.entries[seq] = PoolEntry(float(fitness), float(structure_distance), int(round_acquired))

    def best(self) -> tuple:
        """Highest-fitness entry; ties go to the lexicographically smallest sequence."""
        if not self.entries:
            raise ValueError("pool is empty")
        seq = min(self.entries, key=lambda s: (-self.entries[s].fitness, s.indices))
        return seq, self.entries[seq].fitness

    def fitness_values(self, upto_round=None) -> np.ndarray:
        return np.array([e.fitness for e in self.entries.values()
                         if upto_round is None or e.round_acquired <= upto_round])

    def training_arrays(self, alphabet_size: int) -> tuple:
        seqs = list(self.entries)
        X = encode_batch(seqs, alphabet_size)
        fit = np.array([self.entries[s].fitness for s in seqs])
        struct = np.array([self.entries[s].structure_distance for s in seqs])
        return X, fit, struct
