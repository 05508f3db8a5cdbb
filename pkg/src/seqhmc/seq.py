"""Alphabets, discrete sequences and their relaxed one-hot representation.

Continuous states and momenta are plain ``numpy`` arrays of shape ``(L, S)``
(or ``(C, L, S)`` for a batch of chains).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"


@dataclass(frozen=True)
class Alphabet:
    symbols: str = AMINO_ACIDS
    index_of: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise ValueError("alphabet needs at least two symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"duplicate symbols in alphabet {self.symbols!r}")
        object.__setattr__(self, "index_of", {c: i for i, c in enumerate(self.symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True, order=True)
class Sequence:
    """Fixed-length vector of alphabet indices.

    Ordering is lexicographic on the index tuple, which coincides with string
    order for any alphabet whose symbols are listed in sorted order (the
    default amino-acid alphabet is).
    """

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("sequence must have at least one position")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i):
        return self.indices[i]

    @classmethod
    def from_string(cls, text: str, alphabet: Alphabet) -> "Sequence":
        try:
            return cls(tuple(alphabet.index_of[c] for c in text))
        except KeyError as exc:
            raise ValueError(f"symbol {exc.args[0]!r} in {text!r} is not in the alphabet") from None

    def to_string(self, alphabet: Alphabet) -> str:
        return "".join(alphabet.symbols[i] for i in self.indices)

    def validate(self, alphabet_size: int) -> None:
        if any(i < 0 or i >= alphabet_size for i in self.indices):
            raise ValueError(f"index out of range [0, {alphabet_size}) in {self.indices}")

    def replace(self, position: int, symbol: int) -> "Sequence":
        idx = list(self.indices)
        idx[position] = symbol
        return Sequence(tuple(idx))


@dataclass(frozen=True)
class TaskDefinition:
    """What is being optimized: alphabet, wild type over the mutable sites and,
    optionally, the full-length template the sites live in."""

    alphabet: Alphabet
    wild_type: Sequence
    full_sequence_template: Optional[str] = None
    mutable_positions: Optional[tuple] = None

    def __post_init__(self):
        self.wild_type.validate(self.alphabet.size)
        if self.mutable_positions is None:
            return
        pos = tuple(int(p) for p in self.mutable_positions)
        object.__setattr__(self, "mutable_positions", pos)
        if len(pos) != len(self.wild_type):
            raise ValueError("mutable_positions must have one entry per mutable site")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("mutable_positions must be strictly increasing")
        if self.full_sequence_template is not None:
            if pos[0] < 0 or pos[-1] >= len(self.full_sequence_template):
                raise ValueError("mutable_positions fall outside the template")

    @property
    def length(self) -> int:
        return len(self.wild_type)

    def full_sequence(self, seq: Sequence) -> str:
        """Splice the mutable-site symbols of ``seq`` into the template."""
        if self.full_sequence_template is None or self.mutable_positions is None:
            return seq.to_string(self.alphabet)
        chars = list(self.full_sequence_template)
        for p, i in zip(self.mutable_positions, seq.indices):
            chars[p] = self.alphabet.symbols[i]
        return "".join(chars)


def encode_one_hot(seq: Sequence, alphabet_size: int) -> np.ndarray:
    q = np.zeros((len(seq), alphabet_size))
    q[np.arange(len(seq)), seq.indices] = 1.0
    return q


def encode_batch(seqs: Iterable[Sequence], alphabet_size: int) -> np.ndarray:
    idx = np.array([s.indices for s in seqs], dtype=np.intp)
    out = np.zeros(idx.shape + (alphabet_size,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def discretize(q: np.ndarray) -> Sequence:
    """Per-position argmax; ties go to the lowest alphabet index."""
    q = np.asarray(q)
    if q.ndim != 2:
        raise ValueError(f"expected an (L, S) state, got shape {q.shape}")
    return Sequence(tuple(np.argmax(q, axis=-1)))


def discretize_indices(q: np.ndarray) -> np.ndarray:
    """Batched argmax over the last axis, returned as an index array."""
    return np.argmax(q, axis=-1)


def edit_distance(a: Sequence, b: Sequence) -> int:
    # Equal-length substitution-only space, so edit distance is Hamming distance.
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(x != y for x, y in zip(a.indices, b.indices))


def random_mutant(wt: Sequence, n_mutations: int, rng: np.random.Generator,
                  alphabet_size: int = 20) -> Sequence:
    """Mutate exactly ``n_mutations`` distinct positions of ``wt``, each to a
    symbol different from the wild-type one."""
    L = len(wt)
    if not 1 <= n_mutations <= L:
        raise ValueError(f"n_mutations must be in [1, {L}], got {n_mutations}")
    idx = list(wt.indices)
    for pos in rng.choice(L, size=n_mutations, replace=False):
        # uniform over the S-1 symbols other than the current one
        r = int(rng.integers(alphabet_size - 1))
        idx[pos] = r if r < idx[pos] else r + 1
    return Sequence(tuple(idx))


def space_size(length: int, alphabet_size: int) -> int:
    return alphabet_size ** length
