"""Hamiltonian Monte Carlo over the relaxed one-hot box ``[0, 1]^(L x S)``.

Positions leaving the box are folded back by reflective barriers that flip the
sign of the offending momentum component.  After every leapfrog step the
continuous position is discretized by per-position argmax and the discrete
proposal goes through a Metropolis test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence as Seq

import numpy as np

from .seq import Sequence, encode_one_hot

BARRIER_MODES = ("reflect", "clamp")
CONTINUE_MODES = ("continuous", "discrete")


class BarrierOverflow(RuntimeError):
    """A coordinate needed more reflections than allowed in one step."""


@dataclass
class HmcConfig:
    epsilon: float = 0.1
    trajectory_length: int = 16
    mass: float = 1.0
    max_reflections: int = 64
    chains: int = 128
    barriers: str = "reflect"
    continue_from: str = "continuous"
    resample_every_step: bool = False
    keep_rejected: bool = False

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.trajectory_length < 1:
            raise ValueError("trajectory_length must be >= 1")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.max_reflections < 1 or self.chains < 1:
            raise ValueError("max_reflections and chains must be >= 1")
        if self.barriers not in BARRIER_MODES:
            raise ValueError(f"barriers must be one of {BARRIER_MODES}")
        if self.continue_from not in CONTINUE_MODES:
            raise ValueError(f"continue_from must be one of {CONTINUE_MODES}")


@dataclass
class HmcState:
    q: np.ndarray
    p: np.ndarray
    potential: float
    kinetic: float

    @property
    def hamiltonian(self) -> float:
        return self.potential + self.kinetic


def kinetic_energy(p: np.ndarray, mass: float = 1.0):
    """||p||^2 / 2m, summed over the trailing (L, S) axes."""
    p = np.asarray(p, dtype=np.float64)
    return np.sum(p * p, axis=(-2, -1)) / (2.0 * mass)


def sample_momentum(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(shape)


def _reflect(q: np.ndarray, p: np.ndarray, max_reflections: int):
    """Vectorised barrier loop; returns (q, p, count of reflections per coordinate)."""
    q = np.array(q, dtype=np.float64)
    p = np.array(p, dtype=np.float64)
    count = np.zeros(q.shape, dtype=np.int64)
    for _ in range(max_reflections + 1):
        hi = q > 1.0
        lo = q < 0.0
        out = hi | lo
        if not out.any():
            break
        count += out
        p[out] = -p[out]
        q[hi] = 2.0 - q[hi]
        q[lo] = -q[lo]
    return q, p, count


def apply_virtual_barriers(q_raw, p_half, max_reflections: int = 64):
    """Fold ``q_raw`` back into [0, 1] coordinate-wise, flipping momentum on
    every bounce.  Raises :class:`BarrierOverflow` past ``max_reflections``."""
    q_raw = np.asarray(q_raw, dtype=np.float64)
    if not np.all(np.isfinite(q_raw)):
        raise BarrierOverflow("non-finite position")
    q, p, count = _reflect(q_raw, p_half, max_reflections)
    if (count > max_reflections).any():
        raise BarrierOverflow(f"more than {max_reflections} reflections in one step")
    return q, p


def clamp_positions(q_raw, p_half):
    """Barrier-free variant: clip into [0, 1], momentum untouched."""
    return np.clip(q_raw, 0.0, 1.0), np.array(p_half, dtype=np.float64)


def leapfrog_step(q, p, epsilon: float, grad_u: Callable, max_reflections: int = 64,
                  barriers: str = "reflect"):
    """One leapfrog step with the barrier applied between the position update
    and the second half-kick.  Returns ``(q_next, p_next, p_half)`` where
    ``p_half`` is the (possibly reflected) half-step momentum."""
    p_half = p - 0.5 * epsilon * grad_u(q)
    q_raw = q + epsilon * p_half
    if barriers == "reflect":
        q_next, p_half = apply_virtual_barriers(q_raw, p_half, max_reflections)
    else:
        q_next, p_half = clamp_positions(q_raw, p_half)
    p_next = p_half - 0.5 * epsilon * grad_u(q_next)
    return q_next, p_next, p_half


def metropolis_accept(h_current: float, h_proposed: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(h_current - h_proposed)).

    Exactly one uniform is drawn per call so streams stay aligned whatever
    the outcome.
    """
    u = rng.random()
    if not (math.isfinite(h_current) and math.isfinite(h_proposed)):
        return False
    return u < math.exp(min(0.0, h_current - h_proposed))


@dataclass
class ChainResult:
    accepted: list
    proposals: int
    acceptances: int


def run_chains(start: Sequence, model, cfg: HmcConfig, rngs: Seq[np.random.Generator],
               trace: Optional[list] = None) -> list:
    """Run ``len(rngs)`` independent chains from ``start`` in lock step.

    ``model`` must provide ``potential_and_grad(q)`` accepting a ``(C, L, S)``
    batch and returning ``(U, dU/dq)``.  Chain ``c`` draws all of its random
    numbers from ``rngs[c]``, so its result does not depend on how many other
    chains run alongside it.  Returns one :class:`ChainResult` per chain.

    When ``trace`` is a list, one dict per (step, chain) is appended.
    """
    C = len(rngs)
    q0 = encode_one_hot(start, model_alphabet_size(model, start))
    L, S = q0.shape
    eps = cfg.epsilon
    q = np.broadcast_to(q0, (C, L, S)).copy()
    p = np.stack([sample_momentum((L, S), r) for r in rngs])
    u_cur, g_cur = model.potential_and_grad(q)
    k_cur = kinetic_energy(p, cfg.mass)
    eye = np.eye(S)

    results = [ChainResult([], 0, 0) for _ in range(C)]
    for t in range(cfg.trajectory_length):
        p_half = p - 0.5 * eps * g_cur
        q_raw = q + eps * p_half
        if cfg.barriers == "reflect":
            with np.errstate(invalid="ignore"):
                q_new, p_half, count = _reflect(q_raw, p_half, cfg.max_reflections)
            bad = (count > cfg.max_reflections).any(axis=(1, 2)) | ~np.isfinite(q_raw).all(axis=(1, 2))
            if bad.any():
                # keep the batch finite; these chains are rejected below
                q_new[bad] = q[bad]
                p_half[bad] = 0.0
        else:
            q_new, p_half = clamp_positions(q_raw, p_half)
            bad = ~np.isfinite(q_raw).all(axis=(1, 2))
            q_new[bad] = q[bad]
        u_new, g_new = model.potential_and_grad(q_new)
        p_new = p_half - 0.5 * eps * g_new

        idx = np.argmax(q_new, axis=-1)
        q_bar = eye[idx]
        u_bar, g_bar = model.potential_and_grad(q_bar)
        k_new = kinetic_energy(p_new, cfg.mass)
        h_cur = u_cur + k_cur
        h_prop = u_bar + k_new

        accepted = np.zeros(C, dtype=bool)
        for c in range(C):
            ok = metropolis_accept(float(h_cur[c]), float(h_prop[c]), rngs[c])
            accepted[c] = ok and not bad[c]

        for c in range(C):
            res = results[c]
            res.proposals += 1
            seq = Sequence(tuple(idx[c]))
            if accepted[c]:
                res.acceptances += 1
                res.accepted.append(seq)
            elif cfg.keep_rejected and not bad[c]:
                res.accepted.append(seq)
            if trace is not None:
                trace.append({
                    "t": t, "chain": c,
                    "H_before": float(h_cur[c]), "H_after": float(h_prop[c]),
                    "U_before": float(u_cur[c]), "K_before": float(k_cur[c]),
                    "U_after": float(u_bar[c]), "K_after": float(k_new[c]),
                    "accepted": bool(accepted[c]), "sequence": list(seq.indices),
                })

        acc = accepted
        if cfg.continue_from == "continuous":
            q[acc], p[acc] = q_new[acc], p_new[acc]
            u_cur[acc], g_cur[acc] = u_new[acc], g_new[acc]
        else:
            q[acc], p[acc] = q_bar[acc], p_new[acc]
            u_cur[acc], g_cur[acc] = u_bar[acc], g_bar[acc]
        resample = np.ones(C, dtype=bool) if cfg.resample_every_step else ~acc
        for c in np.flatnonzero(resample):
            p[c] = sample_momentum((L, S), rngs[c])
        k_cur = kinetic_energy(p, cfg.mass)
    return results


def model_alphabet_size(model, start: Sequence) -> int:
    shape = getattr(getattr(model, "config", None), "input_shape", None)
    if shape is None:
        raise ValueError("model does not declare its input shape")
    if shape[0] != len(start):
        raise ValueError(f"start sequence length {len(start)} does not match model ({shape[0]})")
    return shape[1]


def hmc_chain(q0: Sequence, model, cfg: HmcConfig, rng: np.random.Generator,
              trace: Optional[list] = None) -> list:
    """Single chain; returns the accepted discrete proposals in order."""
    return run_chains(q0, model, cfg, [rng], trace)[0].accepted


def chain_streams(seed_seq: np.random.SeedSequence, n: int) -> list:
    return [np.random.default_rng(s) for s in seed_seq.spawn(n)]


def trace_to_jsonl(trace: list) -> str:
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in trace)
