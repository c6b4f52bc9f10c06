"""Time evolution under noise plus control, and the trace-norm score.

A full symmetric sequence of length L runs its first L/2 steps on the
positive gate generators and the mirrored second half on the negated ones.
Each step unitary exp(-i (H0 +/- H_g (x) I_B) tau) is computed once per
(gate, sign) pair via Hermitian eigendecomposition and cached, so scoring a
sequence reduces to cached matrix products plus one small SVD.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .noise import GateGenerator, NoiseInstance, PAULI_MATRICES, pauli_generators
from .sequences import Gate, GateSequence


class ScoreError(ArithmeticError):
    """Raised when the score radicand is far enough below zero to signal a broken unitary."""


@dataclass(frozen=True)
class Propagator:
    u: np.ndarray
    total_time: float


def step_unitary(noise: NoiseInstance, gen: GateGenerator, sign: int) -> np.ndarray:
    """exp(-i (H0 + sign * H_g (x) I_B) tau) via eigendecomposition.

    The reconstruction V diag(e^{-i w tau}) V^dag is unitary by construction
    up to rounding.
    """
    if gen.tau <= 0:
        raise ValueError("tau must be positive")
    h = noise.h0 + sign * np.kron(gen.h, np.eye(noise.dim_b))
    if np.abs(h - h.conj().T).max() > 1e-9:
        raise ValueError("step Hamiltonian is not Hermitian")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * gen.tau)) @ v.conj().T


class StepCache:
    """All step unitaries for one (noise, tau, alphabet): 2 entries per gate."""

    def __init__(self, noise: NoiseInstance, generators: Sequence[GateGenerator]):
        self.noise = noise
        self.tau = generators[0].tau
        self.alphabet_size = len(generators)
        self._steps = {}
        for gen in generators:
            for sign in (+1, -1):
                self._steps[(gen.gate_id, sign)] = step_unitary(noise, gen, sign)
        # stacked [plus gates..., minus gates...] for vectorized batch products
        self._stack = np.stack(
            [self._steps[(i, +1)] for i in range(self.alphabet_size)]
            + [self._steps[(i, -1)] for i in range(self.alphabet_size)]
        )

    def __len__(self) -> int:
        return len(self._steps)

    def step(self, gate_id: int, sign: int) -> np.ndarray:
        return self._steps[(gate_id, sign)]


def evolve(
    noise: NoiseInstance,
    full: GateSequence,
    tau: float,
    cache: StepCache | None = None,
    generators: Sequence[GateGenerator] | None = None,
) -> Propagator:
    """Propagator of a full symmetric sequence; second half uses negated generators."""
    if full.kind != "full":
        raise ValueError("evolve expects a full (symmetrized) sequence")
    if cache is None:
        if generators is None:
            generators = pauli_generators(tau)
        cache = StepCache(noise, generators)
    L = len(full)
    u = np.eye(noise.dim, dtype=complex)
    for k, gate in enumerate(full.gates):
        sign = +1 if k < L // 2 else -1
        u = cache.step(gate.id, sign) @ u
    return Propagator(u=u, total_time=L * tau)


def partial_trace_system(u: np.ndarray, dim_s: int, dim_b: int) -> np.ndarray:
    """Tr_S(U) with the system as the first tensor factor."""
    return np.einsum("iaib->ab", u.reshape(dim_s, dim_b, dim_s, dim_b))


def score(u: np.ndarray, dim_s: int, dim_b: int) -> float:
    """Distance from bath-only evolution: sqrt(1 - ||Tr_S U||_tr / (d_S d_B)).

    Zero for U = I_S (x) U_B, one when the system evolution is maximally far
    from trivial. The radicand 1 - s/(d_S d_B) cannot be resolved below about
    1e-15 in float64, so a symmetric dead zone of 1e-12 snaps near-perfect
    scores to exactly zero; anything below -1e-9 means the input was not
    unitary.
    """
    tr = partial_trace_system(np.asarray(u), dim_s, dim_b)
    sv = np.linalg.svd(tr, compute_uv=False)
    radicand = 1.0 - sv.sum() / (dim_s * dim_b)
    if radicand < -1e-9:
        raise ScoreError(f"score radicand {radicand:.3e} below tolerance; non-unitary input")
    if abs(radicand) < 1e-12:
        return 0.0
    return float(np.sqrt(radicand))


def _score_chunk(stack: np.ndarray, ids: np.ndarray, dim_s: int, dim_b: int,
                 alphabet_size: int) -> np.ndarray:
    n, L = ids.shape
    dim = dim_s * dim_b
    u = np.broadcast_to(np.eye(dim, dtype=complex), (n, dim, dim)).copy()
    for k in range(L):
        idx = ids[:, k] + (0 if k < L // 2 else alphabet_size)
        u = np.matmul(stack[idx], u)
    tr = np.einsum("niaib->nab", u.reshape(n, dim_s, dim_b, dim_s, dim_b))
    sv = np.linalg.svd(tr, compute_uv=False)
    radicand = 1.0 - sv.sum(axis=1) / (dim_s * dim_b)
    if radicand.min() < -1e-9:
        raise ScoreError(f"score radicand {radicand.min():.3e} below tolerance")
    radicand[np.abs(radicand) < 1e-12] = 0.0
    return np.sqrt(np.clip(radicand, 0.0, None))


def score_batch(
    noise: NoiseInstance,
    halves: Sequence[GateSequence],
    tau: float,
    generators: Sequence[GateGenerator] | None = None,
    cache: StepCache | None = None,
    threads: int = 1,
    chunk: int = 256,
) -> np.ndarray:
    """Symmetrize, evolve, and score each half-sequence; order preserving.

    Work is pure per sequence, so thread count and chunking cannot change
    the results, only the wall time.
    """
    if not halves:
        return np.zeros(0)
    lengths = {len(h) for h in halves}
    if len(lengths) != 1:
        raise ValueError("all half-sequences in a batch must have the same length")
    if cache is None:
        if generators is None:
            generators = pauli_generators(tau)
        cache = StepCache(noise, generators)
    half_ids = np.stack([h.ids() for h in halves])
    full_ids = np.concatenate([half_ids, half_ids[:, ::-1]], axis=1)
    if full_ids.max() >= cache.alphabet_size:
        raise ValueError("sequence uses gate ids outside the cached alphabet")

    chunks = [full_ids[i : i + chunk] for i in range(0, len(halves), chunk)]
    args = (cache._stack, noise.dim_s, noise.dim_b, cache.alphabet_size)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _score_chunk(args[0], c, *args[1:]), chunks))
    else:
        parts = [_score_chunk(args[0], c, *args[1:]) for c in chunks]
    return np.concatenate(parts)


def average_hamiltonian_0(pulses: Sequence[Gate], h0: np.ndarray,
                          unitaries: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Zeroth-order average Hamiltonian for ideal zero-width pulses.

    With C_k the product of the first k pulses, returns the average of
    (C_k (x) I_B)^dag H0 (C_k (x) I_B) over the n inter-pulse intervals.
    """
    if not pulses:
        raise ValueError("pulse list must be non-empty")
    if unitaries is None:
        unitaries = [PAULI_MATRICES[g.label] for g in pulses]
    dim_b = h0.shape[0] // 2
    eye_b = np.eye(dim_b)
    c = np.eye(2, dtype=complex)
    acc = h0.astype(complex).copy()
    for u in unitaries[:-1]:
        c = u @ c
        cf = np.kron(c, eye_b)
        acc += cf.conj().T @ h0 @ cf
    return acc / len(pulses)


def system_traceless_part(h: np.ndarray, dim_s: int, dim_b: int) -> np.ndarray:
    """Remove the I_S (x) (.) component, leaving the part that acts on the system."""
    bath = partial_trace_system(h, dim_s, dim_b) / dim_s
    return h - np.kron(np.eye(dim_s), bath)


def make_score_fn(
    noise: NoiseInstance,
    tau: float,
    generators: Sequence[GateGenerator] | None = None,
    threads: int = 1,
):
    """A reusable batch scorer closing over one StepCache."""
    if generators is None:
        generators = pauli_generators(tau)
    cache = StepCache(noise, generators)

    def score_fn(halves: Sequence[GateSequence]) -> np.ndarray:
        return score_batch(noise, halves, tau, cache=cache, threads=threads)

    return score_fn
