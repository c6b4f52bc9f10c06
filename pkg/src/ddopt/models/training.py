"""Minibatch training with Adam and score-monitored early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..sequences import GateSequence
from .lstm import NetworkModel


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    step_rate: float,
    beta1: float,
    beta2: float,
    epsilon: float,
) -> None:
    """One bias-corrected moment update, in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= step_rate * (m / c1) / (np.sqrt(v / c2) + epsilon)


@dataclass
class EvalPoint:
    epoch: int
    train_loss: float
    avg_generated_score: float
    best_so_far: float


@dataclass
class TrainResult:
    best_avg_score: float
    history: list[EvalPoint] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False


def train_model(
    model: NetworkModel,
    training_set: Sequence[GateSequence],
    score_fn: Callable[[Sequence[GateSequence]], np.ndarray],
    epochs: int,
    rng: np.random.Generator,
    eval_every: int = 5,
    eval_samples: int = 200,
    patience: int = 4,
    truncation: int = 32,
    adam_state: AdamState | None = None,
) -> TrainResult:
    """Fit on the training set, tracking the quality of generated sequences.

    Every eval_every epochs the model generates eval_samples half-sequences
    which are scored; the weight snapshot with the lowest average generated
    score is what the model ends up holding. Training stops at the epoch cap
    or after `patience` evaluations without improvement.
    """
    if not training_set:
        raise ValueError("training set must be non-empty")
    half_length = len(training_set[0])
    ids = np.stack([s.ids() for s in training_set])
    n = len(ids)
    batch_size = max(1, min(model.hyper.batch_size, n))
    if adam_state is None:
        adam_state = AdamState.zeros_like(model.params)

    result = TrainResult(best_avg_score=np.inf)
    best_snapshot = model.snapshot()
    stale = 0
    last_loss = np.nan

    def evaluate(epoch: int) -> None:
        nonlocal stale, best_snapshot
        samples = model.sample_many(eval_samples, half_length, rng)
        avg = float(np.mean(score_fn(samples)))
        if avg < result.best_avg_score:
            result.best_avg_score = avg
            best_snapshot = model.snapshot()
            stale = 0
        else:
            stale += 1
        result.history.append(EvalPoint(epoch, last_loss, avg, result.best_avg_score))

    evaluate(0)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = ids[order[start : start + batch_size]]
            loss, grads = model.loss_and_grads(batch, truncation=truncation)
            adam_step(
                model.params,
                grads,
                adam_state,
                model.hyper.step_rate,
                model.hyper.beta1,
                model.hyper.beta2,
                model.hyper.epsilon,
            )
            last_loss = loss
        model.epoch += 1
        result.epochs_run = epoch
        if epoch % eval_every == 0 or epoch == epochs:
            evaluate(epoch)
            if stale >= patience:
                result.stopped_early = True
                break
    model.restore(best_snapshot)
    model.best_avg_score = result.best_avg_score
    return result
