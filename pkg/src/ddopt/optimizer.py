"""Outer optimization loop: alternate model fitting on elite data with
sampling of new candidate sequences.

Each generation retrains the kept models on the current training set, lets
every model contribute an equal share of new sequences, scores them, and
(with data reuse on) merges them with the previous training set before
truncating back to a fixed elite size. The fixed size is what makes the
average and minimum training-set scores provably non-increasing.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .models import (
    ArchitectureSpace,
    NGramModel,
    NetworkModel,
    NumericalError,
    TrainResult,
    sample_architecture,
    save_checkpoint,
    train_model,
)
from .models.architecture import DESK_SPACE
from .models.training import AdamState
from .sequences import GateSequence, random_sequence, write_sequences

ScoreFn = Callable[[Sequence[GateSequence]], np.ndarray]


@dataclass(frozen=True)
class RunConfig:
    data_size: int = 10_000
    keep_percent: float = 10.0
    n_initial: int = 30
    k_keep: int = 5
    half_length: int = 16
    tau: float = 0.002
    alphabet: str = "pauli"
    alphabet_seed: int = 1
    max_generations: int = 30
    convergence_tol: float = 1e-3
    convergence_window: int = 3
    reuse_data: bool = True
    seed: int = 0
    model_kind: str = "network"
    ngram_orders: tuple[int, ...] = (5, 6)
    epochs: int = 100
    eval_every: int = 5
    eval_samples: int = 200
    patience: int = 4
    truncation: int = 32
    retrain_from_scratch: bool = False
    desk_scale: bool = False
    threads: int = 1

    def __post_init__(self):
        if not (0 < self.keep_percent <= 100):
            raise ValueError("keep_percent must lie in (0, 100]")
        if self.k_keep > self.n_initial:
            raise ValueError("cannot keep more models than were trained")
        if self.data_size <= 0 or self.half_length < 1:
            raise ValueError("data_size and half_length must be positive")
        if self.alphabet not in ("pauli", "custom10"):
            raise ValueError(f"unknown alphabet {self.alphabet!r}")
        if self.model_kind not in ("network", "ngram"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")

    @property
    def alphabet_size(self) -> int:
        return 4 if self.alphabet == "pauli" else 10

    @property
    def elite_size(self) -> int:
        return math.ceil(self.keep_percent / 100.0 * self.data_size)

    def architecture_space(self) -> ArchitectureSpace:
        return DESK_SPACE if self.desk_scale else ArchitectureSpace()


@dataclass(frozen=True)
class Dataset:
    """Scored half-sequences, ascending by score, no duplicate gate strings."""

    entries: tuple[tuple[GateSequence, float], ...]
    generation: int = 0

    def __post_init__(self):
        scores = [s for _, s in self.entries]
        if any(not np.isfinite(s) or s < 0 or s > 1 for s in scores):
            raise ValueError("scores must be finite and in [0, 1]")
        if any(a > b for a, b in zip(scores, scores[1:])):
            raise ValueError("entries must be sorted ascending by score")
        labels = [seq.labels() for seq, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate sequences in dataset")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def sequences(self) -> list[GateSequence]:
        return [seq for seq, _ in self.entries]

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.entries])

    @property
    def avg_score(self) -> float:
        return float(self.scores.mean())

    @property
    def min_score(self) -> float:
        return float(self.scores.min())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for seq, s in self.entries:
            h.update(f"{seq.labels()},{s:.12e}\n".encode())
        return h.hexdigest()[:16]


def build_dataset(pairs, generation: int = 0) -> Dataset:
    """Sort, deduplicate (first occurrence wins), and wrap scored pairs."""
    seen: dict[str, tuple[GateSequence, float]] = {}
    for seq, s in pairs:
        key = seq.labels()
        if key not in seen or s < seen[key][1]:
            seen[key] = (seq, float(s))
    ordered = sorted(seen.values(), key=lambda e: (e[1], e[0].labels()))
    return Dataset(tuple(ordered), generation)


@dataclass(frozen=True)
class GenerationLog:
    generation: int
    avg_score: float
    min_score: float
    dataset_size: int
    dataset_hash: str
    per_model_avg: tuple[float, ...] = ()

    def __post_init__(self):
        if self.min_score > self.avg_score + 1e-15:
            raise ValueError("min score cannot exceed average score")


def generate_random_data(cfg: RunConfig, score_fn: ScoreFn,
                         rng: np.random.Generator) -> Dataset:
    """cfg.data_size uniform half-sequences, scored and deduplicated."""
    halves = [random_sequence(cfg.half_length, cfg.alphabet_size, rng)
              for _ in range(cfg.data_size)]
    scores = score_fn(halves)
    return build_dataset(zip(halves, scores))


def keep_best_data(data: Dataset, percent: float, target_size: int | None = None):
    """Retain the lowest-score fraction; returns (dataset, average kept score).

    target_size overrides the percentage-derived count; the loop pins it to
    the initial elite size so the training set cannot grow, which is what
    guarantees monotone improvement under merge-then-truncate.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if target_size is None:
        target_size = math.ceil(percent / 100.0 * len(data))
    kept = data.entries[: min(target_size, len(data))]
    out = Dataset(kept, data.generation)
    return out, out.avg_score


class ModelCandidate:
    """Pool-facing wrapper tying a generative model to its training routine."""

    def __init__(self, index: int, kind: str, model, rng: np.random.Generator,
                 adam_state: AdamState | None = None):
        self.index = index
        self.kind = kind
        self.model = model
        self.rng = rng
        self.adam_state = adam_state
        self.best_avg_score = np.inf
        self.last_result: TrainResult | None = None

    def train(self, data: Dataset, cfg: RunConfig, score_fn: ScoreFn) -> float:
        if self.kind == "network":
            if self.adam_state is None or cfg.retrain_from_scratch:
                if cfg.retrain_from_scratch:
                    self.model = NetworkModel(self.model.arch, self.model.hyper,
                                              seed=self.model.seed)
                self.adam_state = AdamState.zeros_like(self.model.params)
            before = self.model.snapshot()
            try:
                result = train_model(
                    self.model, data.sequences, score_fn,
                    epochs=cfg.epochs, rng=self.rng,
                    eval_every=cfg.eval_every, eval_samples=cfg.eval_samples,
                    patience=cfg.patience, truncation=cfg.truncation,
                    adam_state=self.adam_state,
                )
            except NumericalError:
                # roll back so the candidate can still sample and retrain later
                self.model.restore(before)
                self.adam_state = AdamState.zeros_like(self.model.params)
                raise
            self.best_avg_score = result.best_avg_score
            self.last_result = result
        else:
            self.model.fit(data.sequences)
            samples = self.model.sample_many(cfg.eval_samples, cfg.half_length, self.rng)
            self.best_avg_score = float(np.mean(score_fn(samples)))
        return self.best_avg_score

    def sample(self, count: int, half_length: int) -> list[GateSequence]:
        return self.model.sample_many(count, half_length, self.rng)

    def save(self, path) -> None:
        if self.kind == "network":
            save_checkpoint(self.model, path, adam_state=self.adam_state)
        else:
            self.model.save(path)


def _new_candidate(cfg: RunConfig, index: int, seed_seq: np.random.SeedSequence) -> ModelCandidate:
    arch_seq, weight_seq, sample_seq = seed_seq.spawn(3)
    rng = np.random.default_rng(sample_seq)
    if cfg.model_kind == "network":
        arch, hyper = sample_architecture(
            np.random.default_rng(arch_seq), cfg.alphabet_size, cfg.architecture_space()
        )
        model = NetworkModel(arch, hyper, seed=int(weight_seq.generate_state(1)[0]))
        return ModelCandidate(index, "network", model, rng)
    order = int(np.random.default_rng(arch_seq).choice(cfg.ngram_orders))
    return ModelCandidate(index, "ngram", NGramModel(order, cfg.alphabet_size), rng)


def _train_candidates(candidates, data, cfg, score_fn, threads):
    """Train candidates (possibly on a thread pool); returns (cand, error) pairs
    in input order. Each task touches only its own candidate, so the schedule
    cannot change any result."""

    def work(cand):
        try:
            cand.train(data, cfg, score_fn)
            return cand, None
        except NumericalError as exc:
            return cand, exc

    if threads > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, candidates))
    return [work(c) for c in candidates]


def train_initial_pool(cfg: RunConfig, data: Dataset, score_fn: ScoreFn,
                       seed_seq: np.random.SeedSequence,
                       log: Callable[[str], None] = lambda s: None) -> list[ModelCandidate]:
    """Train cfg.n_initial fresh candidates, rank by average generated score,
    keep the best cfg.k_keep. Diverged candidates are replaced by resampling."""
    candidates = [
        _new_candidate(cfg, i, seed_seq.spawn(1)[0]) for i in range(cfg.n_initial)
    ]
    pool: list[ModelCandidate] = []
    retries = 0
    for cand, err in _train_candidates(candidates, data, cfg, score_fn, cfg.threads):
        while err is not None and retries < 2 * cfg.n_initial:
            log(f"candidate {cand.index} diverged ({err}); resampling")
            retries += 1
            cand = _new_candidate(cfg, cand.index, seed_seq.spawn(1)[0])
            (cand, err), = _train_candidates([cand], data, cfg, score_fn, 1)
        if err is None:
            log(f"candidate {cand.index}: avg generated score {cand.best_avg_score:.6f}")
            pool.append(cand)
    if len(pool) < cfg.k_keep:
        raise RuntimeError("too many candidates diverged to assemble a pool")
    pool.sort(key=lambda c: c.best_avg_score)
    return pool[: cfg.k_keep]


def _model_quotas(total: int, k: int) -> list[int]:
    base, extra = divmod(total, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def generation_step(
    cfg: RunConfig,
    models: Sequence[ModelCandidate],
    data: Dataset,
    score_fn: ScoreFn,
    generation: int,
    elite_size: int | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> tuple[Dataset, GenerationLog, list[ModelCandidate]]:
    """One loop iteration: retrain, sample equally, score, merge, truncate.

    A model that diverges keeps its previous weights and sits this
    generation out; the pool itself is unchanged.
    """
    if not models:
        raise ValueError("model pool is empty")
    if elite_size is None:
        elite_size = cfg.elite_size
    active: list[ModelCandidate] = []
    for cand, err in _train_candidates(list(models), data, cfg, score_fn, cfg.threads):
        if err is None:
            log(f"gen {generation} model {cand.index}: trained, avg {cand.best_avg_score:.6f}")
            active.append(cand)
        else:
            log(f"gen {generation} model {cand.index}: diverged ({err}); skipped this generation")
    if not active:
        raise RuntimeError(f"every model diverged in generation {generation}")

    per_model_avg = []
    new_pairs: list[tuple[GateSequence, float]] = []
    for cand, quota in zip(active, _model_quotas(cfg.data_size, len(active))):
        halves = cand.sample(quota, cfg.half_length)
        scores = score_fn(halves)
        per_model_avg.append(float(scores.mean()))
        new_pairs.extend(zip(halves, scores))

    if cfg.reuse_data:
        merged = build_dataset(list(data.entries) + new_pairs, generation)
    else:
        merged = build_dataset(new_pairs, generation)
    new_data, avg = keep_best_data(merged, cfg.keep_percent, target_size=elite_size)
    entry = GenerationLog(
        generation=generation,
        avg_score=avg,
        min_score=new_data.min_score,
        dataset_size=len(new_data),
        dataset_hash=new_data.content_hash(),
        per_model_avg=tuple(per_model_avg),
    )
    return new_data, entry, list(models)


def bootstrap_from_model(cand: ModelCandidate, cfg: RunConfig, score_fn: ScoreFn) -> Dataset:
    """Seed a run from a model trained at a shorter length: sample at the new
    half-length, score, and package as an initial dataset."""
    halves = cand.sample(cfg.data_size, cfg.half_length)
    scores = score_fn(halves)
    return build_dataset(zip(halves, scores))


def _converged(avgs: Sequence[float], tol: float, window: int) -> bool:
    if len(avgs) <= window:
        return False
    past, now = avgs[-1 - window], avgs[-1]
    if past <= 0:
        return True
    return (past - now) / past < tol


@dataclass
class RunResult:
    data: Dataset
    logs: list[GenerationLog]
    models: list[ModelCandidate]
    converged: bool = False


LOG_COLUMNS = ("generation", "avg", "min", "datasetSize", "datasetHash")


def write_generation_log(path, entry: GenerationLog) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(LOG_COLUMNS) + [f"perModelAvg_{i}" for i in range(len(entry.per_model_avg))]
        writer.writerow(header)
        writer.writerow(
            [entry.generation, repr(entry.avg_score), repr(entry.min_score),
             entry.dataset_size, entry.dataset_hash]
            + [repr(v) for v in entry.per_model_avg]
        )


def run(
    cfg: RunConfig,
    score_fn: ScoreFn,
    out_dir: str | Path | None = None,
    initial_data: Dataset | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> RunResult:
    """The full loop: random data, initial pool, then generations until the
    average elite score converges or the generation cap is hit.

    Every completed generation persists its data file, log row, and model
    checkpoints before the next one starts, so an interrupted run leaves the
    last finished generation on disk.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    data_seq, pool_seq = root.spawn(2)

    if initial_data is None:
        full = generate_random_data(cfg, score_fn, np.random.default_rng(data_seq))
    else:
        full = initial_data
    data, avg = keep_best_data(full, cfg.keep_percent)
    # duplicates in the raw data can leave fewer than elite_size entries;
    # pinning the loop's target to what gen 0 actually kept preserves the
    # fixed-size argument behind the monotonicity guarantee
    elite_size = len(data)
    logs = [
        GenerationLog(0, avg, data.min_score, len(data), data.content_hash())
    ]
    log(f"gen 0: avg {avg:.6f} min {data.min_score:.6f} (from {len(full)} scored sequences)")
    _persist_generation(out, cfg, data, logs[0], [])

    models = train_initial_pool(cfg, data, score_fn, pool_seq, log=log)
    log("kept models: " + ", ".join(f"{c.index} ({c.best_avg_score:.6f})" for c in models))

    converged = False
    for gen in range(1, cfg.max_generations + 1):
        data, entry, models = generation_step(
            cfg, models, data, score_fn, gen, elite_size=elite_size, log=log
        )
        logs.append(entry)
        log(f"gen {gen}: avg {entry.avg_score:.6f} min {entry.min_score:.6f}")
        _persist_generation(out, cfg, data, entry, models)
        if cfg.reuse_data:
            _assert_monotone(logs)
        if _converged([e.avg_score for e in logs], cfg.convergence_tol, cfg.convergence_window):
            converged = True
            log(f"converged after generation {gen}")
            break
    return RunResult(data=data, logs=logs, models=models, converged=converged)


def _assert_monotone(logs: Sequence[GenerationLog]) -> None:
    prev, cur = logs[-2], logs[-1]
    if cur.avg_score > prev.avg_score + 1e-12 or cur.min_score > prev.min_score + 1e-12:
        raise AssertionError(
            f"monotonicity violated between generations {prev.generation} and {cur.generation}"
        )


def _persist_generation(out: Path | None, cfg: RunConfig, data: Dataset,
                        entry: GenerationLog, models: Sequence[ModelCandidate]) -> None:
    if out is None:
        return
    g = entry.generation
    write_sequences(out / f"gen_{g}_data.txt", data.sequences, cfg.alphabet)
    write_generation_log(out / f"gen_{g}_log.csv", entry)
    for i, cand in enumerate(models):
        cand.save(out / f"gen_{g}_model_{i}.ckpt")


def load_generation_logs(out_dir) -> list[GenerationLog]:
    """Read every gen_<g>_log.csv in a run directory, ordered by generation."""
    rows = []
    for path in sorted(Path(out_dir).glob("gen_*_log.csv"),
                       key=lambda p: int(p.stem.split("_")[1])):
        with open(path) as fh:
            rec = next(csv.DictReader(fh))
        per_model = tuple(
            float(v) for k, v in rec.items() if k.startswith("perModelAvg_") and v
        )
        rows.append(
            GenerationLog(
                generation=int(rec["generation"]),
                avg_score=float(rec["avg"]),
                min_score=float(rec["min"]),
                dataset_size=int(rec["datasetSize"]),
                dataset_hash=rec["datasetHash"],
                per_model_avg=per_model,
            )
        )
    return rows
