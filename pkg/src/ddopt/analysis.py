"""Reporting: subsequence statistics, family baselines, and best-sequence replay."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evolution import make_score_fn
from .noise import NoiseInstance
from .optimizer import GenerationLog
from .sequences import (
    FAMILY_NAMES,
    Gate,
    GateSequence,
    make_family,
    random_sequence,
    sequence_from_labels,
)

PAULI_SYMBOLS = ("I", "X", "Y", "Z")


@dataclass(frozen=True)
class SubsequenceTable:
    """Window counts over a sequence set, as percentages of all counted windows."""

    length: int
    prefix: str | None
    percentages: np.ndarray  # (context, next gate)
    total_count: int

    def cell(self, context: str, nxt: str) -> float:
        return float(
            self.percentages[PAULI_SYMBOLS.index(context), PAULI_SYMBOLS.index(nxt)]
        )


def subsequence_frequencies(
    data: Sequence[GateSequence], length: int, prefix: Gate | None = None
) -> SubsequenceTable:
    """Sliding-window frequencies of length-2 or length-3 subsequences.

    For length 3 a prefix gate restricts the count to windows starting with
    that gate; rows are then the middle gate, columns the last one.
    """
    if length not in (2, 3):
        raise ValueError("subsequence length must be 2 or 3")
    if not data:
        raise ValueError("no sequences to analyze")
    n = len(PAULI_SYMBOLS)
    counts = np.zeros((n, n))
    for seq in data:
        ids = [g.id for g in seq.gates]
        if length == 2:
            for a, b in zip(ids, ids[1:]):
                counts[a, b] += 1
        else:
            want = None if prefix is None else prefix.id
            for a, b, c in zip(ids, ids[1:], ids[2:]):
                if want is None or a == want:
                    counts[b, c] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError("no windows matched (sequences too short or prefix absent)")
    return SubsequenceTable(
        length=length,
        prefix=None if prefix is None else prefix.label,
        percentages=100.0 * counts / total,
        total_count=int(total),
    )


def format_table(table: SubsequenceTable, other: SubsequenceTable | None = None) -> str:
    """Aligned text table; a second table prints in parentheses per cell.

    Cells below 0.005% render as 0.00%.
    """
    head = {2: "prev\\next", 3: "second\\last"}[table.length]
    lines = [head.ljust(12) + "".join(s.rjust(18) for s in PAULI_SYMBOLS)]
    for i, row_label in enumerate(PAULI_SYMBOLS):
        cells = []
        for j in range(len(PAULI_SYMBOLS)):
            txt = f"{table.percentages[i, j]:.2f}%"
            if other is not None:
                txt += f" ({other.percentages[i, j]:.2f}%)"
            cells.append(txt.rjust(18))
        lines.append(row_label.ljust(12) + "".join(cells))
    return "\n".join(lines) + "\n"


def write_table_csv(path, table: SubsequenceTable, other: SubsequenceTable | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        cols = PAULI_SYMBOLS if other is None else [
            x for s in PAULI_SYMBOLS for x in (s, f"{s}_generated")
        ]
        writer.writerow(["context"] + list(cols))
        for i, row_label in enumerate(PAULI_SYMBOLS):
            row = [row_label]
            for j in range(len(PAULI_SYMBOLS)):
                row.append(f"{table.percentages[i, j]:.6f}")
                if other is not None:
                    row.append(f"{other.percentages[i, j]:.6f}")
            writer.writerow(row)


@dataclass(frozen=True)
class BaselineRow:
    label: str
    avg_score: float
    min_score: float

    def __post_init__(self):
        if self.min_score > self.avg_score + 1e-15:
            raise ValueError("row minimum cannot exceed its average")


@dataclass(frozen=True)
class BaselineReport:
    full_length: int
    tau: float
    rows: tuple[BaselineRow, ...]


def family_half(member: GateSequence, half_length: int) -> GateSequence:
    """Repeat a family member to fill the half-length, ready to symmetrize."""
    if len(member) > half_length:
        raise ValueError(
            f"family member of length {len(member)} exceeds half-length {half_length}"
        )
    reps, rem = divmod(half_length, len(member))
    if rem != 0:
        raise ValueError(
            f"family member length {len(member)} does not divide half-length {half_length}"
        )
    return sequence_from_labels(member.labels() * reps)


def default_families(full_length: int) -> list[str]:
    half = full_length // 2
    return [name for name in FAMILY_NAMES
            if len(make_family(name)[0]) <= half and half % len(make_family(name)[0]) == 0]


def baseline_report(
    noise: NoiseInstance,
    tau: float,
    full_length: int,
    families: Sequence[str] | None = None,
    random_samples: int = 1000,
    random_seed: int = 0,
    threads: int = 1,
) -> BaselineReport:
    """Average and best score per DD family at the target length, plus a
    uniform-random reference row."""
    if full_length % 2 != 0:
        raise ValueError("full length must be even")
    half_length = full_length // 2
    if families is None:
        families = default_families(full_length)
    score_fn = make_score_fn(noise, tau, threads=threads)
    rows = []
    for name in families:
        halves = [family_half(m, half_length) for m in make_family(name)]
        scores = score_fn(halves)
        rows.append(BaselineRow(name, float(scores.mean()), float(scores.min())))
    rng = np.random.default_rng(random_seed)
    rand = [random_sequence(half_length, 4, rng) for _ in range(random_samples)]
    scores = score_fn(rand)
    rows.append(BaselineRow("Random", float(scores.mean()), float(scores.min())))
    return BaselineReport(full_length=full_length, tau=tau, rows=tuple(rows))


def write_baseline_csv(path, report: BaselineReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequences", "avg_score", "min_score"])
        for row in report.rows:
            writer.writerow([row.label, f"{row.avg_score:.12g}", f"{row.min_score:.12g}"])


# Best half-sequences found by the three Pauli-alphabet searches, at half
# lengths 16, 32, and 64; full sequences are their palindromes.
BEST_HALVES = {
    "E1": "XYXZXYXZZXYXZXYX",
    "E2": "ZZXZZZXZZXZXXXZXXXZXXZXXXZXZZXZZ",
    "E3": (
        "ZXZZYXYZYXYXYYXYYYYXYYYXYYXYXYXYYZXZYZXZYXYXXYXYXYXYYXYYYXYXXYXX"
    ),
}

EXPERIMENT_TAU = {"E1": 0.002, "E2": 0.004, "E3": 0.004}


def replay_best_sequences(
    noise: NoiseInstance, which: str | None = None, tau: float | None = None
) -> list[BaselineRow]:
    """Score the recorded best half-sequences on the given noise instance.

    Scores depend on the drawn Hamiltonian, so these reproduce magnitudes,
    not the published table values.
    """
    keys = [which] if which is not None else sorted(BEST_HALVES)
    rows = []
    for key in keys:
        if key not in BEST_HALVES:
            raise ValueError(f"unknown experiment {key!r}; choose from {sorted(BEST_HALVES)}")
        half = sequence_from_labels(BEST_HALVES[key])
        t = tau if tau is not None else EXPERIMENT_TAU[key]
        score_fn = make_score_fn(noise, t)
        value = float(score_fn([half])[0])
        rows.append(BaselineRow(f"best_{key}", value, value))
    return rows


def convergence_plot(logs: Sequence[GenerationLog], path,
                     reference: dict[str, float] | None = None) -> None:
    """Generation vs average/minimum elite score, written as an SVG file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    gens = [e.generation for e in logs]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(gens, [e.avg_score for e in logs], marker="o", label="average score")
    ax.semilogy(gens, [e.min_score for e in logs], marker="s", label="best score")
    if reference:
        for label, value in reference.items():
            ax.axhline(value, linestyle="--", linewidth=1, alpha=0.7, label=label)
    ax.set_xlabel("generation")
    ax.set_ylabel("score")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
