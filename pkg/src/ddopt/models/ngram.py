"""n-gram sequence model: stationary Markov chain of order n-1.

Counts are kept for every context length up to n-1 so sampling can back off
from an unseen context to the longest seen suffix, and finally to the
uniform distribution.
"""

from __future__ import annotations

import json
from collections import defaultdict
from typing import Sequence

import numpy as np

from ..sequences import GateSequence, custom_alphabet, pauli_alphabet, sequence_from_ids


class NGramModel:
    def __init__(self, order: int, alphabet_size: int):
        if order < 2:
            raise ValueError("order must be >= 2")
        self.order = order
        self.alphabet_size = alphabet_size
        # counts[k] maps a length-k context tuple to a count vector over gates
        self.counts: list[dict[tuple, np.ndarray]] = [
            defaultdict(lambda: np.zeros(alphabet_size)) for _ in range(order)
        ]
        self.fitted = False

    def fit(self, data: Sequence[GateSequence]) -> "NGramModel":
        """Count every window up to length `order` across the data."""
        if not data:
            raise ValueError("training data must be non-empty")
        for table in self.counts:
            table.clear()
        for seq in data:
            ids = [g.id for g in seq.gates]
            for t, gate_id in enumerate(ids):
                for k in range(min(t, self.order - 1) + 1):
                    self.counts[k][tuple(ids[t - k : t])][gate_id] += 1
        self.fitted = True
        return self

    def conditional(self, context: Sequence[int]) -> np.ndarray:
        """p(next | context) with backoff to shorter suffixes, then uniform."""
        if not self.fitted:
            raise ValueError("model is not fitted")
        ctx = tuple(context)[-(self.order - 1) :] if self.order > 1 else ()
        for start in range(len(ctx) + 1):
            suffix = ctx[start:]
            table = self.counts[len(suffix)]
            if suffix in table:
                c = table[suffix]
                total = c.sum()
                if total > 0:
                    return c / total
        return np.full(self.alphabet_size, 1.0 / self.alphabet_size)

    def sample(self, half_length: int, rng: np.random.Generator) -> GateSequence:
        """Autoregressive draw of one half-sequence."""
        alphabet = pauli_alphabet() if self.alphabet_size == 4 else custom_alphabet(self.alphabet_size)
        ids: list[int] = []
        for _ in range(half_length):
            p = self.conditional(ids)
            ids.append(int(rng.choice(self.alphabet_size, p=p)))
        return sequence_from_ids(ids, alphabet)

    def sample_many(self, count: int, half_length: int, rng: np.random.Generator) -> list[GateSequence]:
        return [self.sample(half_length, rng) for _ in range(count)]

    # --- persistence ---------------------------------------------------

    def save(self, path) -> None:
        payload = {
            "kind": "ngram",
            "version": 1,
            "order": self.order,
            "alphabet_size": self.alphabet_size,
            "counts": [
                {",".join(map(str, ctx)): c.tolist() for ctx, c in sorted(table.items())}
                for table in self.counts
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "NGramModel":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("kind") != "ngram":
            raise ValueError(f"{path} is not an n-gram checkpoint")
        model = cls(payload["order"], payload["alphabet_size"])
        for k, table in enumerate(payload["counts"]):
            for key, counts in table.items():
                ctx = tuple(int(x) for x in key.split(",")) if key else ()
                model.counts[k][ctx] = np.array(counts, dtype=float)
        model.fitted = True
        return model
