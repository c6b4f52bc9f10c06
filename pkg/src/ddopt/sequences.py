"""Pulse-sequence algebra: gates, Pauli products, DD families, concatenation.

Sequences are symbolic; the physics (unitaries, Hamiltonians) lives in
:mod:`ddopt.noise` and :mod:`ddopt.evolution`. Half-sequences are the unit
of generation and storage; full sequences are palindromic extensions built
only when something needs to be scored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PAULI_LABELS = ("I", "X", "Y", "Z")

# Group product (a, b) -> (result base, phase exponent e with phase i**e),
# following sigma_a sigma_b = delta_ab I + i eps_abc sigma_c.
_PAULI_PRODUCT = {
    ("I", "I"): ("I", 0), ("I", "X"): ("X", 0), ("I", "Y"): ("Y", 0), ("I", "Z"): ("Z", 0),
    ("X", "I"): ("X", 0), ("X", "X"): ("I", 0), ("X", "Y"): ("Z", 1), ("X", "Z"): ("Y", 3),
    ("Y", "I"): ("Y", 0), ("Y", "X"): ("Z", 3), ("Y", "Y"): ("I", 0), ("Y", "Z"): ("X", 1),
    ("Z", "I"): ("Z", 0), ("Z", "X"): ("Y", 1), ("Z", "Y"): ("X", 3), ("Z", "Z"): ("I", 0),
}

_PHASES = (1, 1j, -1, -1j)


class UnsupportedAlphabetError(ValueError):
    """Raised when a Pauli-only operation is applied to custom gates."""


@dataclass(frozen=True)
class Gate:
    """One pulse symbol: an index into the active gate alphabet."""

    id: int
    label: str

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"gate id must be non-negative, got {self.id}")

    @property
    def is_pauli(self) -> bool:
        return self.label in PAULI_LABELS


def pauli_gate(label: str) -> Gate:
    if label not in PAULI_LABELS:
        raise ValueError(f"not a Pauli label: {label!r}")
    return Gate(PAULI_LABELS.index(label), label)


def pauli_alphabet() -> tuple[Gate, ...]:
    """The four-gate Pauli alphabet, ids 0..3 = I, X, Y, Z."""
    return tuple(pauli_gate(lbl) for lbl in PAULI_LABELS)


def custom_alphabet(count: int = 10) -> tuple[Gate, ...]:
    """Opaque custom gates G0..G<count-1> (unitaries assigned elsewhere)."""
    if count < 1:
        raise ValueError("alphabet needs at least one gate")
    return tuple(Gate(i, f"G{i}") for i in range(count))


@dataclass(frozen=True)
class PauliWord:
    """A Pauli with exact phase: phase * sigma_base, phase in {1, i, -1, -i}."""

    base: str
    phase: complex = 1

    def __post_init__(self):
        if self.base not in PAULI_LABELS:
            raise ValueError(f"invalid Pauli base {self.base!r}")
        if self.phase not in _PHASES:
            raise ValueError(f"phase must be a fourth root of unity, got {self.phase}")

    def gate(self) -> Gate:
        """Project to a Gate, dropping the phase."""
        return pauli_gate(self.base)


def pauli_multiply(a: PauliWord, b: PauliWord) -> PauliWord:
    """Group product with exact phase tracking."""
    base, exp = _PAULI_PRODUCT[(a.base, b.base)]
    return PauliWord(base, a.phase * b.phase * _PHASES[exp])


@dataclass(frozen=True)
class GateSequence:
    """An ordered pulse sequence, either a half or a full palindrome.

    Full sequences must have even length and satisfy gates[k] == gates[L-1-k];
    this is the reversal symmetry that makes the bare control cycle close to
    the identity when the second half runs on negated generators.
    """

    gates: tuple[Gate, ...]
    kind: str = "half"

    def __post_init__(self):
        if not self.gates:
            raise ValueError("empty sequence")
        if self.kind not in ("half", "full"):
            raise ValueError(f"kind must be 'half' or 'full', got {self.kind!r}")
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.kind == "full":
            L = len(self.gates)
            if L % 2 != 0:
                raise ValueError("full sequences must have even length")
            for k in range(L // 2):
                if self.gates[k] != self.gates[L - 1 - k]:
                    raise ValueError("full sequences must be palindromic")

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def is_pauli(self) -> bool:
        return all(g.is_pauli for g in self.gates)

    def labels(self) -> str:
        """Contiguous symbol string, e.g. 'XYXZ' or 'G0G3'."""
        return "".join(g.label for g in self.gates)

    def ids(self) -> np.ndarray:
        return np.array([g.id for g in self.gates], dtype=np.int64)


def sequence_from_labels(text: str, kind: str = "half") -> GateSequence:
    """Parse a contiguous symbol string ('XYXZ' or 'G0G3...')."""
    text = text.strip()
    if text and text[0] == "G":
        tokens = re.findall(r"G\d", text)
        if "".join(tokens) != text:
            raise ValueError(f"cannot parse custom-gate string {text!r}")
        gates = tuple(Gate(int(t[1]), t) for t in tokens)
    else:
        gates = tuple(pauli_gate(ch) for ch in text)
    return GateSequence(gates, kind)


def sequence_from_ids(ids: Iterable[int], alphabet: Sequence[Gate], kind: str = "half") -> GateSequence:
    return GateSequence(tuple(alphabet[int(i)] for i in ids), kind)


def symmetrize(half: GateSequence) -> GateSequence:
    """Mirror a half-sequence into the full palindrome of twice its length."""
    if half.kind != "half":
        raise ValueError("symmetrize expects a half-sequence")
    return GateSequence(half.gates + half.gates[::-1], "full")


def first_half(full: GateSequence) -> GateSequence:
    if full.kind != "full":
        raise ValueError("expects a full sequence")
    return GateSequence(full.gates[: len(full.gates) // 2], "half")


def concatenate(outer: GateSequence, inner: GateSequence) -> GateSequence:
    """Sequence concatenation A[B].

    Each gate P of A opens a block (P*Q1) Q2 .. Qn, where the product is the
    phase-projected Pauli product. Only defined over the Pauli alphabet.
    """
    if not outer.is_pauli or not inner.is_pauli:
        raise UnsupportedAlphabetError("concatenation is defined for Pauli sequences only")
    q1 = PauliWord(inner.gates[0].label)
    rest = inner.gates[1:]
    gates: list[Gate] = []
    for p in outer.gates:
        head = pauli_multiply(PauliWord(p.label), q1)
        gates.append(head.gate())
        gates.extend(rest)
    return GateSequence(tuple(gates), "half")


def _base_assignments() -> list[tuple[str, str]]:
    # lexicographic over {X,Y,Z}^2 with P1 != P2; fixed so golden files are stable
    return [(p1, p2) for p1 in "XYZ" for p2 in "XYZ" if p1 != p2]

_FAMILY_LENGTHS = {"DD4": 4, "DD8": 8, "EDD8": 8, "CDD16": 16, "CDD32": 32, "CDD64": 64}

FAMILY_NAMES = tuple(_FAMILY_LENGTHS)


def _from_pattern(pattern: str, p1: str, p2: str) -> GateSequence:
    table = {"1": p1, "2": p2, "I": "I"}
    return sequence_from_labels("".join(table[ch] for ch in pattern))


def make_family(name: str, assignment: tuple[str, str] | None = None) -> list[GateSequence]:
    """All members of a named DD family, or the members for one (P1, P2) choice.

    Concatenated families apply the same (P1, P2) assignment to both
    constituents; CDD32 and CDD64 each have two composition rules, so they
    return two members per assignment.
    """
    if name not in _FAMILY_LENGTHS:
        raise ValueError(f"unknown family {name!r}; known: {', '.join(_FAMILY_LENGTHS)}")
    assignments = [assignment] if assignment is not None else _base_assignments()
    members = []
    for p1, p2 in assignments:
        if p1 == p2 or p1 not in "XYZ" or p2 not in "XYZ":
            raise ValueError(f"assignment must be distinct gates from X, Y, Z, got ({p1}, {p2})")
        dd4 = _from_pattern("1212", p1, p2)
        dd8 = _from_pattern("I212I212", p1, p2)
        if name == "DD4":
            members.append(dd4)
        elif name == "DD8":
            members.append(dd8)
        elif name == "EDD8":
            members.append(_from_pattern("12122121", p1, p2))
        elif name == "CDD16":
            members.append(concatenate(dd4, dd4))
        elif name == "CDD32":
            members.append(concatenate(dd4, dd8))
            members.append(concatenate(dd8, dd4))
        elif name == "CDD64":
            members.append(concatenate(dd4, concatenate(dd4, dd4)))
            members.append(concatenate(dd8, dd8))
    return members


def random_sequence(half_length: int, alphabet_size: int, rng: np.random.Generator) -> GateSequence:
    """A half-sequence of i.i.d. uniform gates."""
    if half_length < 1:
        raise ValueError("half_length must be >= 1")
    if alphabet_size == 4:
        alphabet: Sequence[Gate] = pauli_alphabet()
    else:
        alphabet = custom_alphabet(alphabet_size)
    ids = rng.integers(0, alphabet_size, size=half_length)
    return sequence_from_ids(ids, alphabet)


# --- sequence file format ------------------------------------------------
# One sequence per line as contiguous symbols, preceded by a single header
# line: "#alphabet=pauli|custom10 kind=half|full". Byte-exact on round trip.

_HEADER_RE = re.compile(r"^#alphabet=(pauli|custom10) kind=(half|full)$")


def write_sequences(path, sequences: Sequence[GateSequence], alphabet_mode: str) -> None:
    if alphabet_mode not in ("pauli", "custom10"):
        raise ValueError(f"unknown alphabet mode {alphabet_mode!r}")
    if not sequences:
        raise ValueError("refusing to write an empty sequence file")
    kinds = {s.kind for s in sequences}
    if len(kinds) != 1:
        raise ValueError("all sequences in one file must share a kind")
    kind = kinds.pop()
    with open(path, "w", newline="") as fh:
        fh.write(f"#alphabet={alphabet_mode} kind={kind}\n")
        for seq in sequences:
            fh.write(seq.labels() + "\n")


def read_sequences(path) -> tuple[list[GateSequence], str]:
    """Load a sequence file; returns (sequences, alphabet_mode)."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        m = _HEADER_RE.match(header)
        if not m:
            raise ValueError(f"bad sequence file header: {header!r}")
        mode, kind = m.groups()
        sequences = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                sequences.append(sequence_from_labels(line, kind))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not sequences:
        raise ValueError(f"sequence file {path} contains no sequences")
    return sequences, mode
