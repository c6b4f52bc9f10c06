"""Gate algebra and family generators, checked against 2x2 matrix arithmetic."""

import numpy as np
import pytest

from ddopt.sequences import (
    Gate,
    GateSequence,
    PauliWord,
    UnsupportedAlphabetError,
    concatenate,
    custom_alphabet,
    first_half,
    make_family,
    pauli_gate,
    pauli_multiply,
    random_sequence,
    read_sequences,
    sequence_from_labels,
    symmetrize,
    write_sequences,
)

MAT = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def word_matrix(w: PauliWord) -> np.ndarray:
    return w.phase * MAT[w.base]


class TestPauliMultiply:
    def test_self_inverse(self):
        w = pauli_multiply(PauliWord("X"), PauliWord("X"))
        assert (w.base, w.phase) == ("I", 1)

    def test_xy_is_iz(self):
        w = pauli_multiply(PauliWord("X"), PauliWord("Y"))
        assert (w.base, w.phase) == ("Z", 1j)

    def test_identity(self):
        w = pauli_multiply(PauliWord("I"), PauliWord("Z"))
        assert (w.base, w.phase) == ("Z", 1)

    def test_all_pairs_match_matrix_product(self):
        # exhaustive over all 16 base pairs, exact phase included
        for a in "IXYZ":
            for b in "IXYZ":
                w = pauli_multiply(PauliWord(a), PauliWord(b))
                expected = MAT[a] @ MAT[b]
                np.testing.assert_allclose(word_matrix(w), expected, atol=1e-15)

    def test_associative(self):
        rng = np.random.default_rng(0)
        labels = "IXYZ"
        phases = (1, 1j, -1, -1j)
        for _ in range(200):
            a, b, c = (
                PauliWord(labels[rng.integers(4)], phases[rng.integers(4)])
                for _ in range(3)
            )
            left = pauli_multiply(pauli_multiply(a, b), c)
            right = pauli_multiply(a, pauli_multiply(b, c))
            assert left == right


def matrix_concatenate_oracle(outer: str, inner: str) -> str:
    """Independent A[B] via 2x2 products, projecting phases away."""
    out = []
    q1 = MAT[inner[0]]
    for p in outer:
        prod = MAT[p] @ q1
        for lbl, m in MAT.items():
            # match up to global phase
            tr = np.trace(m.conj().T @ prod) / 2
            if abs(abs(tr) - 1) < 1e-12:
                out.append(lbl)
                break
        out.extend(inner[1:])
    return "".join(out)


class TestConcatenate:
    def test_known_worked_example(self):
        a = sequence_from_labels("XX")
        b = sequence_from_labels("XYXY")
        assert concatenate(a, b).labels() == "IYXYIYXY"

    def test_identity_outer(self):
        a = sequence_from_labels("I")
        b = sequence_from_labels("XZY")
        assert concatenate(a, b).labels() == "XZY"

    def test_dd4_self_concatenation(self):
        a = sequence_from_labels("XYXY")
        got = concatenate(a, a).labels()
        assert got == "IYXYZYXYIYXYZYXY"
        assert got == matrix_concatenate_oracle("XYXY", "XYXY")

    def test_length_multiplies(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = random_sequence(int(rng.integers(1, 6)), 4, rng)
            b = random_sequence(int(rng.integers(1, 6)), 4, rng)
            assert len(concatenate(a, b)) == len(a) * len(b)

    def test_matches_matrix_oracle_on_random_inputs(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            a = random_sequence(int(rng.integers(1, 5)), 4, rng)
            b = random_sequence(int(rng.integers(1, 5)), 4, rng)
            assert concatenate(a, b).labels() == matrix_concatenate_oracle(
                a.labels(), b.labels()
            )

    def test_custom_alphabet_rejected(self):
        g = custom_alphabet(10)
        seq = GateSequence((g[0], g[1]))
        with pytest.raises(UnsupportedAlphabetError):
            concatenate(seq, seq)


class TestFamilies:
    def test_dd4_xy(self):
        assert make_family("DD4", ("X", "Y"))[0].labels() == "XYXY"

    def test_edd8_xy(self):
        assert make_family("EDD8", ("X", "Y"))[0].labels() == "XYXYYXYX"

    def test_dd8_equals_p1p1_of_dd4(self):
        # DD8(P1,P2) == (P1 P1)[DD4(P1,P2)] for every assignment
        for (p1, p2), dd8, dd4 in zip(
            [(a, b) for a in "XYZ" for b in "XYZ" if a != b],
            make_family("DD8"),
            make_family("DD4"),
        ):
            outer = sequence_from_labels(p1 + p1)
            assert dd8.labels() == concatenate(outer, dd4).labels()

    def test_member_counts(self):
        assert len(make_family("DD4")) == 6
        assert len(make_family("EDD8")) == 6
        assert len(make_family("CDD16")) == 6
        assert len(make_family("CDD32")) == 12
        assert len(make_family("CDD64")) == 12

    @pytest.mark.parametrize(
        "name,length",
        [("DD4", 4), ("DD8", 8), ("EDD8", 8), ("CDD16", 16), ("CDD32", 32), ("CDD64", 64)],
    )
    def test_declared_lengths(self, name, length):
        assert all(len(m) == length for m in make_family(name))

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown family"):
            make_family("KDD")

    def test_assignment_must_differ(self):
        with pytest.raises(ValueError):
            make_family("DD4", ("X", "X"))


class TestSymmetrize:
    def test_two_gates(self):
        half = sequence_from_labels("XY")
        assert symmetrize(half).labels() == "XYYX"

    def test_single_gate(self):
        assert symmetrize(sequence_from_labels("X")).labels() == "XX"

    def test_palindrome_and_roundtrip(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            half = random_sequence(int(rng.integers(1, 12)), 4, rng)
            full = symmetrize(half)
            assert full.kind == "full"
            assert full.labels() == full.labels()[::-1]
            assert first_half(full).labels() == half.labels()

    def test_experiment1_best_half(self):
        half = sequence_from_labels("XYXZXYXZZXYXZXYX")
        assert len(half) == 16
        full = symmetrize(half)
        assert len(full) == 32
        assert full.labels() == full.labels()[::-1]

    def test_rejects_full_input(self):
        with pytest.raises(ValueError):
            symmetrize(symmetrize(sequence_from_labels("XY")))


class TestGateSequenceInvariants:
    def test_full_must_be_palindrome(self):
        gates = tuple(pauli_gate(c) for c in "XYXY")
        with pytest.raises(ValueError, match="palindromic"):
            GateSequence(gates, "full")

    def test_full_must_be_even(self):
        gates = tuple(pauli_gate(c) for c in "XYX")
        with pytest.raises(ValueError):
            GateSequence(gates, "full")

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            GateSequence(())

    def test_gate_id_bounds(self):
        with pytest.raises(ValueError):
            Gate(-1, "X")


class TestRandomSequence:
    def test_deterministic(self):
        a = random_sequence(16, 4, np.random.default_rng(42))
        b = random_sequence(16, 4, np.random.default_rng(42))
        assert a.labels() == b.labels()

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(7)
        counts = np.zeros(4)
        draws = 100_000
        seq = random_sequence(draws, 4, rng)
        for g in seq.gates:
            counts[g.id] += 1
        freqs = counts / draws
        np.testing.assert_allclose(freqs, 0.25, atol=0.01)

    def test_single_gate(self):
        assert len(random_sequence(1, 4, np.random.default_rng(0))) == 1

    def test_custom_alphabet_labels(self):
        seq = random_sequence(8, 10, np.random.default_rng(0))
        assert all(g.label == f"G{g.id}" for g in seq.gates)


class TestSequenceFile:
    def test_round_trip_bytes(self, tmp_path):
        rng = np.random.default_rng(11)
        seqs = [random_sequence(8, 4, rng) for _ in range(5)]
        p = tmp_path / "seqs.txt"
        write_sequences(p, seqs, "pauli")
        loaded, mode = read_sequences(p)
        assert mode == "pauli"
        assert [s.labels() for s in loaded] == [s.labels() for s in seqs]
        # byte-exact golden format
        q = tmp_path / "again.txt"
        write_sequences(q, loaded, mode)
        assert p.read_bytes() == q.read_bytes()

    def test_golden_header(self, tmp_path):
        p = tmp_path / "one.txt"
        write_sequences(p, [sequence_from_labels("XYXZ")], "pauli")
        assert p.read_bytes() == b"#alphabet=pauli kind=half\nXYXZ\n"

    def test_custom_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        seqs = [random_sequence(4, 10, rng) for _ in range(3)]
        p = tmp_path / "c.txt"
        write_sequences(p, seqs, "custom10")
        loaded, mode = read_sequences(p)
        assert mode == "custom10"
        assert [s.labels() for s in loaded] == [s.labels() for s in seqs]

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("#alphabet=qutrit kind=half\nXY\n")
        with pytest.raises(ValueError, match="header"):
            read_sequences(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.txt"
        p.write_text("#alphabet=pauli kind=half\n")
        with pytest.raises(ValueError, match="no sequences"):
            read_sequences(p)

    def test_mixed_kinds_rejected(self, tmp_path):
        h = sequence_from_labels("XY")
        with pytest.raises(ValueError, match="kind"):
            write_sequences(tmp_path / "m.txt", [h, symmetrize(h)], "pauli")
