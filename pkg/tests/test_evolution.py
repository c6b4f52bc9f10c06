"""Evolution, scoring, and the zeroth-order average Hamiltonian."""

import numpy as np
import pytest
import scipy.linalg
import scipy.stats

from ddopt.evolution import (
    ScoreError,
    StepCache,
    average_hamiltonian_0,
    evolve,
    make_score_fn,
    partial_trace_system,
    score,
    score_batch,
    step_unitary,
    system_traceless_part,
)
from ddopt.noise import PAULI_MATRICES, generate_noise, pauli_generators
from ddopt.sequences import (
    make_family,
    pauli_gate,
    random_sequence,
    sequence_from_labels,
    symmetrize,
)

TAU = 0.002


@pytest.fixture(scope="module")
def noise16():
    return generate_noise(dim_b=16, seed=7, target_norm=20.4)


@pytest.fixture(scope="module")
def zero_noise():
    inst = generate_noise(dim_b=4, seed=0, target_norm=None)
    object.__setattr__(inst, "h0", np.zeros_like(inst.h0))
    return inst


@pytest.fixture(scope="module")
def cache16(noise16):
    return StepCache(noise16, pauli_generators(TAU))


def haar_unitary(dim, rng):
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


class TestStepUnitary:
    def test_identity_with_zero_noise(self, zero_noise):
        gen = pauli_generators(TAU)[0]
        u = step_unitary(zero_noise, gen, +1)
        np.testing.assert_allclose(u, np.eye(zero_noise.dim), atol=1e-12)

    def test_pauli_with_zero_noise(self, zero_noise):
        for sign in (+1, -1):
            gen = pauli_generators(TAU)[1]  # X
            u = step_unitary(zero_noise, gen, sign)
            np.testing.assert_allclose(
                u, np.kron(PAULI_MATRICES["X"], np.eye(zero_noise.dim_b)), atol=1e-12
            )

    def test_matches_expm_oracle(self, noise16):
        gen = pauli_generators(TAU)[1]
        for sign in (+1, -1):
            u = step_unitary(noise16, gen, sign)
            h = noise16.h0 + sign * np.kron(gen.h, np.eye(noise16.dim_b))
            oracle = scipy.linalg.expm(-1j * h * TAU)
            assert np.linalg.norm(u - oracle) < 1e-8

    def test_unitarity(self, noise16, cache16):
        for gid in range(4):
            for sign in (+1, -1):
                u = cache16.step(gid, sign)
                err = np.linalg.norm(u.conj().T @ u - np.eye(noise16.dim))
                assert err < 1e-9

    def test_cache_size(self, cache16):
        assert len(cache16) == 8


class TestEvolve:
    def test_all_identity_zero_noise(self, zero_noise):
        full = symmetrize(sequence_from_labels("IIII"))
        prop = evolve(zero_noise, full, TAU)
        np.testing.assert_allclose(prop.u, np.eye(zero_noise.dim), atol=1e-12)
        assert score(prop.u, 2, zero_noise.dim_b) == 0.0

    def test_self_inverse_pair(self, zero_noise):
        full = sequence_from_labels("XX", kind="full")
        prop = evolve(zero_noise, full, TAU)
        np.testing.assert_allclose(prop.u, np.eye(zero_noise.dim), atol=1e-12)

    def test_palindrome_zero_noise_is_identity(self, zero_noise):
        rng = np.random.default_rng(4)
        for _ in range(10):
            full = symmetrize(random_sequence(6, 4, rng))
            prop = evolve(zero_noise, full, TAU)
            np.testing.assert_allclose(prop.u, np.eye(zero_noise.dim), atol=1e-12)

    def test_matches_uncached_product(self, noise16, cache16):
        # independent path: exponentiate each step separately, no cache
        full = symmetrize(make_family("DD4", ("X", "Y"))[0])
        gens = pauli_generators(TAU)
        u = np.eye(noise16.dim, dtype=complex)
        L = len(full)
        for k, g in enumerate(full.gates):
            sign = +1 if k < L // 2 else -1
            h = noise16.h0 + sign * np.kron(gens[g.id].h, np.eye(noise16.dim_b))
            u = scipy.linalg.expm(-1j * h * TAU) @ u
        prop = evolve(noise16, full, TAU, cache=cache16)
        assert np.linalg.norm(prop.u - u) < 1e-8
        assert prop.total_time == pytest.approx(L * TAU)

    def test_rejects_half(self, noise16, cache16):
        with pytest.raises(ValueError, match="full"):
            evolve(noise16, sequence_from_labels("XY"), TAU, cache=cache16)


class TestScore:
    def test_identity(self):
        assert score(np.eye(32), 2, 16) == 0.0

    def test_system_flip_is_maximal(self):
        u = np.kron(PAULI_MATRICES["X"], np.eye(16))
        assert score(u, 2, 16) == pytest.approx(1.0, abs=1e-12)

    def test_bath_only_unitary_scores_zero(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            u = np.kron(np.eye(2), haar_unitary(16, rng))
            assert score(u, 2, 16) < 1e-10

    def test_range_over_random_unitaries(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            u = haar_unitary(8, rng)
            s = score(u, 2, 4)
            assert -1e-10 <= s <= 1.0 + 1e-10

    def test_global_phase_invariance(self):
        rng = np.random.default_rng(10)
        u = haar_unitary(8, rng)
        assert score(u, 2, 4) == pytest.approx(score(np.exp(1j * 0.7) * u, 2, 4), abs=1e-12)

    def test_broken_unitary_raises(self):
        with pytest.raises(ScoreError):
            score(3.0 * np.eye(8), 2, 4)

    def test_partial_trace_convention(self):
        # system first: Tr_S(A (x) B) = Tr(A) B
        a = np.array([[1, 2], [3, 4]], dtype=complex)
        b = np.arange(16, dtype=complex).reshape(4, 4)
        np.testing.assert_allclose(partial_trace_system(np.kron(a, b), 2, 4), 5 * b)


class TestScoreBatch:
    def test_single_identity_sequence(self, zero_noise):
        out = score_batch(zero_noise, [sequence_from_labels("IIII")], TAU)
        np.testing.assert_allclose(out, [0.0], atol=1e-12)

    def test_matches_per_sequence_path(self, noise16, cache16):
        rng = np.random.default_rng(12)
        halves = [random_sequence(8, 4, rng) for _ in range(40)]
        batch = score_batch(noise16, halves, TAU, cache=cache16, chunk=7)
        single = np.array(
            [score(evolve(noise16, symmetrize(h), TAU, cache=cache16).u, 2, 16) for h in halves]
        )
        np.testing.assert_allclose(batch, single, atol=1e-10)

    def test_permutation_equivariance(self, noise16, cache16):
        rng = np.random.default_rng(13)
        halves = [random_sequence(8, 4, rng) for _ in range(20)]
        base = score_batch(noise16, halves, TAU, cache=cache16)
        perm = rng.permutation(20)
        shuffled = score_batch(noise16, [halves[i] for i in perm], TAU, cache=cache16)
        np.testing.assert_allclose(shuffled, base[perm], atol=0)

    def test_threads_do_not_change_results(self, noise16, cache16):
        rng = np.random.default_rng(14)
        halves = [random_sequence(8, 4, rng) for _ in range(50)]
        a = score_batch(noise16, halves, TAU, cache=cache16, threads=1, chunk=8)
        b = score_batch(noise16, halves, TAU, cache=cache16, threads=4, chunk=8)
        np.testing.assert_array_equal(a, b)

    def test_mixed_lengths_rejected(self, noise16, cache16):
        rng = np.random.default_rng(15)
        with pytest.raises(ValueError, match="same length"):
            score_batch(
                noise16,
                [random_sequence(4, 4, rng), random_sequence(5, 4, rng)],
                TAU,
                cache=cache16,
            )

    def test_edd8_beats_random_by_10x(self, noise16, cache16):
        # qualitative reproduction of the published comparison at L=32
        edd8_halves = [
            sequence_from_labels(m.labels() * 2) for m in make_family("EDD8")
        ]
        edd8_avg = score_batch(noise16, edd8_halves, TAU, cache=cache16).mean()
        rng = np.random.default_rng(16)
        rand = [random_sequence(16, 4, rng) for _ in range(1000)]
        rand_avg = score_batch(noise16, rand, TAU, cache=cache16).mean()
        assert edd8_avg * 10 < rand_avg


class TestAverageHamiltonian:
    def test_xy4_decouples_system(self, noise16):
        pulses = [pauli_gate(c) for c in "XYXY"]
        hbar = average_hamiltonian_0(pulses, noise16.h0)
        resid = system_traceless_part(hbar, 2, 16)
        assert np.linalg.norm(resid) < 1e-10 * noise16.norm2

    def test_single_identity_pulse(self, noise16):
        hbar = average_hamiltonian_0([pauli_gate("I")], noise16.h0)
        np.testing.assert_allclose(hbar, noise16.h0, atol=1e-14)

    def test_two_x_pulses_hand_expansion(self, noise16):
        pulses = [pauli_gate("X"), pauli_gate("X")]
        hbar = average_hamiltonian_0(pulses, noise16.h0)
        xf = np.kron(PAULI_MATRICES["X"], np.eye(16))
        expected = (noise16.h0 + xf @ noise16.h0 @ xf) / 2
        np.testing.assert_allclose(hbar, expected, atol=1e-12)

    def test_empty_rejected(self, noise16):
        with pytest.raises(ValueError):
            average_hamiltonian_0([], noise16.h0)


class TestScoreFn:
    def test_closure_matches_direct(self, noise16):
        fn = make_score_fn(noise16, TAU)
        rng = np.random.default_rng(17)
        halves = [random_sequence(8, 4, rng) for _ in range(10)]
        np.testing.assert_allclose(fn(halves), score_batch(noise16, halves, TAU), atol=0)

    def test_throughput_budget(self, noise16, cache16):
        # 10k length-16 halves at dim 32 must stay well under a minute
        import time

        rng = np.random.default_rng(18)
        halves = [random_sequence(16, 4, rng) for _ in range(10_000)]
        started = time.monotonic()
        out = score_batch(noise16, halves, TAU, cache=cache16)
        elapsed = time.monotonic() - started
        assert len(out) == 10_000
        assert elapsed < 60.0
