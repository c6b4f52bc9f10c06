"""Random system-bath Hamiltonians and piecewise-constant control generators.

The noise Hamiltonian couples one system qubit to a register of bath qubits
through 3-body terms sigma^mu (x) sigma_i^alpha sigma_j^beta with random
signed strengths; the pure-bath channel (mu = I) is suppressed by a large
factor so the system-bath coupling dominates. Control pulses are realized
by constant Hamiltonians of width tau with exp(-i H tau) equal to the gate.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .sequences import PAULI_LABELS

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_COUPLING_LABELS = ("X", "Y", "Z")


class NoiseFileError(ValueError):
    """Raised when a persisted noise instance fails validation on load."""


@dataclass(frozen=True)
class Coefficient:
    """One sampled term strength: channel mu on the system, alpha/beta on bath pair (i, j)."""

    mu: str
    i: int
    j: int
    alpha: str
    beta: str
    value: float


@dataclass(frozen=True)
class NoiseInstance:
    dim_s: int
    dim_b: int
    h0: np.ndarray
    coeffs: tuple[Coefficient, ...]
    seed: int
    norm2: float
    target_norm: float | None = None
    coupling_range: tuple[float, float] = (1.0, 3.0)
    bath_suppression: float = 1000.0

    @property
    def dim(self) -> int:
        return self.dim_s * self.dim_b

    def channel_block(self, mu: str) -> np.ndarray:
        """The bath operator B_mu such that H0 = sum_mu sigma^mu (x) B_mu."""
        d = self.dim_b
        h = self.h0.reshape(self.dim_s, d, self.dim_s, d)
        sigma = PAULI_MATRICES[mu]
        # Tr_S[(sigma (x) I)^dag H0] / dim_s isolates B_mu (Paulis are orthogonal)
        return np.einsum("st,tasb->ab", sigma.conj().T, h) / self.dim_s


def _bath_pair_operator(n_qubits: int, i: int, j: int, alpha: str, beta: str) -> np.ndarray:
    ops = [PAULI_MATRICES["I"]] * n_qubits
    ops[i] = PAULI_MATRICES[alpha]
    ops[j] = PAULI_MATRICES[beta]
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def generate_noise(
    dim_b: int = 16,
    seed: int = 7,
    coupling_range: tuple[float, float] = (1.0, 3.0),
    bath_suppression: float = 1000.0,
    target_norm: float | None = 20.4,
) -> NoiseInstance:
    """Sample a random system-bath Hamiltonian over bath-qubit pairs.

    Every (mu, i, j, alpha, beta) tuple gets an independent magnitude from
    coupling_range and a random sign; the mu = I (pure bath) magnitudes are
    divided by bath_suppression. If target_norm is given the assembled
    Hamiltonian is rescaled to that 2-norm, coefficients included.
    """
    a, b = coupling_range
    if a <= 0 or b < a:
        raise ValueError(f"coupling range must satisfy 0 < a <= b, got [{a}, {b}]")
    n_qubits = int(np.log2(dim_b))
    if 2**n_qubits != dim_b or dim_b < 2:
        raise ValueError(f"bath dimension must be a power of 2 >= 2, got {dim_b}")

    rng = np.random.default_rng(seed)
    dim = 2 * dim_b
    h0 = np.zeros((dim, dim), dtype=complex)
    coeffs: list[Coefficient] = []
    for mu in PAULI_LABELS:
        block = np.zeros((dim_b, dim_b), dtype=complex)
        for i in range(n_qubits):
            for j in range(n_qubits):
                if i == j:
                    continue
                for alpha in _COUPLING_LABELS:
                    for beta in _COUPLING_LABELS:
                        magnitude = rng.uniform(a, b)
                        sign = 1.0 if rng.random() < 0.5 else -1.0
                        value = sign * magnitude
                        if mu == "I":
                            value /= bath_suppression
                        coeffs.append(Coefficient(mu, i, j, alpha, beta, value))
                        block += value * _bath_pair_operator(n_qubits, i, j, alpha, beta)
        h0 += np.kron(PAULI_MATRICES[mu], block)

    norm2 = float(np.linalg.norm(h0, 2))
    if target_norm is not None:
        scale = target_norm / norm2
        h0 *= scale
        coeffs = [
            Coefficient(c.mu, c.i, c.j, c.alpha, c.beta, c.value * scale) for c in coeffs
        ]
        norm2 = float(np.linalg.norm(h0, 2))
    return NoiseInstance(
        dim_s=2,
        dim_b=dim_b,
        h0=h0,
        coeffs=tuple(coeffs),
        seed=seed,
        norm2=norm2,
        target_norm=target_norm,
        coupling_range=(a, b),
        bath_suppression=bath_suppression,
    )


@dataclass(frozen=True)
class GateGenerator:
    """Constant system Hamiltonian H with exp(-i H tau) equal to the gate."""

    gate_id: int
    label: str
    h: np.ndarray
    tau: float
    unitary: np.ndarray = field(repr=False, default=None)


def gate_generators(unitaries, tau: float, labels=None) -> list[GateGenerator]:
    """Generators H_g = (pi / 2 tau) (I - g) for an alphabet of involutions.

    The construction makes exp(-i H_g tau) = g with no residual phase, and
    the negated generator satisfies exp(+i H_g tau) = g as well, which is
    what the time-reversed half of a symmetric sequence uses.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if labels is None:
        labels = [f"G{i}" for i in range(len(unitaries))]
    gens = []
    eye = np.eye(2, dtype=complex)
    for idx, (g, lbl) in enumerate(zip(unitaries, labels)):
        g = np.asarray(g, dtype=complex)
        if not np.allclose(g @ g, eye, atol=1e-10) or not np.allclose(g, g.conj().T, atol=1e-10):
            raise ValueError(f"gate {lbl} is not a Hermitian involution; generator formula invalid")
        if np.allclose(g, eye, atol=1e-14):
            h = np.zeros((2, 2), dtype=complex)
        else:
            h = (np.pi / (2.0 * tau)) * (eye - g)
        gens.append(GateGenerator(gate_id=idx, label=lbl, h=h, tau=tau, unitary=g))
    return gens


def pauli_generators(tau: float) -> list[GateGenerator]:
    return gate_generators(
        [PAULI_MATRICES[lbl] for lbl in PAULI_LABELS], tau, labels=list(PAULI_LABELS)
    )


def random_involution_gates(count: int, seed: int) -> list[np.ndarray]:
    """count gates g_j = U_j^dag X U_j with U_j Haar-uniform on U(2)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    x = PAULI_MATRICES["X"]
    gates = []
    for _ in range(count):
        z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
        q, r = np.linalg.qr(z)
        q = q * (np.diag(r) / np.abs(np.diag(r)))  # fix phases for Haar measure
        gates.append(q.conj().T @ x @ q)
    return gates


# --- persistence -----------------------------------------------------------
# Layout: magic, version, dim_s, dim_b, seed, target_norm (NaN if absent),
# coupling range, bath suppression, coefficient table, dense H0 as row-major
# complex128. Header-first so the file is self-describing; byte-deterministic
# for a given instance.

_MAGIC = b"DDNOISE1"
_MU_INDEX = {lbl: i for i, lbl in enumerate(PAULI_LABELS)}


def save_noise(noise: NoiseInstance, path) -> None:
    buf = io.BytesIO()
    buf.write(_MAGIC)
    target = np.nan if noise.target_norm is None else noise.target_norm
    buf.write(
        struct.pack(
            "<qqqdddd",
            noise.dim_s,
            noise.dim_b,
            noise.seed,
            target,
            noise.coupling_range[0],
            noise.coupling_range[1],
            noise.bath_suppression,
        )
    )
    buf.write(struct.pack("<q", len(noise.coeffs)))
    for c in noise.coeffs:
        buf.write(
            struct.pack("<bhhbbd", _MU_INDEX[c.mu], c.i, c.j, _MU_INDEX[c.alpha], _MU_INDEX[c.beta], c.value)
        )
    buf.write(np.ascontiguousarray(noise.h0, dtype=np.complex128).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_noise(path) -> NoiseInstance:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise NoiseFileError(f"{path} is not a noise instance file")
    off = len(_MAGIC)
    dim_s, dim_b, seed, target, a, b, suppression = struct.unpack_from("<qqqdddd", raw, off)
    off += struct.calcsize("<qqqdddd")
    (n_coeffs,) = struct.unpack_from("<q", raw, off)
    off += 8
    coeffs = []
    rec = struct.Struct("<bhhbbd")
    for _ in range(n_coeffs):
        mu, i, j, alpha, beta, value = rec.unpack_from(raw, off)
        off += rec.size
        coeffs.append(
            Coefficient(PAULI_LABELS[mu], i, j, PAULI_LABELS[alpha], PAULI_LABELS[beta], value)
        )
    dim = dim_s * dim_b
    expected = dim * dim * 16
    if len(raw) - off != expected:
        raise NoiseFileError(f"{path}: truncated matrix block ({len(raw) - off} of {expected} bytes)")
    h0 = np.frombuffer(raw[off:], dtype=np.complex128).reshape(dim, dim).copy()
    herm_err = np.abs(h0 - h0.conj().T).max()
    if herm_err > 1e-12:
        raise NoiseFileError(f"{path}: stored Hamiltonian is not Hermitian (max dev {herm_err:.2e})")
    return NoiseInstance(
        dim_s=dim_s,
        dim_b=dim_b,
        h0=h0,
        coeffs=tuple(coeffs),
        seed=seed,
        norm2=float(np.linalg.norm(h0, 2)),
        target_norm=None if np.isnan(target) else target,
        coupling_range=(a, b),
        bath_suppression=suppression,
    )
