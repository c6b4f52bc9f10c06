"""Stacked recurrent network with gated memory cells, written on numpy.

Cell equations per layer, with r the layer output (projected state when the
layer has a projection, the state itself otherwise):

    i_t = sigm(U^i x_t + W^i r_{t-1} + p^i * c_{t-1} + b^i)
    f_t = sigm(U^f x_t + W^f r_{t-1} + p^f * c_{t-1} + b^f)
    g_t = tanh(U^c x_t + W^c r_{t-1} + b^c)
    c_t = c_{t-1} * f_t + g_t * i_t
    o_t = sigm(U^o x_t + W^o r_{t-1} + p^o * c_t + b^o)
    s_t = tanh(c_t) * o_t
    r_t = W^p s_t        (projection layers only)

Peephole terms (p^i, p^f on the previous cell, p^o on the current one) are
present only when the architecture asks for them. A softmax readout sits on
the top layer's output. Backpropagation through time is hand-rolled; long
sequences are split into fixed windows whose boundary states are treated as
constants, and the per-window gradients are summed.
"""

from __future__ import annotations

import copy
import io
import json
import struct
from typing import Sequence

import numpy as np

from ..sequences import GateSequence, custom_alphabet, pauli_alphabet, sequence_from_ids
from .architecture import Architecture, Hyperparams

PROB_FLOOR = 1e-12
GATE_NAMES = ("i", "f", "o", "c")


class NumericalError(ArithmeticError):
    """Raised when activations or the loss stop being finite."""


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class NetworkModel:
    """Weights plus the forward/backward/sampling machinery."""

    def __init__(self, arch: Architecture, hyper: Hyperparams, seed: int,
                 init_scale: float = 0.08):
        self.arch = arch
        self.hyper = hyper
        self.seed = seed
        self.epoch = 0
        self.best_avg_score = np.inf
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}

        def init(name, shape):
            self.params[name] = rng.uniform(-init_scale, init_scale, size=shape)

        in_dim = arch.input_dim
        for j, h in enumerate(arch.units):
            k = arch.output_dim(j)
            for gate in GATE_NAMES:
                init(f"l{j}_U{gate}", (h, in_dim))
                init(f"l{j}_W{gate}", (h, k))
                init(f"l{j}_b{gate}", (h,))
            if arch.peepholes:
                for gate in ("i", "f", "o"):
                    init(f"l{j}_p{gate}", (h,))
            if arch.projections[j] is not None:
                init(f"l{j}_P", (k, h))
            in_dim = k
        init("V", (arch.input_dim, in_dim))
        init("b_v", (arch.input_dim,))

    @property
    def n_layers(self) -> int:
        return len(self.arch.units)

    def zero_params(self) -> None:
        for v in self.params.values():
            v[...] = 0.0

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.params[k][...] = v

    def clone(self) -> "NetworkModel":
        return copy.deepcopy(self)

    # --- forward ---------------------------------------------------------

    def _cell_step(self, j: int, x, r_prev, c_prev):
        p = self.params
        peep = self.arch.peepholes
        ai = x @ p[f"l{j}_Ui"].T + r_prev @ p[f"l{j}_Wi"].T + p[f"l{j}_bi"]
        af = x @ p[f"l{j}_Uf"].T + r_prev @ p[f"l{j}_Wf"].T + p[f"l{j}_bf"]
        ac = x @ p[f"l{j}_Uc"].T + r_prev @ p[f"l{j}_Wc"].T + p[f"l{j}_bc"]
        if peep:
            ai = ai + c_prev * p[f"l{j}_pi"]
            af = af + c_prev * p[f"l{j}_pf"]
        i = _sigmoid(ai)
        f = _sigmoid(af)
        g = np.tanh(ac)
        c = c_prev * f + g * i
        ao = x @ p[f"l{j}_Uo"].T + r_prev @ p[f"l{j}_Wo"].T + p[f"l{j}_bo"]
        if peep:
            ao = ao + c * p[f"l{j}_po"]
        o = _sigmoid(ao)
        tc = np.tanh(c)
        s = tc * o
        if self.arch.projections[j] is not None:
            r = s @ p[f"l{j}_P"].T
        else:
            r = s
        return i, f, o, g, c, tc, s, r

    def forward(self, inputs: np.ndarray, return_cache: bool = False):
        """Run the stack over one-hot inputs of shape (T, B, input_dim).

        Returns per-step output distributions (T, B, input_dim), plus the
        activation cache when requested.
        """
        T, B, _ = inputs.shape
        cache = {"inputs": inputs, "layers": []}
        x_seq = inputs
        for j, h in enumerate(self.arch.units):
            k = self.arch.output_dim(j)
            arrs = {nm: np.empty((T, B, h)) for nm in ("I", "F", "O", "G", "C", "TC", "S")}
            arrs["R"] = np.empty((T, B, k))
            r_prev = np.zeros((B, k))
            c_prev = np.zeros((B, h))
            for t in range(T):
                i, f, o, g, c, tc, s, r = self._cell_step(j, x_seq[t], r_prev, c_prev)
                for nm, val in zip(("I", "F", "O", "G", "C", "TC", "S", "R"),
                                   (i, f, o, g, c, tc, s, r)):
                    arrs[nm][t] = val
                r_prev, c_prev = r, c
            arrs["X"] = x_seq
            cache["layers"].append(arrs)
            x_seq = arrs["R"]
        logits = x_seq @ self.params["V"].T + self.params["b_v"]
        if not np.isfinite(logits).all():
            raise NumericalError("non-finite logits in forward pass")
        probs = softmax(logits)
        cache["probs"] = probs
        if return_cache:
            return probs, cache
        return probs

    def forward_sequence(self, ids: Sequence[int]):
        """Per-step distributions for a single gate-id sequence."""
        ids = np.asarray(ids, dtype=int)
        x = np.zeros((len(ids), 1, self.arch.input_dim))
        x[np.arange(len(ids)), 0, ids] = 1.0
        return self.forward(x)[:, 0, :]

    # --- loss and gradients ------------------------------------------------

    def loss_from_probs(self, probs: np.ndarray, targets: np.ndarray) -> float:
        """Mean negative log-likelihood per gate; targets shaped (T, B)."""
        T, B, _ = probs.shape
        picked = probs[np.arange(T)[:, None], np.arange(B)[None, :], targets]
        loss = -np.log(np.maximum(picked, PROB_FLOOR)).mean()
        if not np.isfinite(loss):
            raise NumericalError("non-finite loss")
        return float(loss)

    def backward(self, cache: dict, targets: np.ndarray, truncation: int = 32) -> dict:
        """Gradients of the mean per-gate loss for every parameter.

        Windows of `truncation` steps are backpropagated independently; the
        state entering a window keeps its forward value but passes no
        gradient, and window gradients accumulate into one total.
        """
        probs = cache["probs"]
        T, B, o_dim = probs.shape
        p = self.params
        arch = self.arch
        grads = {k: np.zeros_like(v) for k, v in p.items()}

        dz = probs.copy()
        dz[np.arange(T)[:, None], np.arange(B)[None, :], targets] -= 1.0
        dz /= T * B

        top = self.n_layers - 1
        bounds = list(range(0, T, truncation)) + [T]
        for seg in range(len(bounds) - 2, -1, -1):
            lo, hi = bounds[seg], bounds[seg + 1]
            dr_carry = [np.zeros((B, arch.output_dim(j))) for j in range(self.n_layers)]
            dc_carry = [np.zeros((B, h)) for h in arch.units]
            for t in range(hi - 1, lo - 1, -1):
                r_top = cache["layers"][top]["R"][t]
                grads["V"] += dz[t].T @ r_top
                grads["b_v"] += dz[t].sum(axis=0)
                d_above = dz[t] @ p["V"]
                for j in range(top, -1, -1):
                    a = cache["layers"][j]
                    i_t, f_t, o_t, g_t = a["I"][t], a["F"][t], a["O"][t], a["G"][t]
                    c_t, tc_t, s_t, x_t = a["C"][t], a["TC"][t], a["S"][t], a["X"][t]
                    if t > 0:
                        # at a window boundary these forward values enter as
                        # constants; the zeroed carries stop their gradient
                        c_prev, r_prev = a["C"][t - 1], a["R"][t - 1]
                    else:
                        c_prev = np.zeros_like(c_t)
                        r_prev = np.zeros_like(a["R"][t])

                    dr = d_above + dr_carry[j]
                    if arch.projections[j] is not None:
                        grads[f"l{j}_P"] += dr.T @ s_t
                        ds = dr @ p[f"l{j}_P"]
                    else:
                        ds = dr
                    do = ds * tc_t
                    dc = ds * o_t * (1.0 - tc_t**2) + dc_carry[j]
                    dao = do * o_t * (1.0 - o_t)
                    if arch.peepholes:
                        grads[f"l{j}_po"] += (dao * c_t).sum(axis=0)
                        dc = dc + dao * p[f"l{j}_po"]
                    df = dc * c_prev
                    di = dc * g_t
                    dg = dc * i_t
                    dc_prev = dc * f_t
                    dai = di * i_t * (1.0 - i_t)
                    daf = df * f_t * (1.0 - f_t)
                    dac = dg * (1.0 - g_t**2)
                    if arch.peepholes:
                        grads[f"l{j}_pi"] += (dai * c_prev).sum(axis=0)
                        grads[f"l{j}_pf"] += (daf * c_prev).sum(axis=0)
                        dc_prev = dc_prev + dai * p[f"l{j}_pi"] + daf * p[f"l{j}_pf"]
                    dx = np.zeros_like(x_t)
                    dr_prev = np.zeros_like(r_prev)
                    for gate, da in zip(GATE_NAMES, (dai, daf, dao, dac)):
                        grads[f"l{j}_U{gate}"] += da.T @ x_t
                        grads[f"l{j}_W{gate}"] += da.T @ r_prev
                        grads[f"l{j}_b{gate}"] += da.sum(axis=0)
                        dx += da @ p[f"l{j}_U{gate}"]
                        dr_prev += da @ p[f"l{j}_W{gate}"]
                    if t > lo:
                        dr_carry[j] = dr_prev
                        dc_carry[j] = dc_prev
                    else:
                        dr_carry[j][...] = 0.0
                        dc_carry[j][...] = 0.0
                    d_above = dx
        return grads

    def loss_and_grads(self, batch_ids: np.ndarray, truncation: int = 32):
        """Convenience wrapper: (B, L) gate ids -> (loss, grads).

        Position t predicts position t+1, so a length-L sequence gives L-1
        training steps.
        """
        inputs, targets = encode_batch(batch_ids, self.arch.input_dim)
        probs, cache = self.forward(inputs, return_cache=True)
        loss = self.loss_from_probs(probs, targets)
        grads = self.backward(cache, targets, truncation=truncation)
        return loss, grads

    # --- sampling ----------------------------------------------------------

    def sample_many(self, count: int, half_length: int,
                    rng: np.random.Generator) -> list[GateSequence]:
        """Draw half-sequences; the first gate is uniform, the rest come from
        the model conditioned on what was already emitted."""
        o = self.arch.input_dim
        alphabet = pauli_alphabet() if o == 4 else custom_alphabet(o)
        ids = np.empty((count, half_length), dtype=int)
        ids[:, 0] = rng.integers(0, o, size=count)
        r_states = [np.zeros((count, self.arch.output_dim(j))) for j in range(self.n_layers)]
        c_states = [np.zeros((count, h)) for h in self.arch.units]
        for t in range(half_length - 1):
            x = np.zeros((count, o))
            x[np.arange(count), ids[:, t]] = 1.0
            for j in range(self.n_layers):
                _, _, _, _, c, _, _, r = self._cell_step(j, x, r_states[j], c_states[j])
                r_states[j], c_states[j] = r, c
                x = r
            probs = softmax(x @ self.params["V"].T + self.params["b_v"])
            u = rng.random((count, 1))
            ids[:, t + 1] = (probs.cumsum(axis=1) < u).sum(axis=1).clip(0, o - 1)
        return [sequence_from_ids(row, alphabet) for row in ids]

    def sample(self, half_length: int, rng: np.random.Generator) -> GateSequence:
        return self.sample_many(1, half_length, rng)[0]


def encode_batch(batch_ids: np.ndarray, alphabet_size: int):
    """(B, L) gate ids -> one-hot inputs (L-1, B, A) and targets (L-1, B)."""
    batch_ids = np.asarray(batch_ids, dtype=int)
    B, L = batch_ids.shape
    if L < 2:
        raise ValueError("sequences must have at least 2 gates to form input/target pairs")
    T = L - 1
    inputs = np.zeros((T, B, alphabet_size))
    steps = np.arange(T)[:, None]
    cols = np.arange(B)[None, :]
    inputs[steps, cols, batch_ids[:, :-1].T] = 1.0
    targets = batch_ids[:, 1:].T.copy()
    return inputs, targets


# --- checkpoints -------------------------------------------------------------
# magic, version, JSON header (architecture, hyperparameters, seed, epoch,
# best score, peephole convention), then named float64 arrays with explicit
# shapes. Round trips are bit exact.

_CKPT_MAGIC = b"DDCKPT01"


def save_checkpoint(model: NetworkModel, path, adam_state=None) -> None:
    names = sorted(model.params)
    arrays = {f"param/{n}": model.params[n] for n in names}
    if adam_state is not None:
        arrays.update({f"adam_m/{n}": adam_state.m[n] for n in names})
        arrays.update({f"adam_v/{n}": adam_state.v[n] for n in names})
    header = {
        "kind": "network",
        "version": 1,
        "architecture": {
            "input_dim": model.arch.input_dim,
            "units": list(model.arch.units),
            "peepholes": model.arch.peepholes,
            "projections": list(model.arch.projections),
        },
        "hyperparams": {
            "step_rate": model.hyper.step_rate,
            "beta1": model.hyper.beta1,
            "beta2": model.hyper.beta2,
            "epsilon": model.hyper.epsilon,
            "batch_size": model.hyper.batch_size,
        },
        "seed": model.seed,
        "epoch": model.epoch,
        "best_avg_score": None if np.isinf(model.best_avg_score) else model.best_avg_score,
        "adam_t": 0 if adam_state is None else adam_state.t,
        "peephole_convention": "input/forget gates read c_{t-1}, output gate reads c_t",
        "arrays": [
            {"name": n, "dtype": str(a.dtype), "shape": list(a.shape)}
            for n, a in arrays.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<q", len(blob)))
    buf.write(blob)
    for n in header["arrays"]:
        buf.write(np.ascontiguousarray(arrays[n["name"]]).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Returns (model, adam_state or None)."""
    from .training import AdamState

    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise ValueError(f"{path} is not a network checkpoint")
    off = len(_CKPT_MAGIC)
    (hlen,) = struct.unpack_from("<q", raw, off)
    off += 8
    header = json.loads(raw[off : off + hlen])
    off += hlen
    arch = Architecture(
        input_dim=header["architecture"]["input_dim"],
        units=tuple(header["architecture"]["units"]),
        peepholes=header["architecture"]["peepholes"],
        projections=tuple(header["architecture"]["projections"]),
    )
    hyper = Hyperparams(**header["hyperparams"])
    model = NetworkModel(arch, hyper, seed=header["seed"])
    model.epoch = header["epoch"]
    model.best_avg_score = (
        np.inf if header["best_avg_score"] is None else header["best_avg_score"]
    )
    arrays = {}
    for meta in header["arrays"]:
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        dt = np.dtype(meta["dtype"])
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=off).reshape(shape).copy()
        off += count * dt.itemsize
        arrays[meta["name"]] = arr
    for name in model.params:
        model.params[name] = arrays[f"param/{name}"]
    adam = None
    if any(k.startswith("adam_m/") for k in arrays):
        adam = AdamState.zeros_like(model.params)
        adam.t = header["adam_t"]
        for name in model.params:
            adam.m[name] = arrays[f"adam_m/{name}"]
            adam.v[name] = arrays[f"adam_v/{name}"]
    return model, adam
