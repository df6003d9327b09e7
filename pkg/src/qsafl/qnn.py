"""Variational quantum classifier: amplitude encoding, strongly-entangling
u3/cu3 blocks, exact sigma_z readout, softmax cross-entropy, and Adam.

Expectation values are computed analytically from the amplitudes, never
by finite sampling.  Gradients use adjoint differentiation (reverse
sweep with analytic gate derivatives); the test suite pins them against
central finite differences.

Block wiring: in block B_r every qubit i gets a u3 gate, then a
controlled-u3 with control i and target (i + r) mod n, in ascending i
order.  One depth unit is the pair (B_1, B_3), giving
12 * n_qubits * depth trainable parameters grouped as (alpha, theta,
phi) triples.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import statevec as sv
from .datasets import Dataset
from .models import ModelParams

DEFAULT_BLOCK_OFFSETS = (1, 3)

_SIGMA = (sv.X.matrix, sv.Y.matrix, sv.Z.matrix)


def amplitude_encode(pixels, n_qubits: int) -> np.ndarray:
    """Zero-pad to 2**n_qubits and scale by 1/sqrt(sum p_i^2)."""
    pixels = np.asarray(pixels, dtype=float).ravel()
    dim = 2**n_qubits
    if len(pixels) > dim:
        raise ValueError(f"{len(pixels)} features do not fit in {n_qubits} qubits")
    chi = float(np.sum(pixels**2))
    if chi == 0.0:
        raise ValueError("cannot amplitude-encode an all-zero vector")
    state = np.zeros(dim, dtype=complex)
    state[: len(pixels)] = pixels / np.sqrt(chi)
    return state


def u3_gate(alpha: float, theta: float, phi: float) -> sv.Gate:
    return sv.u3(alpha, theta, phi)


def _axis(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi),
                     np.sin(theta) * np.sin(phi),
                     np.cos(theta)])


def u3_derivatives(alpha: float, theta: float, phi: float) -> list[np.ndarray]:
    """d(u3)/d(alpha), d/d(theta), d/d(phi) as 2x2 matrices."""
    n = _axis(theta, phi)
    dn_dtheta = np.array([np.cos(theta) * np.cos(phi),
                          np.cos(theta) * np.sin(phi),
                          -np.sin(theta)])
    dn_dphi = np.array([-np.sin(theta) * np.sin(phi),
                        np.sin(theta) * np.cos(phi),
                        0.0])
    n_sigma = sum(c * s for c, s in zip(n, _SIGMA))
    d_alpha = -np.sin(alpha) * np.eye(2) + 1j * np.cos(alpha) * n_sigma
    d_theta = 1j * np.sin(alpha) * sum(c * s for c, s in zip(dn_dtheta, _SIGMA))
    d_phi = 1j * np.sin(alpha) * sum(c * s for c, s in zip(dn_dphi, _SIGMA))
    return [d_alpha, d_theta, d_phi]


def _control_block(m: np.ndarray) -> np.ndarray:
    """Embed a 2x2 matrix into the control-1 block of a 4x4 (zero elsewhere if not unitary)."""
    out = np.zeros((4, 4), dtype=complex)
    out[:2, :2] = np.eye(2)
    out[2:, 2:] = m
    return out


# --- batched state operations (leading axis = sample) -----------------------


def _apply_batch(states: np.ndarray, m: np.ndarray, targets: tuple[int, ...], n: int) -> np.ndarray:
    t = states.reshape((-1,) + (2,) * n)
    if len(targets) == 1:
        ax = targets[0] + 1
        out = np.tensordot(m, t, axes=([1], [ax]))
        out = np.moveaxis(out, 0, ax)
    else:
        a0, a1 = targets[0] + 1, targets[1] + 1
        moved = np.moveaxis(t, (a0, a1), (1, 2))
        shape = moved.shape
        flat = moved.reshape(shape[0], 4, -1)
        res = np.einsum("ij,bjr->bir", m, flat).reshape(shape)
        out = np.moveaxis(res, (1, 2), (a0, a1))
    return np.ascontiguousarray(out).reshape(len(states), -1)


def _sign_table(n: int) -> np.ndarray:
    """(n, 2**n) matrix of (-1)**(bit q of basis index)."""
    idx = np.arange(2**n)
    return np.array([1 - 2 * ((idx >> (n - 1 - q)) & 1) for q in range(n)], dtype=float)


@dataclass
class _Op:
    controlled: bool
    targets: tuple[int, ...]
    param_offset: int  # start of the (alpha, theta, phi) triple


class QnnCircuit:
    """Parameterized circuit of repeated strongly-entangling block pairs."""

    def __init__(self, n_qubits: int, depth: int, params=None,
                 block_offsets: tuple[int, ...] = DEFAULT_BLOCK_OFFSETS):
        if n_qubits < 2:
            raise ValueError("need at least 2 qubits")
        for r in block_offsets:
            if r % n_qubits == 0:
                raise ValueError(f"block offset {r} is 0 mod {n_qubits} (self-target)")
        self.n_qubits = n_qubits
        self.depth = depth
        self.block_offsets = tuple(block_offsets)
        self.ops: list[_Op] = []
        offset = 0
        for _ in range(depth):
            for r in self.block_offsets:
                for i in range(n_qubits):
                    self.ops.append(_Op(False, (i,), offset))
                    offset += 3
                for i in range(n_qubits):
                    self.ops.append(_Op(True, (i, (i + r) % n_qubits), offset))
                    offset += 3
        self.n_params = offset
        if params is None:
            params = np.zeros(self.n_params)
        self.params = np.asarray(params, dtype=float).copy()
        if len(self.params) != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {len(self.params)}")
        self._signs = _sign_table(n_qubits)

    def _op_matrix(self, op: _Op) -> np.ndarray:
        a, t, p = self.params[op.param_offset : op.param_offset + 3]
        m = sv.u3_matrix(a, t, p)
        return _control_block(m) if op.controlled else m

    def run_batch(self, states: np.ndarray) -> np.ndarray:
        """Apply the circuit to a (batch, 2**n) array of encoded states."""
        states = np.asarray(states, dtype=complex)
        for op in self.ops:
            states = _apply_batch(states, self._op_matrix(op), op.targets, self.n_qubits)
        return states

    def run(self, state: np.ndarray) -> np.ndarray:
        return self.run_batch(state[None, :])[0]

    def expectations_batch(self, states: np.ndarray) -> np.ndarray:
        """Per-qubit <sigma_z> = P(0) - P(1), shape (batch, n_qubits)."""
        return (np.abs(states) ** 2) @ self._signs.T

    def expectations(self, state: np.ndarray) -> np.ndarray:
        return self.expectations_batch(state[None, :])[0]


def entangling_block(state: np.ndarray, r: int, block_params: np.ndarray) -> np.ndarray:
    """Apply one block B_r to a single state; block_params has shape (n, 2, 3)."""
    n = sv.num_qubits(state)
    if r % n == 0:
        raise ValueError(f"offset {r} is 0 mod {n} (self-target)")
    block_params = np.asarray(block_params, dtype=float).reshape(n, 2, 3)
    for i in range(n):
        state = sv.apply_gate(state, sv.u3(*block_params[i, 0]), i)
    for i in range(n):
        state = sv.apply_gate(state, sv.cu3(*block_params[i, 1]), (i, (i + r) % n))
    return state


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def qnn_forward(circuit: QnnCircuit, state: np.ndarray, n_classes: int) -> np.ndarray:
    """Class probability vector: softmax over the first n_classes <sigma_z> values."""
    if n_classes > circuit.n_qubits:
        raise ValueError("class count cannot exceed the qubit count")
    z = circuit.expectations(circuit.run(state))
    return softmax(z[:n_classes])


def qnn_loss_and_grad(
    circuit: QnnCircuit, states: np.ndarray, labels: np.ndarray, n_classes: int
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. all parameters.

    Adjoint sweep: run forward once, seed the costate with the
    observable sum_q (dL/dz_q) Z_q, then walk the circuit backwards
    undoing each gate and accumulating 2 Re <costate| dU |state>.
    """
    states = np.asarray(states, dtype=complex)
    labels = np.asarray(labels, dtype=int)
    if len(states) == 0:
        raise ValueError("empty batch")
    if n_classes > circuit.n_qubits:
        raise ValueError("class count cannot exceed the qubit count")
    n = circuit.n_qubits
    batch = len(states)

    final = circuit.run_batch(states)
    z = circuit.expectations_batch(final)
    probs = softmax(z[:, :n_classes])
    onehot = np.eye(n_classes)[labels]
    loss = float(-np.mean(np.log(probs[np.arange(batch), labels] + 1e-12)))

    g = np.zeros((batch, n))
    g[:, :n_classes] = (probs - onehot) / batch  # dL/dz per sample, mean folded in

    # costate lambda_b = A_b |psi_b>, with A_b diagonal in the computational basis
    diag = g @ circuit._signs  # (batch, 2**n)
    lam = diag * final
    psi = final
    grad = np.zeros(circuit.n_params)
    for op in reversed(circuit.ops):
        a, t, p = circuit.params[op.param_offset : op.param_offset + 3]
        u = circuit._op_matrix(op)
        psi = _apply_batch(psi, u.conj().T, op.targets, n)
        derivs = u3_derivatives(a, t, p)
        for k, d in enumerate(derivs):
            if op.controlled:
                dm = np.zeros((4, 4), dtype=complex)
                dm[2:, 2:] = d  # the identity block is parameter-free
            else:
                dm = d
            dpsi = _apply_batch(psi, dm, op.targets, n)
            grad[op.param_offset + k] = 2.0 * np.real(np.sum(lam.conj() * dpsi))
        lam = _apply_batch(lam, u.conj().T, op.targets, n)
    return loss, grad


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bias-corrected Adam update; `step` is 1-based."""
    if not (params.shape == grads.shape == m.shape == v.shape):
        raise ValueError("shape mismatch")
    m = beta1 * m + (1 - beta1) * grads
    v = beta2 * v + (1 - beta2) * grads**2
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class QnnClassifier:
    """Trainable wrapper pairing a circuit with Adam state and the
    federated-model interface (get_params/set_params/train_epoch/evaluate)."""

    def __init__(self, n_qubits: int, depth: int, n_classes: int,
                 clip: float = float(np.pi), lr: float = 0.01, batch_size: int = 64,
                 init_scale: float = 0.1, seed: int = 0):
        if n_classes > n_qubits:
            raise ValueError("one-qubit-per-class readout: need n_classes <= n_qubits")
        rng = np.random.default_rng(seed)
        self.circuit = QnnCircuit(n_qubits, depth)
        self.circuit.params = rng.uniform(-init_scale, init_scale, self.circuit.n_params)
        self.n_classes = n_classes
        self.clip = clip
        self.lr = lr
        self.batch_size = batch_size
        self._m = np.zeros(self.circuit.n_params)
        self._v = np.zeros(self.circuit.n_params)
        self._step = 0

    def encode(self, dataset: Dataset) -> np.ndarray:
        return np.stack(
            [amplitude_encode(x, self.circuit.n_qubits) for x in dataset.features]
        )

    def train_epoch(self, dataset: Dataset, rng: np.random.Generator) -> float:
        if len(dataset) == 0:
            raise ValueError("cannot train on an empty dataset")
        states = self.encode(dataset)
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), self.batch_size):
            batch = order[start : start + self.batch_size]
            loss, grad = qnn_loss_and_grad(
                self.circuit, states[batch], dataset.labels[batch], self.n_classes
            )
            self._step += 1
            self.circuit.params, self._m, self._v = adam_step(
                self.circuit.params, grad, self._m, self._v, self._step, lr=self.lr
            )
            total += loss * len(batch)
        return total / len(order)

    def predict(self, dataset: Dataset) -> np.ndarray:
        states = self.circuit.run_batch(self.encode(dataset))
        z = self.circuit.expectations_batch(states)
        return np.argmax(softmax(z[:, : self.n_classes]), axis=1)

    def evaluate(self, dataset: Dataset) -> float:
        if len(dataset) == 0:
            raise ValueError("cannot evaluate on an empty dataset")
        return float(np.mean(self.predict(dataset) == dataset.labels))

    def get_params(self) -> ModelParams:
        return ModelParams(self.circuit.params.copy(), clip=self.clip,
                           layout=((self.circuit.n_params,),))

    def set_params(self, params: ModelParams) -> None:
        (values,) = params.arrays()
        if len(values) != self.circuit.n_params:
            raise ValueError("parameter layout mismatch")
        self.circuit.params = values.copy()
        # externally imposed parameters invalidate accumulated curvature
        self._m[:] = 0.0
        self._v[:] = 0.0
        self._step = 0

    def clone(self) -> "QnnClassifier":
        other = QnnClassifier(self.circuit.n_qubits, self.circuit.depth, self.n_classes,
                              clip=self.clip, lr=self.lr, batch_size=self.batch_size)
        other.set_params(self.get_params())
        return other
