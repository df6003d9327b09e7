"""Exact complex state-vector simulation of small qubit registers.

States are plain numpy arrays of complex128 amplitudes with length 2**n.
Qubit 0 is the most significant bit of the basis index, i.e. the basis
index of |q0 q1 ... q_{n-1}> is sum_i q_i * 2**(n-1-i).  With this
convention ``kron(a, b)`` puts register ``a`` on the leading qubits and
reshaping to ``[2] * n`` maps axis i to qubit i directly.

Gates are applied by amplitude-pair updates on the target axes; no
2**n x 2**n matrices are ever built.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 16
NORM_ATOL = 1e-10
UNITARY_ATOL = 1e-10
HERMITIAN_ATOL = 1e-10
PSD_EIG_FLOOR = -1e-9
GLOBAL_PHASE_ATOL = 1e-10

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def num_qubits(state: np.ndarray) -> int:
    """Number of qubits of a state vector; raises if the length is not a power of two."""
    n = int(np.log2(len(state)) + 0.5)
    if 2**n != len(state):
        raise ValueError(f"state length {len(state)} is not a power of two")
    return n


def check_state(state: np.ndarray) -> np.ndarray:
    """Validate a state vector (finite, power-of-two length, unit norm) and return it."""
    state = np.asarray(state, dtype=complex)
    n = num_qubits(state)
    if n > MAX_QUBITS:
        raise ValueError(f"register of {n} qubits exceeds the {MAX_QUBITS}-qubit limit")
    if not np.all(np.isfinite(state)):
        raise ValueError("state contains non-finite amplitudes")
    norm = np.sum(np.abs(state) ** 2)
    if abs(norm - 1.0) > NORM_ATOL:
        raise ValueError(f"state is not normalized: <psi|psi> = {norm}")
    return state


@dataclass(frozen=True)
class Gate:
    """A 1- or 2-qubit unitary, checked for unitarity at construction."""

    matrix: np.ndarray
    name: str = ""
    arity: int = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape == (2, 2):
            arity = 1
        elif m.shape == (4, 4):
            arity = 2
        else:
            raise ValueError(f"gate matrix must be 2x2 or 4x4, got {m.shape}")
        if not np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=UNITARY_ATOL):
            raise ValueError(f"gate {self.name or m} is not unitary")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "arity", arity)


X = Gate(np.array([[0, 1], [1, 0]]), "X")
Y = Gate(np.array([[0, -1j], [1j, 0]]), "Y")
Z = Gate(np.array([[1, 0], [0, -1]]), "Z")
H = Gate(np.array([[1, 1], [1, -1]]) * _INV_SQRT2, "H")
CNOT = Gate(np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]), "CNOT")


def rx(omega: float) -> Gate:
    c, s = np.cos(omega / 2), np.sin(omega / 2)
    return Gate(np.array([[c, -1j * s], [-1j * s, c]]), f"Rx({omega})")


def rz(theta: float) -> Gate:
    return Gate(np.diag([np.exp(-1j * theta / 2), np.exp(1j * theta / 2)]), f"Rz({theta})")


def phase(theta: float) -> Gate:
    """P(theta) = diag(1, e^{i theta}); equals Rz(theta) up to a global phase."""
    return Gate(np.diag([1.0, np.exp(1j * theta)]), f"P({theta})")


def u3(alpha: float, theta: float, phi: float) -> Gate:
    """Rotation I*cos(alpha) + i*(n.sigma)*sin(alpha) about the axis
    n = (sin(theta)cos(phi), sin(theta)sin(phi), cos(theta))."""
    return Gate(u3_matrix(alpha, theta, phi), f"u3({alpha},{theta},{phi})")


def u3_matrix(alpha: float, theta: float, phi: float) -> np.ndarray:
    nx = np.sin(theta) * np.cos(phi)
    ny = np.sin(theta) * np.sin(phi)
    nz = np.cos(theta)
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [c + 1j * s * nz, 1j * s * (nx - 1j * ny)],
            [1j * s * (nx + 1j * ny), c - 1j * s * nz],
        ]
    )


def controlled(gate: Gate) -> Gate:
    """Two-qubit gate applying `gate` to the second qubit when the first is |1>."""
    if gate.arity != 1:
        raise ValueError("can only control a 1-qubit gate")
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = gate.matrix
    return Gate(m, f"C-{gate.name}")


def cu3(alpha: float, theta: float, phi: float) -> Gate:
    return controlled(u3(alpha, theta, phi))


_KET_CHARS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) * _INV_SQRT2,
    "-": np.array([1, -1], dtype=complex) * _INV_SQRT2,
}


def ket(label: str) -> np.ndarray:
    """Build a product state from a label like '01+-'."""
    state = np.array([1.0 + 0j])
    for ch in label:
        if ch not in _KET_CHARS:
            raise ValueError(f"unknown ket symbol {ch!r}")
        state = np.kron(state, _KET_CHARS[ch])
    return state


def basis_state(index: int, n: int) -> np.ndarray:
    state = np.zeros(2**n, dtype=complex)
    state[index] = 1.0
    return state


def apply_matrix(state: np.ndarray, matrix: np.ndarray, targets: tuple[int, ...]) -> np.ndarray:
    """Apply an arbitrary (possibly non-unitary) 2x2 or 4x4 matrix to target qubits.

    Internal engine shared with the adjoint differentiation in the QNN
    module, which needs non-unitary gate derivatives.
    """
    n = num_qubits(state)
    k = len(targets)
    t = state.reshape([2] * n)
    if k == 1:
        out = np.tensordot(matrix, t, axes=([1], [targets[0]]))
        out = np.moveaxis(out, 0, targets[0])
    elif k == 2:
        q0, q1 = targets
        t = np.moveaxis(t, (q0, q1), (0, 1)).reshape(4, -1)
        out = (matrix @ t).reshape([2, 2] + [2] * (n - 2))
        out = np.moveaxis(out, (0, 1), (q0, q1))
    else:
        raise ValueError("only 1- and 2-qubit operations are supported")
    return np.ascontiguousarray(out).reshape(-1)


def apply_gate(state: np.ndarray, gate: Gate, targets) -> np.ndarray:
    """Apply a unitary gate to the given target qubit(s) of a state vector."""
    if isinstance(targets, (int, np.integer)):
        targets = (int(targets),)
    targets = tuple(int(t) for t in targets)
    n = num_qubits(state)
    if len(targets) != gate.arity:
        raise ValueError(f"gate {gate.name} has arity {gate.arity}, got {len(targets)} targets")
    if len(set(targets)) != len(targets):
        raise ValueError("target qubits must be distinct")
    for t in targets:
        if not (0 <= t < n):
            raise IndexError(f"qubit index {t} out of range for {n}-qubit state")
    return apply_matrix(state, gate.matrix, targets)


def probability_zero(state: np.ndarray, target: int) -> float:
    """P(measuring `target` yields 0)."""
    n = num_qubits(state)
    if not (0 <= target < n):
        raise IndexError(f"qubit index {target} out of range for {n}-qubit state")
    t = state.reshape([2] * n)
    sub = np.take(t, 0, axis=target)
    return float(np.sum(np.abs(sub) ** 2))


def measure_qubit(state: np.ndarray, target: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Projectively measure one qubit in the computational basis.

    Returns the outcome bit and the renormalized collapsed state.
    """
    p0 = probability_zero(state, target)
    bit = 0 if rng.random() < p0 else 1
    n = num_qubits(state)
    t = state.reshape([2] * n).copy()
    idx = [slice(None)] * n
    idx[target] = 1 - bit
    t[tuple(idx)] = 0.0
    prob = p0 if bit == 0 else 1.0 - p0
    t /= np.sqrt(prob)
    return bit, t.reshape(-1)


def measure_in_basis(
    state: np.ndarray, target: int, basis: str, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Measure in the computational or diagonal basis.

    Diagonal-basis outcome 0 corresponds to |+>, outcome 1 to |->; the
    collapsed state keeps the measured qubit in the matching eigenstate.
    """
    if basis == "computational":
        return measure_qubit(state, target, rng)
    if basis == "diagonal":
        rotated = apply_gate(state, H, target)
        bit, collapsed = measure_qubit(rotated, target, rng)
        return bit, apply_gate(collapsed, H, target)
    raise ValueError(f"unknown basis {basis!r}")


def partial_trace(state: np.ndarray, keep: int) -> np.ndarray:
    """2x2 reduced density matrix of one qubit of a pure state."""
    n = num_qubits(state)
    if not (0 <= keep < n):
        raise IndexError(f"qubit index {keep} out of range for {n}-qubit state")
    m = np.moveaxis(state.reshape([2] * n), keep, 0).reshape(2, -1)
    return m @ m.conj().T


def kron(state_a: np.ndarray, state_b: np.ndarray) -> np.ndarray:
    """Product state with `state_a` on the leading qubits."""
    out = np.kron(np.asarray(state_a, dtype=complex), np.asarray(state_b, dtype=complex))
    if len(out) > 2**MAX_QUBITS:
        raise ValueError("product state exceeds the register size limit")
    return out


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 — global-phase-insensitive state comparison."""
    return float(np.abs(np.vdot(a, b)) ** 2)


def states_equal(a: np.ndarray, b: np.ndarray, atol: float = GLOBAL_PHASE_ATOL) -> bool:
    """True if the states are equal up to a global phase."""
    return fidelity(a, b) >= 1.0 - atol


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def check_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Validate Hermiticity, unit trace and positive semidefiniteness."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(rho, rho.conj().T, atol=HERMITIAN_ATOL):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > HERMITIAN_ATOL:
        raise ValueError("density matrix trace is not 1")
    eigs = np.linalg.eigvalsh(rho)
    if np.min(eigs) < PSD_EIG_FLOOR:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho
