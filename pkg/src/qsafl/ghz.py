"""GHZ-based secure-sum arithmetic: preparation, phase encoding, decoding,
repetition measurement model, sum estimation and the channel timing model.

A session encodes one scalar per participant as a phase theta_i in
[0, pi/N] on a shared N-qubit GHZ state; the decoded first qubit reads 0
with probability (1 + cos(sum theta)) / 2, and repeating the round M
times and inverting the frequency recovers the sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import statevec as sv

THETA_BOUND_ATOL = 1e-12


@dataclass
class TimingModel:
    """Per-gate and per-network-hop time costs of the quantum channel."""

    t_gate: float = 22e-6
    t_net: float = 1e-3

    def __post_init__(self):
        if self.t_gate <= 0 or self.t_net <= 0:
            raise ValueError("timing constants must be positive")


@dataclass
class GhzSession:
    """One aggregation round: N participants, their angles, and the tally."""

    n_participants: int
    thetas: np.ndarray
    repetitions: int
    tally_zero: int | None = None

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        n = self.n_participants
        if n < 2:
            raise ValueError("a session needs at least 2 participants")
        if len(self.thetas) != n:
            raise ValueError(f"expected {n} angles, got {len(self.thetas)}")
        bound = np.pi / n + THETA_BOUND_ATOL
        if np.any(self.thetas < -THETA_BOUND_ATOL) or np.any(self.thetas > bound):
            raise ValueError(f"angles must lie in [0, pi/{n}]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.tally_zero is not None and not (0 <= self.tally_zero <= self.repetitions):
            raise ValueError("tally_zero must lie in [0, repetitions]")

    def run(self, rng: np.random.Generator, backend: str = "fast") -> int:
        self.tally_zero = run_session(self.thetas, self.repetitions, rng, backend=backend)
        return self.tally_zero

    def estimate(self) -> float:
        if self.tally_zero is None:
            raise ValueError("session has not been run")
        return estimate_sum(self.tally_zero, self.repetitions)


def ghz_prepare(n: int) -> np.ndarray:
    """N-qubit GHZ state (|0...0> + |1...1>) / sqrt(2)."""
    if not (2 <= n <= sv.MAX_QUBITS):
        raise ValueError(f"GHZ register size must be in [2, {sv.MAX_QUBITS}], got {n}")
    state = np.zeros(2**n, dtype=complex)
    state[0] = state[-1] = 1.0 / np.sqrt(2.0)
    return state


def encode_phase(state: np.ndarray, qubit: int, theta: float) -> np.ndarray:
    """Multiply the |1...1> branch's relative phase by e^{i theta}.

    Implemented with the phase gate diag(1, e^{i theta}), which differs
    from Rz(theta) only by an unobservable global phase.
    """
    return sv.apply_gate(state, sv.phase(theta), qubit)


def decode_circuit(state: np.ndarray) -> np.ndarray:
    """CNOT ladder plus Hadamard that folds the encoded phase onto qubit 0.

    After decoding, the |0...0> amplitude is (1 + e^{i sum})/2 and the
    |10...0> amplitude is (1 - e^{i sum})/2; all other qubits are
    disentangled.
    """
    n = sv.num_qubits(state)
    for control in range(n - 2, -1, -1):
        state = sv.apply_gate(state, sv.CNOT, (control, control + 1))
    return sv.apply_gate(state, sv.H, 0)


def zero_probability_exact(thetas) -> float:
    """P(first decoded qubit = 0) computed through the full state-vector pipeline."""
    thetas = np.asarray(thetas, dtype=float)
    state = ghz_prepare(len(thetas))
    for i, theta in enumerate(thetas):
        state = encode_phase(state, i, theta)
    return sv.probability_zero(decode_circuit(state), 0)


def zero_probability(thetas) -> float:
    """Analytic P(first decoded qubit = 0) = (1 + cos(sum theta)) / 2."""
    return (1.0 + np.cos(float(np.sum(thetas)))) / 2.0


def sample_round_fast(thetas, rng: np.random.Generator) -> int:
    """One Bernoulli draw equivalent to a full prepare/encode/decode/measure round."""
    return 0 if rng.random() < zero_probability(thetas) else 1


def run_session(thetas, repetitions: int, rng: np.random.Generator, backend: str = "fast") -> int:
    """Count of zero outcomes over `repetitions` rounds.

    The fast backend draws from the exact Bernoulli law; the exact
    backend replays the full state-vector pipeline every round and is
    meant for validation at small N.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if backend == "fast":
        return int(rng.binomial(repetitions, zero_probability(thetas)))
    if backend == "exact":
        thetas = np.asarray(thetas, dtype=float)
        base = ghz_prepare(len(thetas))
        for i, theta in enumerate(thetas):
            base = encode_phase(base, i, theta)
        tally = 0
        for _ in range(repetitions):
            bit, _ = sv.measure_qubit(decode_circuit(base), 0, rng)
            tally += bit == 0
        return tally
    raise ValueError(f"unknown backend {backend!r}")


def estimate_sum(tally_zero: int, repetitions: int) -> float:
    """Invert the measured zero frequency back to sum(theta) in [0, pi]."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not (0 <= tally_zero <= repetitions):
        raise ValueError("tally_zero must lie in [0, repetitions]")
    # 2 f0 - 1 can overshoot [-1, 1] at small M; clamp before arccos.
    return float(np.arccos(np.clip(2.0 * tally_zero / repetitions - 1.0, -1.0, 1.0)))


def variance_of_frequency(p: float, repetitions: int) -> float:
    """Variance of the zero frequency f0 = Binomial(M, p)/M, i.e. p(1-p)/M."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must be a probability")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    return p * (1.0 - p) / repetitions


def required_repetitions(target_variance: float) -> int:
    """Smallest M whose worst-case (p = 1/2) frequency variance is <= target."""
    if target_variance <= 0:
        raise ValueError("target variance must be positive")
    return max(1, int(np.ceil(0.25 / target_variance)))


def timing_estimate(n_participants: int, repetitions: int, model: TimingModel | None = None) -> float:
    """Round-trip wall time 2 (N M t_gate + t_net) in seconds."""
    if n_participants <= 0 or repetitions < 0:
        raise ValueError("participant count must be positive, repetitions non-negative")
    model = model or TimingModel()
    return 2.0 * (n_participants * repetitions * model.t_gate + model.t_net)
