"""Federated-learning protocol state machines with per-parameter GHZ
aggregation: centralized (coordinating server) and decentralized
(round-robin designated aggregator) variants.

Normalization maps each parameter from [-c, c] affinely into
[0, pi/N] so the recovered arccos sum stays on its principal branch;
the aggregate mean is the exact inverse when nothing was clipped.
Raw local parameters and per-participant angles never appear on the
classical transcript.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import channel, ghz
from .datasets import Dataset
from .models import ModelParams

AGGREGATION_BACKENDS = ("fast", "exact", "noiseless")


class EavesdropAbort(RuntimeError):
    """Raised when channel checks keep failing past the retry limit."""


@dataclass
class FederationConfig:
    architecture: str = "centralized"
    n_participants: int = 3
    rounds: int = 1
    repetitions: int = 251
    clip: float = 1.0
    decoy_count: int = 8
    adversary: channel.Adversary = field(default_factory=channel.Adversary)
    weighting: str = "uniform"
    local_epochs: int = 1
    backend: str = "fast"
    seed: int = 0
    max_round_retries: int = 3
    use_teleport: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.architecture not in ("centralized", "decentralized"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.n_participants < 2:
            raise ValueError("need at least 2 participants")
        if self.rounds < 1 or self.repetitions < 1:
            raise ValueError("rounds and repetitions must be >= 1")
        if self.weighting not in ("uniform", "size_weighted"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.backend not in AGGREGATION_BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass
class RoundRecord:
    round_index: int
    aggregator_id: int | None
    local_accuracies: list[float]
    global_accuracy: float
    best_so_far: float
    retries: int = 0
    aborted: bool = False


class Transcript:
    """Recorder for everything visible on classical channels.

    The privacy tests grep this log: it must carry decoy bookkeeping
    and aggregate results only, never a participant's raw parameters
    or angles.
    """

    def __init__(self):
        self.messages: list[tuple[str, str, str, object]] = []

    def log(self, sender: str, receiver: str, kind: str, payload) -> None:
        self.messages.append((sender, receiver, kind, payload))

    def dump(self) -> str:
        return "\n".join(
            f"{s} -> {r} [{kind}]: {payload!r}" for s, r, kind, payload in self.messages
        )


def normalize_param(w, clip: float, n_participants: int):
    """Affine map [-c, c] -> [0, pi/N]; out-of-range values are clipped."""
    if clip <= 0:
        raise ValueError("clip bound must be positive")
    w = np.clip(np.asarray(w, dtype=float), -clip, clip)
    return (w + clip) / (2.0 * clip) * (np.pi / n_participants)


def denormalize_mean(angle_sum, clip: float, n_participants: int):
    """Mean parameter recovered from the estimated angle sum in [0, pi]."""
    s = np.asarray(angle_sum, dtype=float)
    if np.any(s < -1e-12) or np.any(s > np.pi + 1e-12):
        raise ValueError("angle sum must lie in [0, pi]")
    return s * (2.0 * clip) / np.pi - clip


def aggregate_noise_std(clip: float, repetitions: int) -> float:
    """First-order std of one aggregated parameter.

    The frequency noise sqrt(p(1-p)/M) propagated through arccos and
    the denormalization cancels the p-dependence: sigma = 2c/(pi sqrt(M)).
    """
    return 2.0 * clip / (np.pi * np.sqrt(repetitions))


def _session_frequency(p: float, repetitions: int, backend: str, thetas, rng) -> float:
    if backend == "noiseless":
        return p
    if backend == "fast":
        return rng.binomial(repetitions, p) / repetitions
    return ghz.run_session(thetas, repetitions, rng, backend="exact") / repetitions


def aggregate_params(
    local_params: list[ModelParams],
    repetitions: int,
    backend: str = "fast",
    seed: int = 0,
    round_index: int = 0,
    weights=None,
    threads: int = 1,
) -> ModelParams:
    """Aggregate per-parameter GHZ sessions into the (possibly weighted) mean.

    Every scalar index runs its own N-participant session with an RNG
    stream derived from (seed, round, parameter index), so results are
    bit-identical regardless of thread count.
    """
    if backend not in AGGREGATION_BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if not local_params:
        raise ValueError("no local models to aggregate")
    first = local_params[0]
    for p in local_params[1:]:
        if p.layout != first.layout:
            raise ValueError("layout mismatch between participants")
        if p.clip != first.clip:
            raise ValueError("clip bound mismatch between participants")

    n = len(local_params)
    values = np.stack([p.values for p in local_params])  # (N, P)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        values = n * weights[:, None] * values

    thetas = normalize_param(values, first.clip, n)  # (N, P)
    probs = (1.0 + np.cos(thetas.sum(axis=0))) / 2.0
    n_params = values.shape[1]

    def run_chunk(indices):
        out = np.empty(len(indices))
        for pos, j in enumerate(indices):
            rng = np.random.default_rng([seed, round_index, int(j)])
            out[pos] = _session_frequency(
                probs[j], repetitions, backend, thetas[:, j], rng
            )
        return out

    freqs = np.empty(n_params)
    chunks = np.array_split(np.arange(n_params), max(1, threads))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for chunk, result in zip(chunks, pool.map(run_chunk, chunks)):
                freqs[chunk] = result
    else:
        for chunk in chunks:
            freqs[chunk] = run_chunk(chunk)

    sums = np.arccos(np.clip(2.0 * freqs - 1.0, -1.0, 1.0))
    return ModelParams(denormalize_mean(sums, first.clip, n), clip=first.clip,
                       layout=first.layout)


def _channel_checks(
    config: FederationConfig,
    round_index: int,
    attempt: int,
    transcript: Transcript,
    aggregator: str,
) -> bool:
    """Run one decoy-checked GHZ distribution; True if any wire flags eavesdropping.

    One GHZ register per check round stands in for the per-parameter
    transmissions (the decoy statistics per wire use are identical).
    """
    n = config.n_participants
    register = ghz.ghz_prepare(n)
    detected = False
    for i in range(n):
        rng = np.random.default_rng([config.seed, 2, round_index, attempt, i])
        register, plan, results = channel.send_with_decoys(
            register, [i], config.decoy_count, config.adversary, rng
        )
        transcript.log(aggregator, f"participant_{i}", "decoy_plan",
                       {"positions": plan.positions,
                        "bases": [plan.basis(k) for k in range(plan.count)]})
        transcript.log(f"participant_{i}", aggregator, "decoy_results", list(results))
        verdict = channel.verify_decoys(plan, results)
        if verdict.eavesdrop_detected:
            detected = True
    return detected


def _secure_round(config, round_index, transcript, aggregator) -> int:
    """Channel checks with retries; returns the number of retries used."""
    for attempt in range(config.max_round_retries + 1):
        if not _channel_checks(config, round_index, attempt, transcript, aggregator):
            return attempt
        transcript.log(aggregator, "all", "abort_and_retry",
                       {"round": round_index, "attempt": attempt})
    raise EavesdropAbort(
        f"round {round_index}: eavesdropping detected on "
        f"{config.max_round_retries + 1} consecutive attempts"
    )


def _weights(config: FederationConfig, shards: list[Dataset]):
    if config.weighting == "size_weighted":
        return np.array([len(s) for s in shards], dtype=float)
    return None


def run_centralized(
    config: FederationConfig,
    models: list,
    shards: list[Dataset],
    test_set: Dataset,
) -> tuple[list[RoundRecord], Transcript]:
    """Server-coordinated federation: train, aggregate, broadcast each round."""
    n = config.n_participants
    if not (len(models) == len(shards) == n):
        raise ValueError("need one model and one shard per participant")
    transcript = Transcript()
    records: list[RoundRecord] = []
    best = 0.0
    for r in range(config.rounds):
        for i, model in enumerate(models):
            rng = np.random.default_rng([config.seed, 1, r, i])
            for _ in range(config.local_epochs):
                model.train_epoch(shards[i], rng)
        local_acc = [m.evaluate(test_set) for m in models]

        retries = _secure_round(config, r, transcript, "server")
        global_params = aggregate_params(
            [m.get_params() for m in models],
            config.repetitions,
            backend=config.backend,
            seed=config.seed,
            round_index=r,
            weights=_weights(config, shards),
            threads=config.threads,
        )
        for model in models:
            model.set_params(global_params)
        transcript.log("server", "all", "broadcast_global",
                       {"round": r, "values": global_params.values.tolist()})

        global_acc = models[0].evaluate(test_set)
        best = max(best, global_acc)
        records.append(RoundRecord(r, None, local_acc, global_acc, best, retries))
    return records, transcript


def run_decentralized(
    config: FederationConfig,
    models: list,
    shards: list[Dataset],
    test_set: Dataset,
) -> tuple[list[RoundRecord], Transcript]:
    """Serverless federation: participant (round mod N) acts as aggregator,
    adopts the aggregate, and keeps training from it; the others only
    continue their local optimization."""
    n = config.n_participants
    if not (len(models) == len(shards) == n):
        raise ValueError("need one model and one shard per participant")
    transcript = Transcript()
    records: list[RoundRecord] = []
    best = 0.0
    for r in range(config.rounds):
        for i, model in enumerate(models):
            rng = np.random.default_rng([config.seed, 1, r, i])
            for _ in range(config.local_epochs):
                model.train_epoch(shards[i], rng)
        local_acc = [m.evaluate(test_set) for m in models]

        designee = r % n
        retries = _secure_round(config, r, transcript, f"participant_{designee}")
        global_params = aggregate_params(
            [m.get_params() for m in models],
            config.repetitions,
            backend=config.backend,
            seed=config.seed,
            round_index=r,
            weights=_weights(config, shards),
            threads=config.threads,
        )
        models[designee].set_params(global_params)

        global_acc = models[designee].evaluate(test_set)
        best = max(best, global_acc)
        records.append(RoundRecord(r, designee, local_acc, global_acc, best, retries))
    return records, transcript


def run_federation(config: FederationConfig, models, shards, test_set):
    runner = run_centralized if config.architecture == "centralized" else run_decentralized
    return runner(config, models, shards, test_set)
