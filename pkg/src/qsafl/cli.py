"""Experiment runner: the protocol's measurable claims as reproducible
commands with seeds and plot-ready CSV outputs.

Subcommands: aggregate, variance-sweep, attack-sim, fl-run,
teleport-check, verify-ghz.  Exit codes: 0 success, 2 config error,
3 eavesdrop-abort, 4 I/O error.  Floats in CSVs carry 9 significant
digits; every CSV starts with a `# schema=...` comment line.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import channel, datasets, federation, ghz, models, qnn, statevec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EAVESDROP = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


def _write_csv(path: Path, schema: str, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


# --- subcommands -------------------------------------------------------------


def cmd_aggregate(args) -> int:
    thetas = np.array(_parse_floats(args.thetas))
    n = len(thetas)
    session = ghz.GhzSession(n, thetas, args.repetitions)  # validates angle range
    rng = np.random.default_rng(args.seed)
    session.run(rng, backend=args.backend)
    estimate = session.estimate()
    true_sum = float(thetas.sum())
    timing = ghz.timing_estimate(n, args.repetitions)
    print(f"participants      {n}")
    print(f"repetitions       {args.repetitions}")
    print(f"tally_zero        {session.tally_zero}")
    print(f"estimate          {_fmt(estimate)}")
    print(f"true_sum          {_fmt(true_sum)}")
    print(f"abs_error         {_fmt(abs(estimate - true_sum))}")
    print(f"timing_seconds    {_fmt(timing)}")
    return EXIT_OK


def cmd_variance_sweep(args) -> int:
    rows = []
    for m in _parse_ints(args.m_values):
        rng = np.random.default_rng([args.seed, m])
        freqs = rng.binomial(m, 0.5, size=args.trials) / m
        rows.append((m, float(np.var(freqs)), ghz.variance_of_frequency(0.5, m)))
    out = Path(args.out_dir) / "variance_sweep.csv"
    _write_csv(out, "qsafl.variance_sweep.v1", ["M", "empirical_var", "analytic_var"], rows)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_attack_sim(args) -> int:
    adversary = channel.Adversary(args.adversary, args.tap_probability)
    rows = []
    for d in _parse_ints(args.d_values):
        rng = np.random.default_rng([args.seed, d])
        detections = 0
        for _ in range(args.trials):
            register = ghz.ghz_prepare(2)
            _, verdict = channel.transmit_checked(register, [0], d, adversary, rng)
            detections += verdict.eavesdrop_detected
        analytic = 1.0 - 0.75**d if args.adversary == "measure_resend" else float("nan")
        rows.append((d, detections / args.trials, analytic))
    out = Path(args.out_dir) / "attack_sim.csv"
    _write_csv(out, "qsafl.attack_sim.v1", ["d", "detection_rate", "analytic_rate"], rows)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_teleport_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 1.0
    for _ in range(args.trials):
        amps = rng.normal(size=2) + 1j * rng.normal(size=2)
        state = amps / np.linalg.norm(amps)
        received, _ = channel.teleport(state, rng)
        fid = float(np.abs(np.vdot(state, received)) ** 2)
        worst = min(worst, fid)
    print(f"trials            {args.trials}")
    print(f"min_fidelity      {_fmt(worst)}")
    return EXIT_OK if worst >= 1.0 - 1e-12 else 1


def cmd_verify_ghz(args) -> int:
    rng = np.random.default_rng(args.seed)
    n = args.n
    sources = {
        "ghz": lambda: ghz.ghz_prepare(n),
        "zeros": lambda: statevec.ket("0" * n),
        "plus": lambda: statevec.ket("+" * n),
    }
    accepted = channel.verify_ghz_source(n, args.trials, sources[args.source], rng)
    print(f"source            {args.source}")
    print(f"trials            {args.trials}")
    print(f"accepted          {accepted}")
    return EXIT_OK


_CONFIG_SCHEMA = {
    "architecture": str,
    "n_participants": int,
    "rounds": int,
    "repetitions": int,
    "clip": (int, float),
    "decoy_count": int,
    "adversary": dict,
    "weighting": str,
    "local_epochs": int,
    "backend": str,
    "seed": int,
    "model": str,
    "qnn": dict,
    "lr": dict,
    "dataset": dict,
}
_ADVERSARY_SCHEMA = {"kind": str, "tap_probability": (int, float)}
_QNN_SCHEMA = {"n_qubits": int, "depth": int, "batch_size": int, "learning_rate": (int, float)}
_LR_SCHEMA = {"learning_rate": (int, float), "batch_size": int}
_DATASET_SCHEMA = {
    "source": str,
    "n_classes": int,
    "train_size": int,
    "test_size": int,
    "dims": int,
    "n_per_class": int,
    "separation": (int, float),
    "images": str,
    "labels": str,
    "partition": dict,
}
_PARTITION_SCHEMA = {"mode": str, "fractions": list, "ratios": list, "label_map": list,
                     "stratified": bool}


def _check_keys(obj: dict, schema: dict, where: str) -> None:
    for key, value in obj.items():
        if key not in schema:
            raise ConfigError(f"unknown key {where}{key!r}")
        if not isinstance(value, schema[key]):
            raise ConfigError(f"bad type for {where}{key!r}")


def load_run_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    _check_keys(cfg, _CONFIG_SCHEMA, "")
    _check_keys(cfg.get("adversary", {}), _ADVERSARY_SCHEMA, "adversary.")
    _check_keys(cfg.get("qnn", {}), _QNN_SCHEMA, "qnn.")
    _check_keys(cfg.get("lr", {}), _LR_SCHEMA, "lr.")
    _check_keys(cfg.get("dataset", {}), _DATASET_SCHEMA, "dataset.")
    _check_keys(cfg.get("dataset", {}).get("partition", {}), _PARTITION_SCHEMA,
                "dataset.partition.")
    return cfg


def _build_dataset(cfg: dict, seed: int) -> tuple[datasets.Dataset, datasets.Dataset]:
    """Returns (train, test)."""
    ds_cfg = cfg.get("dataset", {})
    source = ds_cfg.get("source", "digits")
    rng = np.random.default_rng([seed, 99])
    if source == "digits":
        full = datasets.load_digits_8x8(ds_cfg.get("n_classes", 10))
    elif source == "synth":
        full = datasets.synth_blobs(
            ds_cfg.get("n_classes", 3),
            ds_cfg.get("n_per_class", 120),
            ds_cfg.get("dims", 16),
            ds_cfg.get("separation", 8.0),
            seed,
        )
    elif source == "idx":
        full = datasets.load_idx(ds_cfg["images"], ds_cfg.get("labels"),
                                 n_classes=ds_cfg.get("n_classes", 0))
    else:
        raise ConfigError(f"unknown dataset source {source!r}")
    order = rng.permutation(len(full))
    train_size = ds_cfg.get("train_size", int(0.8 * len(full)))
    test_size = ds_cfg.get("test_size", len(full) - train_size)
    if train_size + test_size > len(full):
        raise ConfigError("train_size + test_size exceeds the dataset")
    return (full.subset(order[:train_size]),
            full.subset(order[train_size : train_size + test_size]))


def _build_models(cfg: dict, train: datasets.Dataset, n: int, clip: float) -> list:
    kind = cfg.get("model", "lr")
    if kind == "lr":
        lr_cfg = cfg.get("lr", {})
        return [
            models.MultiLR(train.dims, train.n_classes, clip=clip,
                           lr_rate=lr_cfg.get("learning_rate", 0.1),
                           batch_size=lr_cfg.get("batch_size", 32))
            for _ in range(n)
        ]
    if kind == "qnn":
        q = cfg.get("qnn", {})
        n_qubits = q.get("n_qubits", 4)
        depth = q.get("depth", 2)
        if 2**n_qubits < train.dims:
            raise ConfigError(f"{train.dims} features need more than {n_qubits} qubits")
        return [
            qnn.QnnClassifier(n_qubits, depth, train.n_classes, clip=clip,
                              lr=q.get("learning_rate", 0.01),
                              batch_size=q.get("batch_size", 64),
                              seed=cfg.get("seed", 0))
            for _ in range(n)
        ]
    raise ConfigError(f"unknown model kind {kind!r}")


def _build_partition_spec(cfg: dict, n: int) -> datasets.PartitionSpec:
    p = cfg.get("dataset", {}).get("partition")
    if p is None:
        return datasets.PartitionSpec("fraction_split", fractions=[1.0 / n] * n)
    return datasets.PartitionSpec(
        p["mode"],
        fractions=p.get("fractions"),
        ratios=p.get("ratios"),
        label_map=p.get("label_map"),
        stratified=p.get("stratified", True),
    )


def cmd_fl_run(args) -> int:
    cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    adv_cfg = cfg.get("adversary", {})
    try:
        fed_config = federation.FederationConfig(
            architecture=cfg.get("architecture", "centralized"),
            n_participants=cfg.get("n_participants", 3),
            rounds=cfg.get("rounds", 10),
            repetitions=cfg.get("repetitions", 251),
            clip=cfg.get("clip", 1.0),
            decoy_count=cfg.get("decoy_count", 8),
            adversary=channel.Adversary(adv_cfg.get("kind", "none"),
                                        adv_cfg.get("tap_probability", 1.0)),
            weighting=cfg.get("weighting", "uniform"),
            local_epochs=cfg.get("local_epochs", 1),
            backend=cfg.get("backend", "fast"),
            seed=seed,
            threads=args.threads,
        )
        train, test = _build_dataset(cfg, seed)
        spec = _build_partition_spec(cfg, fed_config.n_participants)
        shards = datasets.partition(train, spec, np.random.default_rng([seed, 98]))
        model_list = _build_models(cfg, train, fed_config.n_participants, fed_config.clip)
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        records, _ = federation.run_federation(fed_config, model_list, shards, test)
    except federation.EavesdropAbort as exc:
        print(f"eavesdrop abort: {exc}", file=sys.stderr)
        return EXIT_EAVESDROP

    out_dir = Path(args.out_dir)
    rows = []
    for rec in records:
        for i, acc in enumerate(rec.local_accuracies):
            rows.append((rec.round_index, i, acc, rec.global_accuracy,
                         rec.best_so_far, int(rec.aborted)))
    _write_csv(out_dir / "rounds.csv", "qsafl.fl_run.v1",
               ["round", "participant", "local_acc", "global_acc", "best_so_far", "aborted"],
               rows)
    models.save_checkpoint(out_dir / "global_final.qflc", model_list[0].get_params())
    print(f"wrote {out_dir / 'rounds.csv'}")
    print(f"final global accuracy {_fmt(records[-1].global_accuracy)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsafl",
                                     description="GHZ secure-aggregation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_dir=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        if out_dir:
            p.add_argument("--out-dir", default="out")

    p = sub.add_parser("aggregate", help="run one secure-sum session")
    p.add_argument("--thetas", required=True, help="comma-separated angles in [0, pi/N]")
    p.add_argument("--repetitions", type=int, default=251)
    p.add_argument("--backend", choices=("exact", "fast"), default="fast")
    common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("variance-sweep", help="frequency variance vs repetitions")
    p.add_argument("--m-values", default="1,10,50,100,251,500,1000")
    p.add_argument("--trials", type=int, default=10000)
    common(p, out_dir=True)
    p.set_defaults(func=cmd_variance_sweep)

    p = sub.add_parser("attack-sim", help="decoy detection rate vs decoy count")
    p.add_argument("--adversary", choices=channel.ADVERSARY_KINDS[1:],
                   default="measure_resend")
    p.add_argument("--tap-probability", type=float, default=1.0)
    p.add_argument("--d-values", default="1,5,10,20")
    p.add_argument("--trials", type=int, default=10000)
    common(p, out_dir=True)
    p.set_defaults(func=cmd_attack_sim)

    p = sub.add_parser("fl-run", help="full federated-learning run from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_fl_run)

    p = sub.add_parser("teleport-check", help="teleportation fidelity over random states")
    p.add_argument("--trials", type=int, default=1000)
    common(p)
    p.set_defaults(func=cmd_teleport_check)

    p = sub.add_parser("verify-ghz", help="cooperative GHZ source verification")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--source", choices=("ghz", "zeros", "plus"), default="ghz")
    common(p)
    p.set_defaults(func=cmd_verify_ghz)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except federation.EavesdropAbort as exc:
        print(f"eavesdrop abort: {exc}", file=sys.stderr)
        return EXIT_EAVESDROP
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
