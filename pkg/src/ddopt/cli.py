"""Command-line entry point: noise generation, scoring, baselines, search runs,
analysis tables, and replay of recorded best sequences.

Exit codes: 0 on success, 2 for usage errors, 3 for data or validation
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    baseline_report,
    convergence_plot,
    format_table,
    replay_best_sequences,
    subsequence_frequencies,
    write_baseline_csv,
    write_table_csv,
)
from .evolution import make_score_fn
from .noise import (
    NoiseFileError,
    PAULI_MATRICES,
    gate_generators,
    generate_noise,
    load_noise,
    random_involution_gates,
    save_noise,
)
from .optimizer import RunConfig, load_generation_logs, run
from .sequences import PAULI_LABELS, pauli_gate, read_sequences

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class DataError(Exception):
    """User-facing data/validation failure (exit code 3)."""


PRESETS = {
    "E1": dict(half_length=16, tau=0.002, data_size=10_000, keep_percent=10.0,
               n_initial=30, k_keep=5, epochs=100, alphabet="pauli"),
    "E2": dict(half_length=32, tau=0.004, data_size=10_000, keep_percent=10.0,
               n_initial=50, k_keep=5, epochs=100, alphabet="pauli"),
    "E3": dict(half_length=64, tau=0.004, data_size=20_000, keep_percent=10.0,
               n_initial=30, k_keep=5, epochs=200, alphabet="pauli"),
    "E4": dict(half_length=16, tau=0.002, data_size=10_000, keep_percent=10.0,
               n_initial=30, k_keep=5, epochs=100, alphabet="custom10"),
}

DESK_OVERRIDES = dict(data_size=1000, n_initial=6, k_keep=2, epochs=30,
                      eval_samples=100, max_generations=8, desk_scale=True)

# config files and manifests share one key=value format; every key is either
# a RunConfig field or one of these run-level extras
_EXTRA_KEYS = {
    "noise_dim_bath": int,
    "noise_seed": int,
    "noise_target_norm": float,
    "noise_coupling_min": float,
    "noise_coupling_max": float,
    "noise_bath_suppression": float,
    "out_dir": str,
    "preset": str,
}


def _config_types() -> dict:
    types = {}
    for f in dataclasses.fields(RunConfig):
        if f.name == "ngram_orders":
            types[f.name] = lambda s: tuple(int(x) for x in s.split(","))
        elif f.type in ("bool", bool):
            types[f.name] = lambda s: s.lower() in ("1", "true", "yes", "on")
        elif f.type in ("int", int):
            types[f.name] = int
        elif f.type in ("float", float):
            types[f.name] = float
        else:
            types[f.name] = str
    types.update(_EXTRA_KEYS)
    return types


def parse_config_file(path) -> dict:
    """key=value lines; '#' starts a comment; unknown keys are an error."""
    types = _config_types()
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in types:
            raise DataError(f"{path}:{lineno}: unknown configuration key {key!r}")
        try:
            out[key] = types[key](value.strip())
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def write_manifest(path, cfg: RunConfig, extras: dict) -> None:
    lines = [f"# ddopt run manifest", f"version={__version__}"]
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name == "ngram_orders":
            value = ",".join(str(x) for x in value)
        lines.append(f"{f.name}={value}")
    for key in sorted(extras):
        lines.append(f"{key}={extras[key]}")
    lines.append(f"created={time.strftime('%Y-%m-%dT%H:%M:%S')}")
    Path(path).write_text("\n".join(lines) + "\n")


def _load_noise_or_fail(path):
    try:
        return load_noise(path)
    except (OSError, NoiseFileError) as exc:
        raise DataError(str(exc)) from exc


def _generators_for(alphabet: str, tau: float, alphabet_seed: int):
    if alphabet == "pauli":
        return gate_generators(
            [PAULI_MATRICES[lbl] for lbl in PAULI_LABELS], tau, labels=list(PAULI_LABELS)
        )
    return gate_generators(random_involution_gates(10, alphabet_seed), tau)


# --- subcommands -----------------------------------------------------------


def cmd_gen_hamiltonian(args) -> int:
    noise = generate_noise(
        dim_b=args.dim_bath,
        seed=args.seed,
        coupling_range=(args.coupling_min, args.coupling_max),
        bath_suppression=args.bath_suppression,
        target_norm=args.target_norm,
    )
    save_noise(noise, args.out)
    print(f"wrote {args.out}: dim {noise.dim}, 2-norm {noise.norm2:.6g}, seed {noise.seed}")
    return EXIT_OK


def cmd_score(args) -> int:
    noise = _load_noise_or_fail(args.noise)
    try:
        sequences, mode = read_sequences(args.sequences)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    halves = []
    for seq in sequences:
        if seq.kind == "full":
            from .sequences import first_half

            halves.append(first_half(seq))
        else:
            halves.append(seq)
    generators = _generators_for(
        "pauli" if mode == "pauli" else "custom10", args.tau, args.alphabet_seed
    )
    score_fn = make_score_fn(noise, args.tau, generators=generators, threads=args.threads)
    scores = score_fn(halves)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("sequence,score\n")
        for seq, s in zip(sequences, scores):
            out.write(f"{seq.labels()},{s:.12g}\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_baselines(args) -> int:
    noise = _load_noise_or_fail(args.noise)
    try:
        report = baseline_report(
            noise,
            args.tau,
            args.length,
            families=args.families,
            random_samples=args.samples,
            random_seed=args.seed,
            threads=args.threads,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if args.out:
        write_baseline_csv(args.out, report)
        print(f"wrote {args.out}")
    else:
        print("sequences,avg_score,min_score")
        for row in report.rows:
            print(f"{row.label},{row.avg_score:.12g},{row.min_score:.12g}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    settings: dict = dict(PRESETS[args.preset])
    if args.desk_scale:
        settings.update(DESK_OVERRIDES)
    extras: dict = {"preset": args.preset}
    if args.config:
        file_settings = parse_config_file(args.config)
        for key, value in file_settings.items():
            if key in _EXTRA_KEYS:
                extras[key] = value
            else:
                settings[key] = value
    for key in ("seed", "max_generations", "epochs", "data_size", "threads"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    if args.no_reuse:
        settings["reuse_data"] = False
    if args.model:
        settings["model_kind"] = args.model
    try:
        cfg = RunConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad configuration: {exc}") from exc

    out_dir = Path(args.out or extras.get("out_dir") or f"run_{args.preset.lower()}")
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.noise:
        noise = _load_noise_or_fail(args.noise)
        extras["noise_file"] = str(args.noise)
    else:
        noise = generate_noise(
            dim_b=extras.get("noise_dim_bath", 16),
            seed=extras.get("noise_seed", 7),
            target_norm=extras.get("noise_target_norm", 20.4),
        )
        noise_path = out_dir / "noise.bin"
        save_noise(noise, noise_path)
        extras["noise_file"] = str(noise_path)
    extras["noise_norm2"] = f"{noise.norm2:.12g}"

    generators = _generators_for(cfg.alphabet, cfg.tau, cfg.alphabet_seed)
    score_fn = make_score_fn(noise, cfg.tau, generators=generators, threads=cfg.threads)
    write_manifest(out_dir / "manifest.txt", cfg, extras)

    initial_data = None
    if args.bootstrap_model:
        from .models import load_checkpoint
        from .optimizer import ModelCandidate, bootstrap_from_model

        model, adam = load_checkpoint(args.bootstrap_model)
        cand = ModelCandidate(0, "network", model,
                              np.random.default_rng(cfg.seed + 1), adam_state=adam)
        initial_data = bootstrap_from_model(cand, cfg, score_fn)
        print(f"bootstrap data: avg {initial_data.avg_score:.6g} "
              f"min {initial_data.min_score:.6g}", file=sys.stderr)

    def log(msg: str) -> None:
        print(msg, file=sys.stderr)

    result = run(cfg, score_fn, out_dir=out_dir, initial_data=initial_data, log=log)
    convergence_plot(result.logs, out_dir / "convergence.svg")
    final = result.logs[-1]
    print(f"run directory: {out_dir}")
    print(f"generations: {final.generation}  converged: {result.converged}")
    print(f"final avg score: {final.avg_score:.12g}")
    print(f"final min score: {final.min_score:.12g}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.convergence:
        logs = load_generation_logs(args.convergence)
        if not logs:
            raise DataError(f"no generation logs found in {args.convergence}")
        out = args.out_svg or str(Path(args.convergence) / "convergence.svg")
        convergence_plot(logs, out)
        print(f"wrote {out}")
        return EXIT_OK
    if not args.data:
        raise DataError("analyze needs a sequence file (or --convergence RUNDIR)")
    try:
        sequences, mode = read_sequences(args.data)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    if mode != "pauli":
        raise DataError("subsequence tables are defined for the Pauli alphabet")
    prefix = pauli_gate(args.prefix) if args.prefix else None
    try:
        table = subsequence_frequencies(sequences, args.subseq, prefix=prefix)
        other = None
        if args.compare:
            compare_seqs, _ = read_sequences(args.compare)
            other = subsequence_frequencies(compare_seqs, args.subseq, prefix=prefix)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    text = format_table(table, other)
    print(text, end="")
    print(f"total windows: {table.total_count}")
    if args.out_csv:
        write_table_csv(args.out_csv, table, other)
    if args.out_txt:
        Path(args.out_txt).write_text(text)
    return EXIT_OK


def cmd_replay(args) -> int:
    noise = _load_noise_or_fail(args.noise)
    which = None if args.which == "all" else args.which
    rows = replay_best_sequences(noise, which=which, tau=args.tau)
    lines = ["sequences,avg_score,min_score"]
    lines += [f"{r.label},{r.avg_score:.12g},{r.min_score:.12g}" for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddopt",
        description="Pulse-sequence workbench: simulate, score, and search.",
    )
    parser.add_argument("--version", action="version", version=f"ddopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-hamiltonian", help="generate and store a noise Hamiltonian")
    p.add_argument("--dim-bath", type=int, default=16)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--target-norm", type=float, default=20.4)
    p.add_argument("--coupling-min", type=float, default=1.0)
    p.add_argument("--coupling-max", type=float, default=3.0)
    p.add_argument("--bath-suppression", type=float, default=1000.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_hamiltonian)

    p = sub.add_parser("score", help="score a sequence file against a noise instance")
    p.add_argument("--noise", required=True)
    p.add_argument("--sequences", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--alphabet-seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("baselines", help="score the known DD families at a target length")
    p.add_argument("--noise", required=True)
    p.add_argument("--length", type=int, required=True, help="full sequence length")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--families", nargs="*", default=None)
    p.add_argument("--samples", type=int, default=1000, help="random reference draws")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("optimize", help="run the sequence search loop")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--desk-scale", action="store_true",
                   help="shrink sizes for a single-machine run; physics unchanged")
    p.add_argument("--no-reuse", action="store_true",
                   help="train each generation on freshly generated data only")
    p.add_argument("--model", choices=("network", "ngram"))
    p.add_argument("--config", help="key=value file overriding preset settings")
    p.add_argument("--noise", help="noise instance file (default: generate one)")
    p.add_argument("--out", help="run directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-generations", type=int, dest="max_generations")
    p.add_argument("--epochs", type=int)
    p.add_argument("--data-size", type=int, dest="data_size")
    p.add_argument("--threads", type=int)
    p.add_argument("--bootstrap-model", help="checkpoint that seeds the initial dataset")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("analyze", help="subsequence tables or convergence plots")
    p.add_argument("data", nargs="?", help="sequence file")
    p.add_argument("--subseq", type=int, choices=(2, 3), default=2)
    p.add_argument("--prefix", choices=("I", "X", "Y", "Z"),
                   help="first gate filter for length-3 tables")
    p.add_argument("--compare", help="second sequence file shown in parentheses")
    p.add_argument("--convergence", help="run directory; plot its generation logs")
    p.add_argument("--out-csv")
    p.add_argument("--out-txt")
    p.add_argument("--out-svg")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("replay", help="score the recorded best sequences")
    p.add_argument("--which", choices=("E1", "E2", "E3", "all"), default="all")
    p.add_argument("--noise", required=True)
    p.add_argument("--tau", type=float, help="override the per-experiment pulse width")
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
