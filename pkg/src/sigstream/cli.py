"""Command-line surface: signatures, verification, data, training, eval,
benchmarks.

Exit codes: 0 success, 1 verification/training failure, 2 usage or config
error, 3 I/O error. Every artifact-writing command emits a
`<artifact>.manifest.json` with the resolved config, seed, toolkit
version, and sha256 digests of inputs and outputs; re-running a command
with the same arguments reproduces byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import (
    __version__,
    algebra,
    bench,
    data,
    maze,
    model as model_mod,
    profiles,
    rollout,
    signature,
    tokens,
    verify,
)
from .errors import (
    ConfigError,
    DataFormatError,
    GenerationError,
    ResourceLimitError,
    ShapeMismatchError,
    SigstreamError,
    ValidationError,
)

OUTPUT_DIR_ENV = "SIGSTREAM_OUTPUT_DIR"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _out_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, ".")


def _default_out(name: str) -> str:
    return os.path.join(_out_dir(), name)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(artifact_path: str, command: str, config: dict, seed, inputs: list[str], outputs: list[str]) -> str:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": {p: _sha256(p) for p in outputs},
    }
    path = artifact_path + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


# --------------------------------------------------------------- sig


def read_path_file(path) -> np.ndarray:
    """Delimited text, one point per row; optional header; ',' or spaces."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh.readlines()]
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise DataFormatError(f"{path}: no data rows")
    delim = "," if "," in lines[0] else None
    rows = []
    for i, ln in enumerate(lines):
        parts = ln.split(delim)
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            if i == 0:
                continue  # header row
            raise DataFormatError(f"{path}: non-numeric row {i + 1}: {ln!r}") from None
    if not rows:
        raise DataFormatError(f"{path}: no numeric rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataFormatError(f"{path}: rows have unequal widths {sorted(widths)}")
    return np.asarray(rows, dtype=np.float64)


def format_signature(tensor, source: str, mode: str) -> str:
    offsets = algebra.level_offsets(tensor.dim, range(tensor.depth + 1))
    lines = [
        f"# signature source={source} mode={mode} dims={tensor.dim} depth={tensor.depth}",
        "# level offset size",
    ]
    lines += [f"# {k} {off} {size}" for k, off, size in offsets]
    lines += [repr(float(v)) for v in algebra.flatten(tensor)]
    return "\n".join(lines) + "\n"


def cmd_sig(args) -> int:
    points = read_path_file(args.input)
    if args.strict:
        tensor = signature.strict_iterated_sum(points, args.depth)
    else:
        tensor = signature.signature_batch(points, args.depth)
    text = format_signature(tensor, source=args.input, mode="strict" if args.strict else "chen")
    sys.stdout.write(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        write_manifest(
            args.output, "sig",
            {"input": args.input, "depth": args.depth, "strict": bool(args.strict)},
            None, [args.input], [args.output],
        )
    return EXIT_OK


# --------------------------------------------------------------- verify


def cmd_verify(args) -> int:
    suites = verify.SUITES if args.suite == "all" else (args.suite,)
    failed = False
    for name in suites:
        result = verify.run_suite(name, args.trials, args.seed, corrupt=args.corrupt_update)
        print(result.summary())
        for failure in result.failures[:5]:
            print(f"  counterexample: {json.dumps(failure, sort_keys=True, default=str)}")
        failed |= not result.passed
    return EXIT_FAIL if failed else EXIT_OK


# --------------------------------------------------------------- gen-data


def cmd_gen_data(args) -> int:
    spec = maze.builtin_maze(args.maze)
    ds = data.collect_dataset(
        spec, episodes=args.episodes, noise=args.noise, seed=args.seed, wander=args.wander
    )
    if args.delayed:
        ds = data.delayed_reward_dataset(ds)
    if args.downgrade is not None:
        ds = data.downgrade_dataset(ds, args.downgrade)
    out = args.output or _default_out(f"{args.maze}_{args.episodes}eps.sigdata")
    data.save_dataset(ds, out)
    write_manifest(
        out, "gen-data",
        {"maze": args.maze, "episodes": args.episodes, "noise": args.noise,
         "wander": args.wander, "delayed": bool(args.delayed), "downgrade": args.downgrade},
        args.seed, [], [out],
    )
    print(f"wrote {out}: {len(ds)} trajectories, success rate {ds.success_rate():.3f}")
    return EXIT_OK


# --------------------------------------------------------------- train


def cmd_train(args) -> int:
    ds = data.load_dataset(args.data)
    tok_cfg = profiles.tokenizer_profile(args.profile, mode=args.mode)
    if args.mode == "correlation":
        tok_cfg = replace(tok_cfg, corr_scaler=tokens.fit_correlation_scaler(ds.trajectories, tok_cfg))
    arrays = tokens.encode_windows(ds.trajectories, tok_cfg)
    state_dim = arrays.layout.state_dim
    action_dim = arrays.layout.action_dim

    model_cfg = profiles.model_profile(args.profile)
    train_cfg = profiles.train_profile(args.profile, seed=args.seed)
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    net = model_mod.build_model(model_cfg, tok_cfg, state_dim, action_dim, seed=args.seed)
    result = model_mod.train(net, arrays, train_cfg)

    out = args.output or _default_out(f"{args.mode}_{args.profile}_s{args.seed}.sigckpt")
    meta = {
        "data": os.path.basename(str(args.data)),
        "maze": ds.metadata.get("maze"),
        "mode": args.mode,
        "profile": args.profile,
        "seed": args.seed,
        "epochs": train_cfg.epochs,
        "diverged": result.diverged,
        "layout_tokens": arrays.layout.seq_len(),
    }
    model_mod.save_checkpoint(out, net, tok_cfg, meta=meta)
    history_path = out + ".history.csv"
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,lr\n")
        for i, (loss, lr) in enumerate(zip(result.loss_history, result.lr_history)):
            fh.write(f"{i},{loss!r},{lr!r}\n")
    write_manifest(
        out, "train",
        {"data": str(args.data), "profile": args.profile, "mode": args.mode,
         "epochs": train_cfg.epochs, "windows": arrays.num_windows,
         "layout": arrays.layout.describe().splitlines()[0]},
        args.seed, [str(args.data)], [out, history_path],
    )
    if result.diverged:
        print(f"training diverged; last good checkpoint at {out}")
        return EXIT_FAIL
    print(
        f"wrote {out}: loss {result.loss_history[0]:.4f} -> {result.loss_history[-1]:.4f} "
        f"over {len(result.loss_history)} epochs"
    )
    return EXIT_OK


# --------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    net, tok_cfg, meta = model_mod.load_checkpoint(args.ckpt)
    spec = maze.builtin_maze(args.maze)
    if net.layout.state_dim != data.STATE_DIM or net.layout.action_dim != data.ACTION_DIM:
        raise ConfigError(
            f"checkpoint expects state_dim={net.layout.state_dim}, "
            f"action_dim={net.layout.action_dim}; maze provides "
            f"{data.STATE_DIM}/{data.ACTION_DIM}"
        )
    report = rollout.evaluate_model(
        net, tok_cfg, spec, goal_target=args.goal, episodes=args.episodes,
        seed=args.seed, start_mode=args.start_mode,
    )
    out_dir = args.output_dir or _default_out("eval")
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.csv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("episodes,success_rate,mean_path_length,mean_return,mean_steps\n")
        fh.write(
            f"{report.episodes},{report.success_rate!r},{report.mean_path_length!r},"
            f"{report.mean_return!r},{report.mean_steps!r}\n"
        )
    curves_path = os.path.join(out_dir, "distances.csv")
    with open(curves_path, "w", encoding="utf-8") as fh:
        fh.write("episode,step,distance\n")
        for ep, curve in enumerate(report.distance_curves):
            for t, dist in enumerate(curve):
                fh.write(f"{ep},{t},{float(dist)!r}\n")
    write_manifest(
        report_path, "eval",
        {"ckpt": str(args.ckpt), "maze": args.maze, "goal": args.goal,
         "episodes": args.episodes, "start_mode": args.start_mode,
         "ckpt_meta": meta},
        args.seed, [str(args.ckpt)], [report_path, curves_path],
    )
    print(
        f"episodes={report.episodes} success_rate={report.success_rate} "
        f"mean_path_length={report.mean_path_length} mean_steps={report.mean_steps}"
    )
    return EXIT_OK


# --------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    report = bench.run_bench(args.dims, args.depth, args.steps, seed=args.seed)
    text = "\n".join(report.lines()) + "\n"
    sys.stdout.write(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        write_manifest(
            args.output, "bench",
            {"dims": args.dims, "depth": args.depth, "steps": args.steps},
            args.seed, [], [args.output],
        )
    return EXIT_OK


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigstream",
        description="Streaming path signatures and the maze offline-RL harness.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("sig", help="signature of a path file")
    p.add_argument("--input", required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--strict", action="store_true", help="strict iterated-sum oracle")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_sig)

    p = sub.add_parser("verify", help="randomized invariant suites")
    p.add_argument("--suite", choices=verify.SUITES + ("all",), default="all")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-update", action="store_true",
                   help="mutation self-test: run against a broken streaming update")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("gen-data", help="collect a maze dataset")
    p.add_argument("--maze", choices=("u", "m", "l"), required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--noise", type=float, default=1.5)
    p.add_argument("--wander", type=float, default=0.0,
                   help="probability an episode chases random targets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delayed", action="store_true", help="terminal-only rewards")
    p.add_argument("--downgrade", type=float, default=None, metavar="X",
                   help="drop the X%% best trajectories")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the sequence model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--mode", choices=tokens.MODES, default="isc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None, help="override the profile's epochs")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="closed-loop evaluation of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--maze", choices=("u", "m", "l"), required=True)
    p.add_argument("--goal", type=float, default=1.0)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-mode", choices=("fixed", "random"), default="fixed")
    p.add_argument("--output-dir")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="streaming vs batch recomputation cost")
    p.add_argument("--dims", type=int, default=4)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValidationError, ResourceLimitError, GenerationError, ShapeMismatchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SigstreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
