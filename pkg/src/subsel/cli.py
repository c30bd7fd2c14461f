"""Command-line surface: featurize, select, sample, session.

Exit codes: 0 success, 2 usage or input error, 3 kernel-memory capacity
error. Stochastic subcommands require an explicit --seed so repeated runs
are byte-identical; every successful run writes a manifest next to its
outputs recording (config fingerprint, seed, tool version).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import CapacityError, SubselError
from .features import TfidfConfig, build_tfidf, load_features, save_features
from .partition import (
    default_num_blocks,
    load_artifact,
    sample_subset,
    save_artifact,
    select_orderings,
    write_subset_file,
)
from .session import (
    SessionConfig,
    load_checkpoint,
    new_session,
    resample_steps,
)

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 4 * 1024**3


def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fingerprint(parts: dict) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()


def _ensure_distinct_paths(**paths) -> None:
    resolved = {}
    for name, value in paths.items():
        if value is None:
            continue
        key = Path(value).resolve()
        if key in resolved:
            raise SubselError(f"--{resolved[key]} and --{name} point at the same path")
        resolved[key] = name


def _write_manifest(output: str | Path, command: str, seed, fingerprint: str) -> None:
    doc = {
        "tool": "subsel",
        "version": __version__,
        "command": command,
        "seed": seed,
        "fingerprint": fingerprint,
    }
    with open(f"{output}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def cmd_featurize(args: argparse.Namespace) -> int:
    _ensure_distinct_paths(input=args.input, output=args.output)
    corpus = Path(args.input).read_text(encoding="utf-8").splitlines()
    config = TfidfConfig(min_df=args.min_df)
    sparse = build_tfidf(corpus, config)
    dense = sparse.to_dense()
    save_features(dense, args.output)
    degenerate = sparse.degenerate_rows()
    _write_manifest(
        args.output,
        "featurize",
        None,
        _fingerprint(
            {
                "input_sha256": _sha256_file(args.input),
                "method": args.method,
                "min_df": args.min_df,
                "lowercase": config.lowercase,
            }
        ),
    )
    print(f"n={dense.n} d={dense.d} degenerate_rows={degenerate.size}")
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    _ensure_distinct_paths(features=args.features, output=args.output)
    features = load_features(args.features)
    partitions = args.partitions if args.partitions else default_num_blocks(features.n)
    artifact = select_orderings(
        features,
        partitions,
        epsilon=args.epsilon,
        master_seed=args.seed,
        workers=args.workers,
        memory_budget=args.memory_budget,
    )
    save_artifact(artifact, args.output)
    _write_manifest(args.output, "select", args.seed, artifact.fingerprint)
    print(
        f"n={features.n} blocks={partitions} "
        f"peak_kernel_bytes={artifact.peak_kernel_bytes}"
    )
    return 0


def _resolve_k(args: argparse.Namespace, n: int, num_blocks: int) -> int:
    if args.k is not None:
        k = args.k
    else:
        k = int(args.fraction * n)
    if not num_blocks <= k <= n:
        raise SubselError(f"subset size {k} out of range {num_blocks}..{n}")
    return k


def cmd_sample(args: argparse.Namespace) -> int:
    _ensure_distinct_paths(artifact=args.artifact, output=args.output)
    artifact = load_artifact(args.artifact)
    k = _resolve_k(args, artifact.plan.n, artifact.plan.num_blocks)
    subset = sample_subset(artifact, k, args.seed)
    write_subset_file(subset, args.output)
    _write_manifest(
        args.output,
        "sample",
        args.seed,
        _fingerprint({"artifact": artifact.fingerprint, "k": k, "seed": args.seed}),
    )
    print(f"k={k} written={args.output}")
    return 0


def cmd_session(args: argparse.Namespace) -> int:
    _ensure_distinct_paths(
        features=args.features, config=args.config, checkpoint=args.checkpoint
    )
    with open(args.config, "r", encoding="utf-8") as fh:
        config = SessionConfig.from_dict(json.load(fh))
    emit_dir = Path(args.emit_subset)
    emit_dir.mkdir(parents=True, exist_ok=True)

    checkpoint = Path(args.checkpoint) if args.checkpoint else None
    if checkpoint is not None and checkpoint.exists():
        state = load_checkpoint(checkpoint, features_path=args.features)
        resumed = True
    else:
        if args.features is None:
            raise SubselError("--features is required unless resuming a checkpoint")
        state = new_session(args.features, config)
        resumed = False

    emitted = []
    if not resumed and state.subset is not None:  # W=0 draws at construction
        path = emit_dir / f"subset_t{state.t:08d}.txt"
        write_subset_file(state.subset, path)
        emitted.append(state.t)
    for event in [e for e in resample_steps(config) if state.t < e <= args.advance_to]:
        state.advance(event - state.t)
        path = emit_dir / f"subset_t{event:08d}.txt"
        write_subset_file(state.subset, path)
        emitted.append(event)
    if state.t < args.advance_to:
        state.advance(args.advance_to - state.t)

    if checkpoint is not None:
        state.save_checkpoint(checkpoint)
    _write_manifest(
        emit_dir / "session",
        "session",
        config.seed,
        _fingerprint(
            {
                "config": config.to_dict(),
                "features_sha256": _sha256_file(args.features) if args.features else None,
            }
        ),
    )
    print(f"t={state.t} phase={state.phase} emitted={emitted}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subsel",
        description="Representative data-subset selection via partitioned "
        "facility-location maximization",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="TF-IDF features from a text file")
    p.add_argument("--input", required=True, help="text file, one document per line")
    p.add_argument("--output", required=True, help="feature-matrix file to write")
    p.add_argument("--method", choices=["tfidf"], default="tfidf")
    p.add_argument("--min-df", type=int, default=1, dest="min_df")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("select", help="build per-block orderings and distributions")
    p.add_argument("--features", required=True)
    p.add_argument("--output", required=True, help="ordering artifact JSON to write")
    p.add_argument(
        "--partitions", type=int, default=None,
        help="block count; defaults to blocks of about 4096 samples",
    )
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument(
        "--memory-budget", type=int, default=DEFAULT_MEMORY_BUDGET,
        dest="memory_budget", help="max bytes of concurrent kernel storage",
    )
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("sample", help="draw a subset from a stored artifact")
    p.add_argument("--artifact", required=True)
    p.add_argument("--output", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--k", type=int)
    group.add_argument("--fraction", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("session", help="drive a selection session to a step")
    p.add_argument("--features")
    p.add_argument("--config", required=True, help="session config JSON")
    p.add_argument("--advance-to", type=int, required=True, dest="advance_to")
    p.add_argument(
        "--emit-subset", required=True, dest="emit_subset",
        help="directory for subset files at each resample boundary",
    )
    p.add_argument("--checkpoint", help="state file; resumed if it exists")
    p.set_defaults(func=cmd_session)
    return parser


def _default_workers() -> int:
    return min(100, os.cpu_count() or 1)


def main(argv=None) -> int:
    level = os.environ.get("SUBSEL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SubselError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
