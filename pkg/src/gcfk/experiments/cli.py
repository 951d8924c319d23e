"""Command line entry point: ``gcfk run|list|verify``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .. import __version__
from ..errors import GcfkError, InvalidConfig, IoFailure
from .config import DEFAULTS, ExperimentConfig, validate_config
from .io import RunManifest, emit_csv, verify_manifest, write_manifest
from .runners import FIGURES, RUNNERS

log = logging.getLogger("gcfk")

DEFAULT_OUT = "gcfk-out"


def default_output_root() -> Path:
    return Path(os.environ.get("GCFK_OUT") or DEFAULT_OUT)


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int = 1) -> RunManifest:
    """Run one experiment, write its CSVs and ``manifest.json`` into ``out_dir``."""
    if workers < 1:
        raise ValueError("workers must be at least 1")
    out = Path(out_dir) if out_dir is not None else config.output_dir
    if out is None:
        out = default_output_root() / config.experiment_id
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    start = time.perf_counter()
    tables = RUNNERS[config.experiment_id](config.parameters, config.seed, workers)
    digests = {name: emit_csv(tables[name], out / name) for name in sorted(tables)}
    manifest = RunManifest(
        experiment_id=config.experiment_id,
        config_digest=config.digest(),
        seed=config.seed,
        tool_version=__version__,
        outputs=digests,
        wall_time=time.perf_counter() - start,
        workers=workers,
    )
    write_manifest(manifest, out)
    return manifest


def _u64(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcfk", description="Reproduce the gaming/cooperation experiments as CSV files.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("experiment_id", choices=sorted(DEFAULTS))
    r.add_argument("--config", type=Path, help="TOML file overriding the defaults")
    r.add_argument("--out", type=Path, help="output directory (default: $GCFK_OUT/<id>)")
    r.add_argument("--seed", type=_u64, help="64-bit seed; required unless the config sets one")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--strict", action="store_true", default=True, help="reject unknown keys (default)")
    r.add_argument("--lax", dest="strict", action="store_false", help="warn on unknown keys instead")

    sub.add_parser("list", help="list experiment ids and the figures they reproduce")

    v = sub.add_parser("verify", help="recompute digests recorded in a manifest")
    v.add_argument("manifest", type=Path)
    return p


def _cmd_run(args) -> int:
    raw = {}
    if args.config is not None:
        try:
            raw = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read {args.config}: {exc}") from exc
    cfg = validate_config(raw, args.experiment_id, seed=args.seed, strict=args.strict)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    m = run_experiment(cfg, args.out, args.workers)
    for name, digest in sorted(m.outputs.items()):
        print(f"{digest}  {name}")
    return 0


def _cmd_list(args) -> int:
    width = max(map(len, FIGURES))
    for exp in sorted(FIGURES):
        print(f"{exp:<{width}}  {FIGURES[exp]}")
    return 0


def _cmd_verify(args) -> int:
    bad = verify_manifest(args.manifest)
    for name, (want, got) in sorted(bad.items()):
        print(f"MISMATCH {name}: expected {want}, found {got or 'missing'}")
    if not bad:
        print("ok")
    return 1 if bad else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return {"run": _cmd_run, "list": _cmd_list, "verify": _cmd_verify}[args.command](args)
    except InvalidConfig as exc:  # includes ParseError and RangeError
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GcfkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
