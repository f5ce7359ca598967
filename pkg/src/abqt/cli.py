"""Command-line entry point: ``abqt run | validate-spaces | version``."""

from __future__ import annotations

import argparse
import itertools
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, parse_config, povm_from_dict
from .design import builtin_space, mub_bases
from .harness import run_sweep
from .io import (
    write_aggregate,
    write_manifest,
    write_purity_table,
    write_records,
    write_scores,
    write_snapshot,
)
from .particles import EnsembleCollapseError
from .quantum import COMPLETENESS_TOL, PSD_TOL, InvalidStateError


def _stem(plan) -> str:
    stem = f"{plan.name}__seed{plan.seed}"
    if plan.truth.kind == "purity":
        stem += f"__purity{plan.truth.purity:g}"
    return stem


def fixture_names() -> list:
    """Names of the configs shipped with the package."""
    root = resources.files("abqt") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_config_text(config_path) -> str:
    """Read a config file, falling back to a shipped fixture of that name."""
    path = Path(config_path)
    if path.exists():
        return path.read_text(encoding="utf-8")
    if str(config_path) in fixture_names():
        return (resources.files("abqt") / "configs" / f"{config_path}.yaml").read_text(
            encoding="utf-8")
    raise OSError(f"no such config file or fixture: {config_path}")


def cmd_run(config_path, out_dir: Optional[str] = None, seed_offset: int = 0) -> int:
    """Run every plan of a config and write the output bundle; returns an exit status."""
    try:
        cfg = parse_config(read_config_text(config_path))
        if seed_offset:
            cfg = cfg.with_seed_offset(seed_offset)
        out = Path(out_dir or cfg.output or f"out/{cfg.name}")
        plans = cfg.plans()
        result = run_sweep(plans)
        files = []
        for plan, records, snaps in zip(plans, result.records, result.snapshots):
            name = f"records/{_stem(plan)}.csv"
            write_records(out / name, records)
            files.append(name)
            for step, (ens, table) in sorted(snaps.items()):
                snap = f"snapshots/{_stem(plan)}__step{step}"
                write_snapshot(out / f"{snap}__posterior.csv", ens)
                write_scores(out / f"{snap}__scores.csv", step, table)
                files += [f"{snap}__posterior.csv", f"{snap}__scores.csv"]
        write_aggregate(out / "aggregate.csv", result.table)
        files.append("aggregate.csv")
        if cfg.resolved["purity_grid"]:
            write_purity_table(out / "purity.csv", result.purity_table)
            files.append("purity.csv")
        write_manifest(out / "manifest.json", cfg, cfg.seeds, files)
    except (OSError, ConfigError, InvalidStateError, EnsembleCollapseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(files) + 1} files to {out}")
    return 0


def _audit_povms(povms) -> list:
    problems = []
    for p in povms:
        total = p.effects.sum(axis=0)
        dev = np.max(np.abs(total - np.eye(p.dim)))
        if dev > COMPLETENESS_TOL:
            problems.append(f"{p.label}: completeness deviation {dev:.3g}")
        lmin = np.linalg.eigvalsh(p.effects)[:, 0].min()
        if lmin < -PSD_TOL:
            problems.append(f"{p.label}: effect eigenvalue {lmin:.3g}")
    return problems


def mub_overlaps(bases) -> np.ndarray:
    """All ``|<e_i|f_j>|²`` between rank-one projectors of distinct bases."""
    vecs = []
    for b in bases:
        vals, v = np.linalg.eigh(b.effects)
        vecs.append(v[:, :, -1])
    out = []
    for a, b in itertools.combinations(vecs, 2):
        out.append(np.abs(np.conj(a) @ b.T) ** 2)
    return np.concatenate([o.ravel() for o in out])


def cmd_validate_spaces(custom_path: Optional[str] = None, out=None) -> int:
    """Audit built-in (and optional custom) configuration spaces; 0 iff all pass."""
    out = out or sys.stdout
    failed = False

    def report(name, problems):
        nonlocal failed
        failed |= bool(problems)
        print(f"{'PASS' if not problems else 'FAIL'} {name}", file=out)
        for line in problems:
            print(f"    {line}", file=out)

    for dim, name in ((2, "mub2"), (4, "mub4")):
        bases = mub_bases(dim)
        problems = _audit_povms(bases)
        ov = mub_overlaps(bases)
        target = 1.0 / dim
        if np.max(np.abs(ov - target)) > 1e-10:
            problems.append(f"overlap range [{ov.min():.12f}, {ov.max():.12f}] != {target}")
        report(f"{name}: {len(bases)} bases, {ov.size} cross overlaps in "
               f"[{ov.min():.12f}, {ov.max():.12f}] (target {target} +/- 1e-10)", problems)
    for name in ("ssqt", "flex81"):
        space = builtin_space(name)
        report(f"{name}: {len(space)} bases", _audit_povms(space.povms))
    for name in ("continuous-projective", "continuous-disk"):
        space = builtin_space(name)
        povms = [space.generator(p) for p in space.grid]
        report(f"{name}: {len(povms)} grid measurements", _audit_povms(povms))

    if custom_path is not None:
        try:
            doc = yaml.safe_load(Path(custom_path).read_text(encoding="utf-8"))
            items = doc.get("custom_povms", doc) if isinstance(doc, dict) else doc
        except (OSError, yaml.YAMLError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        problems, povms = [], []
        for i, item in enumerate(items or []):
            try:
                povms.append(povm_from_dict(item))
            except (InvalidStateError, ConfigError, ValueError, TypeError, KeyError) as exc:
                label = item.get("label", f"#{i}") if isinstance(item, dict) else f"#{i}"
                problems.append(f"{label}: {exc}")
        if not items:
            problems.append("empty povm list")
        problems += _audit_povms(povms)
        report(f"custom ({custom_path}): {len(items or [])} povms", problems)
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="abqt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="config file, or the name of a shipped fixture")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--seed-offset", type=int, default=0)
    val = sub.add_parser("validate-spaces", help="audit the built-in measurement sets")
    val.add_argument("--custom", default=None, help="YAML file with a custom_povms list")
    sub.add_parser("version")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed_offset)
    if args.command == "validate-spaces":
        return cmd_validate_spaces(args.custom)
    print(__version__)
    return 0


if __name__ == "__main__":
    sys.exit(main())
