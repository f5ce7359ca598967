"""Run configuration documents (YAML; JSON manifests parse too).

A config describes one sweep: a true state (or a purity grid of them), one or
more strategies, filter and prior settings, and a seed list.  Each
(strategy, truth, seed) triple becomes one :class:`ExperimentPlan`.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from .design import BUILTIN_SPACES, ConfigSpace, DiscreteList, builtin_space
from .harness import NAMED_STATES, ExperimentPlan, Strategy, TrueStateSpec, log_checkpoints
from .particles import FilterConfig
from .prior import PriorSpec
from .quantum import InvalidStateError, Povm


class ConfigError(ValueError):
    """Invalid run configuration."""


TOP_KEYS = {"name", "dim", "truth", "strategy", "strategies", "space", "directions",
            "custom_povms", "filter", "prior", "measurements", "checkpoints",
            "checkpoints_per_decade", "seeds", "purity_grid", "timing", "snapshots",
            "output"}
TRUTH_KEYS = {"kind", "name", "rank", "purity", "matrix_real", "matrix_imag"}
STRATEGY_KEYS = {"name", "kind", "space", "objective", "batch"}
FILTER_KEYS = {"particles", "ess_threshold", "resampling", "rejuvenation", "mh_steps",
               "step_size", "adapt_step"}
PRIOR_KEYS = {"rank", "real"}
STRATEGY_ALIASES = {"random": "random", "uniform": "fixed", "fixed": "fixed",
                    "adaptive": "adaptive"}
TRUTH_KINDS = {"explicit", "random-pure", "random-mixed", "named", "purity"}
OBJECTIVES = {"information", "predictive_entropy"}


def _default_particles(dim: int) -> int:
    return 500 if dim <= 2 else 2000


def _check_keys(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _load(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"syntax error: {where}{getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping at top level")
    return doc


def _resolve(doc: dict) -> dict:
    """Apply defaults and validate; returns a canonical, JSON-ready dict."""
    _check_keys(doc, TOP_KEYS, "config")
    dim = int(doc.get("dim", 2))
    if dim < 2:
        raise ConfigError("dim must be at least 2")

    truth = doc.get("truth", "maximally-mixed")
    if isinstance(truth, str):
        truth = {"kind": "named", "name": truth} if truth in NAMED_STATES else {"kind": truth}
    _check_keys(truth, TRUTH_KEYS, "truth")
    truth = dict(truth)
    kind = truth.setdefault("kind", "named")
    if kind not in TRUTH_KINDS:
        raise ConfigError(f"unknown truth kind {kind!r}")
    if kind == "named" and truth.get("name") not in NAMED_STATES:
        raise ConfigError(f"unknown named state {truth.get('name')!r}; "
                          f"expected one of {', '.join(NAMED_STATES)}")
    if kind == "named" and truth["name"] != "maximally-mixed" and dim != 4:
        raise ConfigError(f"named state {truth['name']!r} requires dim 4")
    if kind == "explicit" and "matrix_real" not in truth:
        raise ConfigError("explicit truth needs matrix_real (and optionally matrix_imag)")
    if kind == "random-mixed":
        truth.setdefault("rank", dim)
        if not 1 <= int(truth["rank"]) <= dim:
            raise ConfigError(f"truth rank {truth['rank']} must lie in [1, {dim}]")

    default_space = "continuous-projective" if dim == 2 else "mub4"
    space_default = doc.get("space", default_space)
    raw = doc.get("strategies")
    if raw is None:
        raw = [doc.get("strategy", "random")]
    elif "strategy" in doc:
        raise ConfigError("give either 'strategy' or 'strategies', not both")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("strategies must be a non-empty list")
    strategies = []
    for item in raw:
        if isinstance(item, str):
            item = {"kind": item}
        _check_keys(item, STRATEGY_KEYS, "strategy")
        s = dict(item)
        alias = s.get("kind", "random")
        if alias not in STRATEGY_ALIASES:
            raise ConfigError(f"unknown strategy {alias!r}; expected one of "
                              f"{', '.join(sorted(STRATEGY_ALIASES))}")
        s["kind"] = STRATEGY_ALIASES[alias]
        s.setdefault("space", space_default)
        if s["space"] not in BUILTIN_SPACES and s["space"] != "custom":
            raise ConfigError(f"unknown configuration space {s['space']!r}")
        s.setdefault("objective", "information")
        if s["objective"] not in OBJECTIVES:
            raise ConfigError(f"unknown objective {s['objective']!r}")
        s["batch"] = int(s.get("batch", 1))
        if s["batch"] < 1:
            raise ConfigError("batch must be at least 1")
        s.setdefault("name", f"{s['kind']}-{s['space']}")
        strategies.append(s)
    names = [s["name"] for s in strategies]
    if len(set(names)) != len(names):
        raise ConfigError("strategy names must be unique")

    filt = dict(doc.get("filter") or {})
    _check_keys(filt, FILTER_KEYS, "filter")
    filt = {
        "particles": int(filt.get("particles", _default_particles(dim))),
        "ess_threshold": float(filt.get("ess_threshold", 0.5)),
        "resampling": bool(filt.get("resampling", True)),
        "rejuvenation": bool(filt.get("rejuvenation", True)),
        "mh_steps": int(filt.get("mh_steps", 1)),
        "step_size": float(filt.get("step_size", 0.5)),
        "adapt_step": bool(filt.get("adapt_step", True)),
    }
    prior = dict(doc.get("prior") or {})
    _check_keys(prior, PRIOR_KEYS, "prior")
    prior = {"rank": int(prior.get("rank", dim)), "real": bool(prior.get("real", False))}
    if not 1 <= prior["rank"] <= dim:
        raise ConfigError(f"prior rank K={prior['rank']} must satisfy 1 <= K <= D={dim}")

    n = int(doc.get("measurements", 100))
    if n < 0:
        raise ConfigError("measurements must be non-negative")
    cps = doc.get("checkpoints")
    per_decade = int(doc.get("checkpoints_per_decade", 10))
    if not 1 <= per_decade <= 20:
        raise ConfigError("checkpoints_per_decade must lie in [1, 20]")
    cps = sorted({int(c) for c in cps}) if cps else list(log_checkpoints(n, per_decade))
    if cps and (cps[0] < 1 or cps[-1] > n):
        raise ConfigError(f"checkpoints must lie in [1, {n}]")
    seeds = doc.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    seeds = [int(s) for s in seeds]
    if not seeds or any(not 0 <= s < 2**63 for s in seeds):
        raise ConfigError("seeds must be a non-empty list of non-negative integers")
    grid = doc.get("purity_grid")
    if grid is not None:
        if kind != "purity":
            raise ConfigError("purity_grid requires truth kind 'purity'")
        grid = [float(p) for p in grid]
        for p in grid:
            if not 1.0 / dim <= p <= 1.0:
                raise ConfigError(f"purity {p} outside [1/{dim}, 1]")
    elif kind == "purity":
        grid = [float(truth.get("purity", 1.0))]

    out = {
        "name": str(doc.get("name", "run")),
        "dim": dim,
        "truth": truth,
        "strategies": strategies,
        "filter": filt,
        "prior": prior,
        "measurements": n,
        "checkpoints": cps,
        "seeds": seeds,
        "purity_grid": grid,
        "timing": bool(doc.get("timing", False)),
        "snapshots": sorted({int(s) for s in doc.get("snapshots", [])}),
        "directions": doc.get("directions"),
        "custom_povms": doc.get("custom_povms"),
    }
    if any(s["space"] == "custom" for s in strategies) and not out["custom_povms"]:
        raise ConfigError("space 'custom' needs a custom_povms list")
    return out


def povm_from_dict(item: dict) -> Povm:
    """``{label, effects_real, effects_imag?}`` → :class:`Povm` (raises on invalid effects)."""
    _check_keys(item, {"label", "effects_real", "effects_imag"}, "custom povm")
    eff = np.array(item["effects_real"], dtype=float).astype(complex)
    if "effects_imag" in item:
        eff = eff + 1j * np.array(item["effects_imag"], dtype=float)
    return Povm(eff, label=str(item.get("label", "")))


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A fully resolved configuration; ``resolved`` is the canonical dict."""

    resolved: Dict[str, Any]
    output: Optional[str] = None

    @property
    def name(self) -> str:
        return self.resolved["name"]

    @property
    def seeds(self) -> List[int]:
        return list(self.resolved["seeds"])

    def hash(self) -> str:
        text = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.hash() == other.hash()

    def with_seed_offset(self, offset: int) -> "RunConfig":
        r = copy.deepcopy(self.resolved)
        r["seeds"] = [s + int(offset) for s in r["seeds"]]
        return RunConfig(r, self.output)

    def space(self, name: str) -> ConfigSpace:
        if name == "custom":
            try:
                povms = tuple(povm_from_dict(p) for p in self.resolved["custom_povms"])
            except InvalidStateError as exc:
                raise ConfigError(f"invalid custom povm: {exc}") from None
            return DiscreteList(povms, "custom")
        directions = self.resolved.get("directions")
        if name == "flex81" and directions:
            directions = {k: tuple(float(x) for x in v) for k, v in directions.items()}
            return builtin_space(name, directions)
        return builtin_space(name)

    def plans(self, strategies: Optional[List[str]] = None) -> List[ExperimentPlan]:
        """One plan per (strategy, purity, seed); optionally only the named strategies."""
        r = self.resolved
        dim = r["dim"]
        f = r["filter"]
        spaces: Dict[str, ConfigSpace] = {}
        plans = []
        for s in r["strategies"]:
            if strategies is not None and s["name"] not in strategies:
                continue
            if s["space"] not in spaces:
                spaces[s["space"]] = self.space(s["space"])
            space = spaces[s["space"]]
            if space.dim != dim:
                raise ConfigError(f"space {s['space']!r} has dimension {space.dim}, config dim is {dim}")
            strat = Strategy(s["kind"], space, s["objective"], s["batch"])
            for purity in (r["purity_grid"] or [None]):
                for seed in r["seeds"]:
                    plans.append(ExperimentPlan(
                        truth=self._truth(seed, purity),
                        strategy=strat,
                        filter=FilterConfig(f["particles"], f["ess_threshold"], f["resampling"],
                                            f["rejuvenation"], f["mh_steps"], f["step_size"],
                                            f["adapt_step"], seed),
                        prior=PriorSpec(dim, r["prior"]["rank"], seed, r["prior"]["real"]),
                        n_measurements=r["measurements"],
                        checkpoints=tuple(r["checkpoints"]),
                        seed=seed,
                        name=s["name"],
                        timing=r["timing"],
                        snapshots=tuple(r["snapshots"]),
                    ))
        return plans

    def _truth(self, seed: int, purity: Optional[float]) -> TrueStateSpec:
        t, dim = self.resolved["truth"], self.resolved["dim"]
        kind = t["kind"]
        if kind == "explicit":
            m = np.array(t["matrix_real"], dtype=float).astype(complex)
            if "matrix_imag" in t:
                m = m + 1j * np.array(t["matrix_imag"], dtype=float)
            return TrueStateSpec("explicit", dim, matrix=tuple(map(tuple, m)))
        if kind == "named":
            return TrueStateSpec("named", dim, name=t["name"])
        if kind == "purity":
            return TrueStateSpec("purity", dim, seed=seed, purity=purity)
        return TrueStateSpec(kind, dim, seed=seed, rank=int(t.get("rank", 0)))


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML (or JSON) config document."""
    doc = _load(text)
    if "config" in doc and "config_hash" in doc:
        doc = doc["config"]  # a manifest written by a previous run
    output = doc.get("output")
    return RunConfig(_resolve(doc), None if output is None else str(output))
