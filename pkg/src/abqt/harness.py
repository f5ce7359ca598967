"""Simulated tomography experiments: ground truth, outcome sampling, strategies.

One experiment runs N rounds of select → measure → update.  All randomness
comes from sub-streams of the plan seed (truth, filter, selection, outcomes),
so the measurement sequence of one strategy does not perturb the outcome
stream of another.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .design import ConfigSpace, DiscreteList, score_table, select_next
from .particles import (
    FilterConfig,
    ParticleEnsemble,
    ParticleFilter,
    effective_sample_size,
    mean_posterior_fidelity,
)
from .prior import PriorSpec, RngStream, sample_haar_pure, sample_prior
from .quantum import DensityMatrix, Povm, hermitian_coordinates, purity

NAMED_STATES = ("maximally-mixed", "bell-hh-vv", "product-hv")

_TRUTH_STREAM, _FILTER_STREAM, _SELECT_STREAM, _OUTCOME_STREAM = 1, 2, 3, 4


@dataclass(frozen=True)
class TrueStateSpec:
    """Ground-truth state description.

    ``kind`` is one of ``explicit`` (``matrix``), ``random-pure`` (``seed``),
    ``random-mixed`` (``seed``, ``rank``), ``named`` (``name``) or
    ``purity`` (a Haar pure state mixed with I/D to reach ``purity``).
    """

    kind: str
    dim: int = 2
    name: str = ""
    seed: int = 0
    rank: int = 0
    purity: float = 1.0
    matrix: Optional[Tuple[Tuple[complex, ...], ...]] = None

    def resolve(self) -> DensityMatrix:
        d = self.dim
        if self.kind == "explicit":
            return DensityMatrix(np.array(self.matrix, dtype=complex))
        if self.kind == "named":
            if self.name == "maximally-mixed":
                return DensityMatrix.maximally_mixed(d)
            if d != 4:
                raise ValueError(f"named state {self.name!r} needs dim 4")
            if self.name == "bell-hh-vv":
                return DensityMatrix.from_pure(np.array([1, 0, 0, 1]) / math.sqrt(2))
            if self.name == "product-hv":
                return DensityMatrix.from_pure(np.array([0, 1, 0, 0]))
            raise ValueError(f"unknown named state {self.name!r}")
        rng = RngStream(self.seed, _TRUTH_STREAM)
        if self.kind == "random-pure":
            return DensityMatrix.from_pure(sample_haar_pure(d, rng))
        if self.kind == "random-mixed":
            return sample_prior(PriorSpec(d, self.rank or d), rng)
        if self.kind == "purity":
            if not 1.0 / d <= self.purity <= 1.0:
                raise ValueError(f"purity must lie in [1/{d}, 1]")
            lam = math.sqrt((self.purity - 1.0 / d) / (1.0 - 1.0 / d))
            psi = sample_haar_pure(d, rng)
            m = lam * psi.projector() + (1.0 - lam) * np.eye(d) / d
            return DensityMatrix(m)
        raise ValueError(f"unknown true-state kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class Strategy:
    """How each measurement is chosen.

    ``kind``: ``random`` (uniform over the space), ``fixed`` (uniform over a
    fixed discrete list) or ``adaptive`` (maximize the objective).
    ``batch`` re-optimizes every ``batch`` measurements.
    """

    kind: str
    space: ConfigSpace
    objective: str = "information"
    batch: int = 1

    def __post_init__(self):
        if self.kind not in ("random", "fixed", "adaptive"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == "fixed" and not isinstance(self.space, DiscreteList):
            raise ValueError("the fixed strategy needs a discrete list of povms")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")


@dataclass
class ExperimentRecord:
    step: int
    alpha_label: str
    outcome: int
    score: float
    ess: float
    fidelity: float
    infidelity: float
    millis: float


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    truth: TrueStateSpec
    strategy: Strategy
    filter: FilterConfig
    prior: PriorSpec
    n_measurements: int
    checkpoints: Tuple[int, ...] = ()
    seed: int = 0
    name: str = ""
    timing: bool = False
    snapshots: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_measurements < 0:
            raise ValueError("n_measurements must be non-negative")
        if self.prior.dim_system != self.strategy.space.dim:
            raise ValueError("prior and configuration space dimensions differ")
        if self.truth.dim != self.prior.dim_system:
            raise ValueError("true state and prior dimensions differ")
        cps = tuple(sorted(set(int(c) for c in self.checkpoints))) or \
            log_checkpoints(self.n_measurements)
        if cps and (cps[0] < 1 or cps[-1] > self.n_measurements):
            raise ValueError(f"checkpoints must lie in [1, {self.n_measurements}]")
        object.__setattr__(self, "checkpoints", cps)


def log_checkpoints(n: int, per_decade: int = 10) -> Tuple[int, ...]:
    """Log-spaced integer checkpoints in [1, n], always including n."""
    if n < 1:
        return ()
    count = max(2, int(math.ceil(per_decade * math.log10(max(n, 10)))) + 1)
    pts = np.unique(np.round(np.logspace(0, math.log10(n), count)).astype(int))
    return tuple(int(p) for p in pts if 1 <= p <= n)


def sample_outcome(truth: DensityMatrix, povm: Povm, rng: RngStream) -> int:
    """Draw an outcome index from the Born distribution of ``truth``."""
    if truth.dim != povm.dim:
        raise ValueError(f"state dimension {truth.dim} != povm dimension {povm.dim}")
    p = np.clip(povm.features @ hermitian_coordinates(truth.matrix), 0.0, None)
    return rng.choice_index(p / p.sum())


class Experiment:
    """One replication of a plan; keeps the final filter for inspection."""

    def __init__(self, plan: ExperimentPlan):
        self.plan = plan
        root = RngStream(plan.seed)
        self.truth = plan.truth.resolve()
        self.filter = ParticleFilter(plan.filter, plan.prior, root.substream(_FILTER_STREAM))
        self._select_rng = root.substream(_SELECT_STREAM)
        self._outcome_rng = root.substream(_OUTCOME_STREAM)
        self.records: List[ExperimentRecord] = []
        self.labels: List[str] = []
        self.snapshots: dict = {}

    @property
    def ensemble(self) -> ParticleEnsemble:
        return self.filter.ensemble

    def run(self) -> List[ExperimentRecord]:
        plan, strat = self.plan, self.plan.strategy
        checkpoints = set(plan.checkpoints)
        snap_at = set(plan.snapshots)
        povm: Optional[Povm] = None
        score = float("nan")
        if 0 in snap_at:
            self._snapshot(0)
        for n in range(1, plan.n_measurements + 1):
            t0 = time.perf_counter()
            if strat.kind == "adaptive":
                if (n - 1) % strat.batch == 0:
                    sel = select_next(self.ensemble, strat.space, objective=strat.objective)
                    povm, score = sel.povm, sel.score
            else:
                povm = strat.space.sample(self._select_rng)
            outcome = sample_outcome(self.truth, povm, self._outcome_rng)
            self.filter.observe(povm, outcome)
            millis = (time.perf_counter() - t0) * 1e3 if plan.timing else float("nan")
            self.labels.append(povm.label)
            if n in checkpoints:
                fid = mean_posterior_fidelity(self.ensemble, self.truth)
                self.records.append(ExperimentRecord(
                    n, povm.label, outcome, score, effective_sample_size(self.ensemble),
                    fid, 1.0 - fid, millis))
            if n in snap_at:
                self._snapshot(n)
        return self.records

    def _snapshot(self, n: int) -> None:
        # posterior particles plus the objective over every candidate (grid points
        # for continuous spaces)
        table = score_table(self.ensemble, self.plan.strategy.space, self.plan.strategy.objective)
        self.snapshots[n] = (self.ensemble, table)


def run_experiment(plan: ExperimentPlan) -> List[ExperimentRecord]:
    return Experiment(plan).run()


@dataclass
class SweepResult:
    """Per-replication records plus the aggregate table.

    ``table`` rows are ``(n, mean_infidelity, stderr, strategy)``;
    ``purity_table`` rows are ``(strategy, purity, n, mean_infidelity, stderr)``
    at the final checkpoint, grouped by the purity of the true state.
    """

    records: List[List[ExperimentRecord]]
    table: List[Tuple[int, float, float, str]]
    purity_table: List[Tuple[str, float, int, float, float]] = field(default_factory=list)
    snapshots: List[dict] = field(default_factory=list)


def _run_one(plan: ExperimentPlan):
    exp = Experiment(plan)
    return exp.run(), purity(exp.truth), exp.snapshots


def _mean_stderr(x: np.ndarray) -> Tuple[float, float]:
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def run_sweep(plans: Sequence[ExperimentPlan], workers: Optional[int] = None) -> SweepResult:
    """Run replications and aggregate infidelity by strategy name and checkpoint.

    ``workers`` defaults to the ``ABQT_THREADS`` environment variable (1 when
    unset); replications are independent and run in separate processes.
    """
    if not plans:
        raise ValueError("run_sweep needs at least one plan")
    groups: dict = {}
    for p in plans:
        key = p.name or p.strategy.kind
        first = groups.setdefault(key, p.checkpoints)
        if first != p.checkpoints:
            raise ValueError(f"inconsistent checkpoint schedules within {key!r}")
    workers = workers or int(os.environ.get("ABQT_THREADS", "1"))
    if workers > 1 and len(plans) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, plans))
    else:
        results = [_run_one(p) for p in plans]

    table, purity_table = [], []
    for key, cps in groups.items():
        idx = [i for i, p in enumerate(plans) if (p.name or p.strategy.kind) == key]
        for j, n in enumerate(cps):
            vals = np.array([results[i][0][j].infidelity for i in idx])
            m, se = _mean_stderr(vals)
            table.append((n, m, se, key))
        if cps:
            by_purity: dict = {}
            for i in idx:
                by_purity.setdefault(round(results[i][1], 6), []).append(
                    results[i][0][-1].infidelity)
            for pur in sorted(by_purity):
                m, se = _mean_stderr(np.array(by_purity[pur]))
                purity_table.append((key, pur, cps[-1], m, se))
    return SweepResult([r[0] for r in results], table, purity_table, [r[2] for r in results])


def fit_convergence_exponent(records, n_min: float, n_max: float) -> float:
    """Least-squares slope of ln(infidelity) against ln(n) over [n_min, n_max].

    ``records`` is a sequence of :class:`ExperimentRecord` or ``(n, infidelity)``
    pairs.
    """
    pts = [(r.step, r.infidelity) if isinstance(r, ExperimentRecord) else tuple(r)
           for r in records]
    pts = [(n, v) for n, v in pts if n_min <= n <= n_max]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 checkpoints in [{n_min}, {n_max}], got {len(pts)}")
    n, v = np.array(pts, dtype=float).T
    if np.any(v <= 0):
        raise ValueError("infidelity must be positive at every checkpoint "
                         "(fidelity saturated at 1)")
    slope, _ = np.polyfit(np.log(n), np.log(v), 1)
    return float(slope)
