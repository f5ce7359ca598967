"""Sequential importance sampling over density matrices.

Particles carry their purification matrices ``A_s`` (``ρ_s = A_s A_s†``) so
they can be moved by Metropolis-Hastings after resampling, and their real
Hermitian coordinates so that Born probabilities for any effect are a single
dot product.  Weights live in log space; a product of 10⁴ probabilities
would underflow otherwise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .prior import PriorSpec, RngStream, purification_to_rho, sample_purifications
from .quantum import DensityMatrix, Povm, batched_fidelity, hermitian_coordinates


class EnsembleCollapseError(RuntimeError):
    """Every particle assigns zero probability to an observed outcome."""

    def __init__(self, label: str, outcome: int):
        super().__init__(
            f"ensemble collapse: outcome {outcome} of configuration {label!r} "
            "has zero probability under every particle")
        self.label = label
        self.outcome = outcome


@dataclass(frozen=True)
class FilterConfig:
    particle_count: int = 500
    ess_threshold_fraction: float = 0.5
    resampling: bool = True
    rejuvenation: bool = True
    mh_steps: int = 1
    step_size: float = 0.5
    adapt_step: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.particle_count < 2:
            raise ValueError("particle_count must be at least 2")
        if not 0.0 < self.ess_threshold_fraction <= 1.0:
            raise ValueError("ess_threshold_fraction must lie in (0, 1]")
        if self.mh_steps < 0:
            raise ValueError("mh_steps must be non-negative")
        if self.step_size < 0:
            raise ValueError("step_size must be non-negative")


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted density-matrix samples.

    Attributes:
        rhos: ``(S, D, D)`` particle density matrices.
        log_weights: ``(S,)`` log weights, normalized so they logsumexp to 0.
        coords: ``(S, D²)`` Hermitian coordinates of ``rhos``.
        purifications: ``(S, D, K)`` unit-norm matrices with ``ρ_s = A_s A_s†``,
            or ``None`` when rejuvenation is impossible.
        real: whether the purifications are confined to real matrices.
    """

    rhos: np.ndarray
    log_weights: np.ndarray
    coords: np.ndarray
    purifications: Optional[np.ndarray] = None
    real: bool = False

    @classmethod
    def from_purifications(cls, a: np.ndarray, log_weights=None, real=False):
        rhos = purification_to_rho(a)
        return cls.from_rhos(rhos, log_weights, purifications=a, real=real)

    @classmethod
    def from_rhos(cls, rhos, log_weights=None, purifications=None, real=False):
        rhos = np.asarray(rhos, dtype=complex)
        s = rhos.shape[0]
        if log_weights is None:
            log_weights = np.full(s, -np.log(s))
        else:
            log_weights = np.asarray(log_weights, dtype=float)
            log_weights = log_weights - logsumexp(log_weights)
        for arr in (rhos, log_weights):
            arr.setflags(write=False)
        coords = hermitian_coordinates(rhos)
        coords.setflags(write=False)
        return cls(rhos, log_weights, coords, purifications, real)

    @classmethod
    def from_weights(cls, particles, weights) -> "ParticleEnsemble":
        """Build from DensityMatrix values (or arrays) and linear weights."""
        rhos = np.stack([np.asarray(p, dtype=complex) for p in particles])
        with np.errstate(divide="ignore"):
            logw = np.log(np.asarray(weights, dtype=float))
        return cls.from_rhos(rhos, logw)

    @property
    def size(self) -> int:
        return self.rhos.shape[0]

    @property
    def dim(self) -> int:
        return self.rhos.shape[1]

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    @property
    def particles(self) -> list:
        return [DensityMatrix(r) for r in self.rhos]

    def likelihoods(self, povm: Povm) -> np.ndarray:
        """Born probabilities of every outcome for every particle, shape ``(S, Γ)``."""
        if povm.dim != self.dim:
            raise ValueError(f"povm dimension {povm.dim} != ensemble dimension {self.dim}")
        return np.clip(self.coords @ povm.features.T, 0.0, 1.0)


class SufficientStats:
    """Outcome counts ``c[α, γ]`` plus the effect coordinates needed to
    evaluate the batch likelihood from them."""

    def __init__(self):
        self.counts: Dict[Tuple[str, int], int] = {}
        self.n = 0
        self._rows: Dict[Tuple[str, int], int] = {}
        self._features = np.empty((0, 0))
        self._count_arr = np.empty(0)
        self._used = 0

    def add(self, povm: Povm, outcome: int) -> None:
        key = (povm.label, int(outcome))
        self.counts[key] = self.counts.get(key, 0) + 1
        self.n += 1
        row = self._rows.get(key)
        if row is None:
            feat = povm.features[outcome]
            if self._used == self._features.shape[0]:
                cap = max(16, 2 * self._used)
                grown = np.zeros((cap, feat.shape[0]))
                counts = np.zeros(cap)
                if self._used:
                    grown[: self._used] = self._features[: self._used]
                    counts[: self._used] = self._count_arr[: self._used]
                self._features, self._count_arr = grown, counts
            row = self._used
            self._rows[key] = row
            self._features[row] = feat
            self._used += 1
        self._count_arr[row] += 1

    @property
    def labels(self) -> set:
        return {label for label, _ in self.counts}

    def log_likelihood(self, coords: np.ndarray) -> np.ndarray:
        """``Σ c[α,γ] ln tr(M_αγ ρ_s)`` for each row of ``coords``."""
        if self._used == 0:
            return np.zeros(coords.shape[0])
        p = np.clip(coords @ self._features[: self._used].T, 0.0, None)
        with np.errstate(divide="ignore"):
            return np.log(p) @ self._count_arr[: self._used]


def init_filter(cfg: FilterConfig, prior: PriorSpec,
                rng: Optional[RngStream] = None) -> ParticleEnsemble:
    """``S`` prior draws with uniform weights."""
    rng = rng if rng is not None else RngStream(cfg.seed)
    a = sample_purifications(prior, rng, cfg.particle_count)
    return ParticleEnsemble.from_purifications(a, real=prior.real)


def update_weights(ens: ParticleEnsemble, povm: Povm, outcome: int) -> ParticleEnsemble:
    """Multiply weights by ``P(outcome | ρ_s, povm)`` and renormalize."""
    if not 0 <= outcome < povm.num_outcomes:
        raise ValueError(f"outcome {outcome} out of range for {povm.num_outcomes} outcomes")
    if povm.dim != ens.dim:
        raise ValueError(f"povm dimension {povm.dim} != ensemble dimension {ens.dim}")
    lik = np.clip(ens.coords @ povm.features[outcome], 0.0, 1.0)
    with np.errstate(divide="ignore"):
        logw = ens.log_weights + np.log(lik)
    top = logw.max()
    if not np.isfinite(top):
        raise EnsembleCollapseError(povm.label, outcome)
    logw = logw - (top + np.log(np.exp(logw - top).sum()))
    logw.setflags(write=False)
    return dataclasses.replace(ens, log_weights=logw)


def effective_sample_size(ens: ParticleEnsemble) -> float:
    w = ens.weights
    return float(1.0 / np.dot(w, w))


def systematic_indices(weights: np.ndarray, u: float, size: Optional[int] = None) -> np.ndarray:
    """Indices chosen by systematic resampling with offset ``u`` in [0, 1)."""
    weights = np.asarray(weights, dtype=float)
    size = len(weights) if size is None else size
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    positions = (u + np.arange(size)) / size
    idx = np.searchsorted(cdf, positions, side="right")
    return np.minimum(idx, len(weights) - 1)


def resample(ens: ParticleEnsemble, rng: RngStream) -> ParticleEnsemble:
    """Systematic resampling to uniform weights."""
    idx = systematic_indices(ens.weights, rng.uniform())
    rhos = ens.rhos[idx]
    a = ens.purifications[idx] if ens.purifications is not None else None
    coords = ens.coords[idx]
    for arr in (rhos, coords):
        arr.setflags(write=False)
    logw = np.full(ens.size, -np.log(ens.size))
    logw.setflags(write=False)
    return ParticleEnsemble(rhos, logw, coords, a, ens.real)


def mh_move(ens: ParticleEnsemble, stats: SufficientStats, rng: RngStream,
            step: float) -> Tuple[ParticleEnsemble, float]:
    """One Metropolis-Hastings sweep over all particles.

    The proposal adds Gaussian noise of scale ``step`` to each purification
    and renormalizes it.  The prior is uniform on the unit sphere of
    purifications and the proposal density depends only on the angle
    between old and new point, so the acceptance ratio is the likelihood
    ratio alone.  Returns the moved ensemble and the acceptance rate.
    """
    if ens.purifications is None:
        raise ValueError("rejuvenation requires particle purifications")
    a = ens.purifications
    noise = rng.normal(a.shape) if ens.real else rng.complex_normal(a.shape)
    prop = a + step * noise
    prop /= np.linalg.norm(prop, axis=(1, 2), keepdims=True)
    rho_new = purification_to_rho(prop)
    coords_new = hermitian_coordinates(rho_new)
    ll_old = stats.log_likelihood(ens.coords)
    ll_new = stats.log_likelihood(coords_new)
    log_u = np.log(rng.uniform(ens.size))
    with np.errstate(invalid="ignore"):
        accept = log_u < (ll_new - ll_old)
    if not accept.any():
        return ens, 0.0
    a_out = np.where(accept[:, None, None], prop, a)
    rhos = np.where(accept[:, None, None], rho_new, ens.rhos)
    coords = np.where(accept[:, None], coords_new, ens.coords)
    for arr in (a_out, rhos, coords):
        arr.setflags(write=False)
    return ParticleEnsemble(rhos, ens.log_weights, coords, a_out, ens.real), float(accept.mean())


def _check_model(stats: SufficientStats, model: Optional[Mapping[str, Povm]]) -> None:
    if model is None:
        return
    missing = stats.labels - set(model)
    if missing:
        raise ValueError(f"sufficient statistics reference unknown configurations {sorted(missing)}")


def rejuvenate(ens: ParticleEnsemble, stats: SufficientStats,
               model: Optional[Mapping[str, Povm]], rng: RngStream,
               steps: int = 1, step_size: float = 0.5) -> ParticleEnsemble:
    """Move particles with ``steps`` MH sweeps targeting the current posterior.

    The proposal scale is ``step_size / sqrt(n + 1)``.  Weights and
    statistics are left unchanged.
    """
    _check_model(stats, model)
    step = step_size / np.sqrt(stats.n + 1.0)
    for _ in range(steps):
        ens, _ = mh_move(ens, stats, rng, step)
    return ens


def posterior_mean(ens: ParticleEnsemble) -> DensityMatrix:
    """Bayesian mean estimate ``Σ w_s ρ_s``."""
    return DensityMatrix(np.einsum("s,sij->ij", ens.weights, ens.rhos))


def mean_posterior_fidelity(ens: ParticleEnsemble, truth) -> float:
    """``Σ w_s F(ρ_s, truth)``."""
    t = truth.matrix if isinstance(truth, DensityMatrix) else np.asarray(truth)
    if t.shape[0] != ens.dim:
        raise ValueError(f"truth dimension {t.shape[0]} != ensemble dimension {ens.dim}")
    return float(np.clip(ens.weights @ batched_fidelity(ens.rhos, t), 0.0, 1.0))


class ParticleFilter:
    """Stateful driver: weight updates, ESS-triggered resampling and moves."""

    def __init__(self, cfg: FilterConfig, prior: PriorSpec, rng: Optional[RngStream] = None):
        self.cfg = cfg
        self.prior = prior
        rng = rng if rng is not None else RngStream(cfg.seed)
        self._init_rng = rng.substream(0)
        self._rng = rng.substream(1)
        self.ensemble = init_filter(cfg, prior, self._init_rng)
        self.stats = SufficientStats()
        self.step_scale = 1.0
        self.resample_count = 0
        self.last_acceptance: Optional[float] = None

    @property
    def threshold(self) -> float:
        return self.cfg.ess_threshold_fraction * self.cfg.particle_count

    def observe(self, povm: Povm, outcome: int) -> None:
        self.ensemble = update_weights(self.ensemble, povm, outcome)
        self.stats.add(povm, outcome)
        if self.cfg.resampling and effective_sample_size(self.ensemble) < self.threshold:
            self.ensemble = resample(self.ensemble, self._rng)
            self.resample_count += 1
            if self.cfg.rejuvenation and self.cfg.mh_steps > 0:
                self._move()

    def _move(self) -> None:
        base = self.cfg.step_size / np.sqrt(self.stats.n + 1.0)
        for _ in range(self.cfg.mh_steps):
            self.ensemble, rate = mh_move(
                self.ensemble, self.stats, self._rng, base * self.step_scale)
            self.last_acceptance = rate
            if self.cfg.adapt_step:
                # keep acceptance roughly within [0.15, 0.5]
                if rate < 0.15:
                    self.step_scale = max(self.step_scale * 0.7, 1e-3)
                elif rate > 0.5:
                    self.step_scale = min(self.step_scale * 1.3, 1e3)
