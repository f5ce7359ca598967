"""Adaptive measurement selection and the built-in measurement sets.

The selection objective is the mutual information between the state and the
next outcome, computed from predictive distributions:

    I(α) = H[Σ_s w_s p(·|ρ_s, α)] - Σ_s w_s H[p(·|ρ_s, α)]

which only needs discrete entropies of Born probabilities under the weighted
particles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .particles import ParticleEnsemble, update_weights
from .prior import RngStream
from .quantum import (
    PAULIS,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    Povm,
    entropies,
    plogp,
    hermitian_coordinates,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------------
# objective
# --------------------------------------------------------------------------

def _scores(coords: np.ndarray, w: np.ndarray, features: np.ndarray,
            objective: str = "information") -> np.ndarray:
    """Objective for C candidates whose effect coordinates are stacked as ``(C, Γ, D²)``."""
    c, g, _ = features.shape
    probs = coords @ features.reshape(c * g, -1).T
    np.clip(probs, 0.0, 1.0, out=probs)
    predictive = (w @ probs).reshape(c, g)
    h_pred = entropies(predictive)
    if objective == "predictive_entropy":
        return h_pred
    h_cond = (w @ plogp(probs)).reshape(c, g).sum(axis=1)
    return np.maximum(h_pred + h_cond, 0.0)


def _scores_from_features(ens: ParticleEnsemble, features: np.ndarray,
                          objective: str = "information") -> np.ndarray:
    return _scores(ens.coords, ens.weights, features, objective)


def information_gain(ens: ParticleEnsemble, povm: Povm) -> float:
    """Mutual information (nats) between the state and the outcome of ``povm``."""
    if povm.dim != ens.dim:
        raise ValueError(f"povm dimension {povm.dim} != ensemble dimension {ens.dim}")
    return float(_scores_from_features(ens, povm.features[None])[0])


def entropy_reduction_oracle(ens: ParticleEnsemble, povm: Povm) -> float:
    """Expected drop in the entropy of the particle weights after measuring ``povm``.

    Brute force over outcomes with one full weight update each; only meant
    for checking :func:`information_gain` on small ensembles.
    """
    w = ens.weights
    h_prior = entropies(w)
    probs = ens.likelihoods(povm)
    predictive = w @ probs
    expected = 0.0
    for outcome, p in enumerate(predictive):
        if p <= 0.0:
            continue
        posterior = update_weights(ens, povm, outcome).weights
        expected += p * entropies(posterior)
    return float(h_prior - expected)


# --------------------------------------------------------------------------
# configuration spaces
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteList:
    """An explicit, non-empty list of POVMs."""

    povms: Tuple[Povm, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "povms", tuple(self.povms))
        if not self.povms:
            raise ValueError("a discrete configuration space needs at least one povm")
        dims = {p.dim for p in self.povms}
        if len(dims) != 1:
            raise ValueError(f"povms have mixed dimensions {sorted(dims)}")
        labels = [p.label for p in self.povms]
        if len(set(labels)) != len(labels):
            raise ValueError("povm labels must be unique within a space")

    @property
    def dim(self) -> int:
        return self.povms[0].dim

    def __len__(self):
        return len(self.povms)

    def stacked_features(self) -> Optional[np.ndarray]:
        if len({p.num_outcomes for p in self.povms}) != 1:
            return None
        cached = self.__dict__.get("_stacked")
        if cached is None:
            cached = np.stack([p.features for p in self.povms])
            object.__setattr__(self, "_stacked", cached)
        return cached

    def sample(self, rng: RngStream) -> Povm:
        return self.povms[int(rng.integers(len(self.povms)))]


@dataclass(frozen=True, eq=False)
class ParametricProjective:
    """A continuous family of projective measurements.

    Attributes:
        generator: maps a parameter vector to a :class:`Povm`.
        grid: ``(C, P)`` candidate parameters scored exhaustively.
        refine_width: half-width of the golden-section bracket per parameter.
        sampler: draws uniformly random parameters (for random strategies).
        tol: refinement stops when no parameter moves more than this.
    """

    generator: Callable[[np.ndarray], Povm]
    grid: np.ndarray
    refine_width: np.ndarray
    sampler: Callable[[RngStream], np.ndarray]
    name: str = "parametric"
    tol: float = 1e-3
    features_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        grid = np.atleast_2d(np.asarray(self.grid, dtype=float))
        if grid.shape[0] == 0:
            raise ValueError("parametric space needs a non-empty candidate grid")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "refine_width",
                           np.broadcast_to(np.asarray(self.refine_width, float), grid.shape[1:]))
        object.__setattr__(self, "_grid_features",
                           np.stack([self.features(p) for p in grid]))
        object.__setattr__(self, "_grid_labels",
                           tuple(self.generator(p).label for p in grid))

    @property
    def dim(self) -> int:
        return self.generator(self.grid[0]).dim

    def features(self, params: np.ndarray) -> np.ndarray:
        if self.features_fn is not None:
            return self.features_fn(np.asarray(params, float))
        return self.generator(params).features

    def sample(self, rng: RngStream) -> Povm:
        return self.generator(self.sampler(rng))


ConfigSpace = Union[DiscreteList, ParametricProjective]


@dataclass
class SelectionResult:
    label: str
    povm: Povm
    score: float
    table: list = field(default_factory=list)  # (label, score) per candidate
    params: Optional[np.ndarray] = None


def _golden_max(f, lo: float, hi: float, tol: float) -> Tuple[float, float]:
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = f(d)
    x = 0.5 * (lo + hi)
    return x, f(x)


def _refine(ens: ParticleEnsemble, space: ParametricProjective, start: np.ndarray,
            start_score: float, objective: str, max_rounds: int = 6):
    coords, w = ens.coords, ens.weights

    def score(p):
        return float(_scores(coords, w, space.features(p)[None], objective)[0])

    best, best_score = start.copy(), start_score
    width = np.array(space.refine_width, dtype=float)
    for _ in range(max_rounds):
        moves = np.zeros(best.size)
        for i in range(best.size):
            def along(x, i=i):
                p = best.copy()
                p[i] = x
                return score(p)
            x, fx = _golden_max(along, best[i] - width[i], best[i] + width[i], space.tol)
            if fx > best_score:
                moves[i] = abs(x - best[i])
                best[i], best_score = x, fx
        if moves.max() < space.tol:
            break
        # later rounds only need to bracket the last move
        width = np.maximum(2.0 * moves, 4.0 * space.tol)
    return best, best_score


def score_table(ens: ParticleEnsemble, space: ConfigSpace,
                objective: str = "information") -> list:
    """``(label, score)`` for every discrete candidate or grid point."""
    if isinstance(space, DiscreteList):
        feats = space.stacked_features()
        if feats is not None:
            scores = _scores_from_features(ens, feats, objective)
        else:
            scores = [_scores_from_features(ens, p.features[None], objective)[0]
                      for p in space.povms]
        return [(p.label, float(s)) for p, s in zip(space.povms, scores)]
    scores = _scores_from_features(ens, space._grid_features, objective)
    return list(zip(space._grid_labels, scores.tolist()))


def select_next(ens: ParticleEnsemble, space: ConfigSpace, rng: Optional[RngStream] = None,
                objective: str = "information", tie_tolerance: float = 1e-12) -> SelectionResult:
    """Pick the configuration with the highest objective.

    Discrete spaces are scored exhaustively; the lowest index wins among
    scores within ``tie_tolerance`` of the maximum.  Parametric spaces score
    the grid, then refine the best grid point by coordinate-wise
    golden-section search.  ``rng`` is accepted for interface symmetry with
    the random strategies and is not consumed.
    """
    if ens.dim != space.dim:
        raise ValueError(f"space dimension {space.dim} != ensemble dimension {ens.dim}")
    if isinstance(space, DiscreteList):
        table = score_table(ens, space, objective)
        scores = np.array([s for _, s in table])
        best = int(np.flatnonzero(scores >= scores.max() - tie_tolerance)[0])
        return SelectionResult(table[best][0], space.povms[best], float(scores[best]), table)

    scores = _scores_from_features(ens, space._grid_features, objective)
    best = int(np.flatnonzero(scores >= scores.max() - tie_tolerance)[0])
    params, score = _refine(ens, space, space.grid[best].copy(), float(scores[best]), objective)
    povm = space.generator(params)
    table = list(zip(space._grid_labels, scores.tolist()))
    table.append((povm.label, score))
    return SelectionResult(povm.label, povm, score, table, params)


# --------------------------------------------------------------------------
# measurement constructors
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def qubit_basis(direction: Sequence[float]) -> np.ndarray:
    """Rows are the +1 and -1 eigenvectors of ``direction · σ``."""
    x, y, z = np.asarray(direction, dtype=float)
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    e = complex(math.cos(phi), math.sin(phi))
    return np.array([[c, e * s], [-np.conj(e) * s, c]], dtype=complex)


def _bloch_effects(d: np.ndarray) -> np.ndarray:
    ds = np.einsum("k,kij->ij", d, PAULIS)
    eye = np.eye(2)
    return np.stack([0.5 * (eye + ds), 0.5 * (eye - ds)])


def _bloch_features(d) -> np.ndarray:
    # Hermitian coordinates of (I ± d·σ)/2, written out to skip matrix assembly
    x, y, z = d
    r = 0.5 * math.sqrt(2.0)
    return np.array([[0.5 * (1 + z), 0.5 * (1 - z), r * x, -r * y],
                     [0.5 * (1 - z), 0.5 * (1 + z), -r * x, r * y]])


def projective_basis_from_bloch(direction: Sequence[float], label: Optional[str] = None) -> Povm:
    """Two-outcome qubit measurement along a unit Bloch direction: ``(I ± d·σ)/2``."""
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,):
        raise ValueError("direction must be a 3-vector")
    norm = np.linalg.norm(d)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit vector, got norm {norm!r}")
    if label is None:
        label = "bloch:" + ",".join(_fmt(v) for v in d)
    return Povm(_bloch_effects(d), label=label)


PAULI_AXES = {"X": (1.0, 0.0, 0.0), "Y": (0.0, 1.0, 0.0), "Z": (0.0, 0.0, 1.0)}


def _diagonal_axes():
    r = 1.0 / math.sqrt(2.0)
    return {
        "X+Y": (r, r, 0.0), "X-Y": (r, -r, 0.0),
        "X+Z": (r, 0.0, r), "X-Z": (r, 0.0, -r),
        "Y+Z": (0.0, r, r), "Y-Z": (0.0, r, -r),
    }


def mub_bases(dim: int) -> list:
    """A complete set of mutually unbiased bases for one or two qubits.

    ``dim=2`` gives the Z, X, Y eigenbases.  ``dim=4`` gives the joint
    eigenbases of the five classes in the standard partition of the
    two-qubit Pauli group into maximal commuting sets (equivalent to the
    Galois-field construction over GF(4)).
    """
    if dim == 2:
        return [Povm.from_basis(qubit_basis(PAULI_AXES[a]), label=f"mub2:{a}")
                for a in ("Z", "X", "Y")]
    if dim != 4:
        raise ValueError(f"MUBs are only built in for dim 2 and 4, not {dim}")
    paulis = {"I": np.eye(2), "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}
    classes = [("ZI", "IZ"), ("XI", "IX"), ("YI", "IY"), ("XY", "YZ"), ("YX", "ZY")]
    bases = []
    for first, second in classes:
        p1 = np.kron(paulis[first[0]], paulis[first[1]])
        p2 = np.kron(paulis[second[0]], paulis[second[1]])
        _, vecs = np.linalg.eigh(p1 + 2 * p2)
        vecs = vecs.T
        # first nonzero entry of each vector made real positive
        lead = vecs[np.arange(4), np.argmax(np.abs(vecs) > 1e-9, axis=1)]
        vecs = vecs * (np.abs(lead) / lead)[:, None]
        bases.append(Povm.from_basis(vecs, label=f"mub4:{first}/{second}"))
    # computational basis first, in |00>,|01>,|10>,|11> order
    bases[0] = Povm.from_basis(np.eye(4), label="mub4:ZI/IZ")
    return bases


def separable_bases(axes: dict, prefix: str) -> list:
    out = []
    for (na, da), (nb, db) in itertools.product(axes.items(), repeat=2):
        vecs = np.array([np.kron(u, v) for u in qubit_basis(da) for v in qubit_basis(db)])
        out.append(Povm.from_basis(vecs, label=f"{prefix}:{na}|{nb}"))
    return out


def ssqt_bases(num_qubits: int = 2) -> list:
    """The 9 products of single-qubit Pauli eigenbases."""
    if num_qubits != 2:
        raise ValueError("only two-qubit separable bases are built in")
    return separable_bases({k: PAULI_AXES[k] for k in ("X", "Y", "Z")}, "ssqt")


def flexible_separable_bases(num_qubits: int = 2, directions: Optional[dict] = None) -> list:
    """81 separable bases: 9 axes per qubit (Pauli axes plus 6 diagonals).

    ``directions`` overrides the per-qubit axis set with ``{name: unit 3-vector}``.
    """
    if num_qubits != 2:
        raise ValueError("only two-qubit separable bases are built in")
    if directions is None:
        directions = {**{k: PAULI_AXES[k] for k in ("X", "Y", "Z")}, **_diagonal_axes()}
    return separable_bases(directions, "flex")


def fibonacci_sphere(n: int, hemisphere: bool = False) -> np.ndarray:
    """``n`` near-uniform unit vectors on the sphere (or the z ≥ 0 half)."""
    i = np.arange(n) + 0.5
    z = 1.0 - (1.0 if hemisphere else 2.0) * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _sphere_direction(params) -> np.ndarray:
    theta, phi = params
    return np.array([math.sin(theta) * math.cos(phi),
                     math.sin(theta) * math.sin(phi),
                     math.cos(theta)])


def bloch_sphere_space(grid_size: int = 200, tol: float = 1e-3) -> ParametricProjective:
    """All single-qubit projective measurements, parameterized by polar angles.

    ``d`` and ``-d`` give the same measurement with outcomes swapped, so the
    grid covers the upper hemisphere only.
    """
    dirs = fibonacci_sphere(grid_size, hemisphere=True)
    grid = np.stack([np.arccos(np.clip(dirs[:, 2], -1, 1)),
                     np.arctan2(dirs[:, 1], dirs[:, 0])], axis=1)
    width = math.sqrt(2.0 * math.pi / grid_size)

    def generator(params):
        return projective_basis_from_bloch(_sphere_direction(params))

    def sampler(rng: RngStream):
        v = rng.normal(3)
        v /= np.linalg.norm(v)
        return np.array([math.acos(max(-1.0, min(1.0, v[2]))), math.atan2(v[1], v[0])])

    return ParametricProjective(generator, grid, width, sampler, "continuous-projective",
                                tol, features_fn=lambda p: _bloch_features(_sphere_direction(p)))


def _disk_direction(params) -> np.ndarray:
    a = params[0]
    return np.array([math.sin(a), 0.0, math.cos(a)])


def bloch_disk_space(grid_size: int = 64, tol: float = 1e-3) -> ParametricProjective:
    """Measurement axes in the x-z plane of the Bloch ball, orientation in [0, π)."""
    grid = (np.arange(grid_size) * math.pi / grid_size)[:, None]

    def generator(params):
        return projective_basis_from_bloch(_disk_direction(params))

    def sampler(rng: RngStream):
        return np.array([rng.uniform() * math.pi])

    return ParametricProjective(generator, grid, math.pi / grid_size, sampler,
                                "continuous-disk", tol,
                                features_fn=lambda p: _bloch_features(_disk_direction(p)))


def builtin_space(name: str, directions: Optional[dict] = None) -> ConfigSpace:
    """Resolve a configuration-space name used in run configs."""
    if name in ("pauli", "mub2"):
        return DiscreteList(tuple(mub_bases(2)), name)
    if name == "mub4":
        return DiscreteList(tuple(mub_bases(4)), name)
    if name == "ssqt":
        return DiscreteList(tuple(ssqt_bases(2)), name)
    if name == "flex81":
        return DiscreteList(tuple(flexible_separable_bases(2, directions)), name)
    if name == "continuous-projective":
        return bloch_sphere_space()
    if name == "continuous-disk":
        return bloch_disk_space()
    raise ValueError(f"unknown configuration space {name!r}")


BUILTIN_SPACES = ("pauli", "mub2", "mub4", "ssqt", "flex81",
                  "continuous-projective", "continuous-disk")
