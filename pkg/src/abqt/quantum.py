"""Dense linear algebra for density matrices, POVMs and information measures.

Everything here works on small dense ``numpy`` arrays (D <= 16).  Batched
variants take a leading particle axis so the particle filter never loops in
Python over particles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.special import xlogy

HERMITIAN_REPAIR_TOL = 1e-8
TRACE_TOL = 1e-9
PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
NORM_TOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.stack([PAULI_X, PAULI_Y, PAULI_Z])


class InvalidStateError(ValueError):
    """Raised when a matrix or vector violates state/measurement invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _hermitize(m: np.ndarray, what: str) -> np.ndarray:
    dev = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2)))) if m.size else 0.0
    if dev > HERMITIAN_REPAIR_TOL:
        raise InvalidStateError(f"{what} is not Hermitian (deviation {dev:.3g})")
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit-norm state vector."""

    amplitudes: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if psi.size == 0:
            raise InvalidStateError("empty state vector")
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state vector norm {norm!r} is not 1")
        object.__setattr__(self, "amplitudes", _frozen(psi))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, np.conj(self.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix.

    Small Hermiticity violations (below 1e-8) are repaired by symmetrizing;
    larger ones, trace errors beyond 1e-9 and eigenvalues below -1e-10 raise
    :class:`InvalidStateError`.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidStateError(f"density matrix must be square, got shape {m.shape}")
        m = _hermitize(m, "density matrix")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"density matrix trace {tr!r} is not 1")
        lmin = np.linalg.eigvalsh(m)[0]
        if lmin < -PSD_TOL:
            raise InvalidStateError(f"density matrix has negative eigenvalue {lmin:.3g}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_pure(cls, psi: Union[PureState, Sequence[complex], np.ndarray]) -> "DensityMatrix":
        if not isinstance(psi, PureState):
            psi = PureState(np.asarray(psi, dtype=complex))
        return cls(psi.projector())

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Povm:
    """A measurement configuration: Γ PSD effects summing to the identity.

    ``effects`` has shape ``(Γ, D, D)``.  ``label`` identifies the
    configuration in sufficient statistics and output files, so two
    different POVMs used in one experiment must not share a label.
    """

    effects: np.ndarray
    label: str = ""
    _features: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.effects, dtype=complex)
        if e.ndim != 3 or e.shape[1] != e.shape[2] or e.shape[0] < 1:
            raise InvalidStateError(f"effects must have shape (Γ, D, D), got {e.shape}")
        e = _hermitize(e, f"povm {self.label!r} effect")
        lmin = np.linalg.eigvalsh(e)[:, 0].min()
        if lmin < -PSD_TOL:
            raise InvalidStateError(
                f"povm {self.label!r} has an effect with eigenvalue {lmin:.3g}")
        dev = np.max(np.abs(e.sum(axis=0) - np.eye(e.shape[1])))
        if dev > COMPLETENESS_TOL:
            raise InvalidStateError(
                f"povm {self.label!r} effects do not sum to identity (deviation {dev:.3g})")
        object.__setattr__(self, "effects", _frozen(e))
        feats = hermitian_coordinates(e)
        feats.setflags(write=False)
        object.__setattr__(self, "_features", feats)

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def num_outcomes(self) -> int:
        return self.effects.shape[0]

    @property
    def features(self) -> np.ndarray:
        """Real coordinates of each effect, shape ``(Γ, D²)``.

        Born probabilities are dot products of these rows with
        :func:`hermitian_coordinates` of the state.
        """
        return self._features

    @classmethod
    def from_basis(cls, vectors: np.ndarray, label: str = "") -> "Povm":
        """Projective measurement onto the rows of ``vectors`` (an orthonormal basis)."""
        v = np.asarray(vectors, dtype=complex)
        return cls(np.einsum("gi,gj->gij", v, np.conj(v)), label=label)


@lru_cache(maxsize=None)
def _upper(d: int):
    return np.triu_indices(d, k=1)


def hermitian_coordinates(mats: np.ndarray) -> np.ndarray:
    """Map Hermitian matrices ``(..., D, D)`` to real vectors ``(..., D²)``.

    The coordinates are the diagonal followed by sqrt(2)·Re and sqrt(2)·Im of
    the strict upper triangle, so ``tr(A B) == coords(A) @ coords(B)``.
    """
    mats = np.asarray(mats)
    d = mats.shape[-1]
    iu = _upper(d)
    diag = np.real(np.diagonal(mats, axis1=-2, axis2=-1))
    upper = mats[..., iu[0], iu[1]]
    return np.concatenate(
        [diag, np.sqrt(2.0) * upper.real, np.sqrt(2.0) * upper.imag], axis=-1)


def from_hermitian_coordinates(coords: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`hermitian_coordinates`."""
    coords = np.asarray(coords, dtype=float)
    iu = _upper(dim)
    n_off = len(iu[0])
    out = np.zeros(coords.shape[:-1] + (dim, dim), dtype=complex)
    idx = np.arange(dim)
    out[..., idx, idx] = coords[..., :dim]
    off = (coords[..., dim:dim + n_off] + 1j * coords[..., dim + n_off:]) / np.sqrt(2.0)
    out[..., iu[0], iu[1]] = off
    out[..., iu[1], iu[0]] = np.conj(off)
    return out


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.matrix
    if isinstance(x, PureState):
        return x.projector()
    return np.asarray(x, dtype=complex)


def born_probabilities(rho: DensityMatrix, povm: Povm) -> np.ndarray:
    """Outcome probabilities ``Re tr(M_γ ρ)`` clipped to [0, 1] and renormalized."""
    m = _as_matrix(rho)
    if m.shape[0] != povm.dim:
        raise ValueError(f"state dimension {m.shape[0]} != povm dimension {povm.dim}")
    p = np.real(np.einsum("gij,ji->g", povm.effects, m))
    p = np.clip(p, 0.0, 1.0)
    total = p.sum()
    if abs(total - 1.0) > COMPLETENESS_TOL:
        raise InvalidStateError(f"probabilities sum to {total!r}; povm or state is invalid")
    return p / total


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product of two matrices."""
    return np.kron(np.asarray(a), np.asarray(b))


def partial_trace_ancilla(psi: Union[PureState, np.ndarray], dim_system: int,
                          dim_ancilla: int) -> DensityMatrix:
    """Reduce a pure state on system ⊗ ancilla to the system.

    The amplitudes are ordered system-major, so reshaping into a
    ``(dim_system, dim_ancilla)`` matrix ``A`` gives ``ρ = A A†``.
    """
    if not isinstance(psi, PureState):
        psi = PureState(psi)
    if psi.dim != dim_system * dim_ancilla:
        raise ValueError(
            f"state dimension {psi.dim} != {dim_system} x {dim_ancilla}")
    a = psi.amplitudes.reshape(dim_system, dim_ancilla)
    return DensityMatrix(a @ np.conj(a.T))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Square root of a (batch of) Hermitian PSD matrices; negative eigenvalues clipped to 0."""
    vals, vecs = np.linalg.eigh(m)
    vals = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * vals[..., None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(ρ) σ sqrt(ρ)))²``."""
    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    tops = []
    for m in (a, b):
        ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if ev[0] < -PSD_TOL:
            raise InvalidStateError("fidelity argument is not positive semidefinite")
        tops.append(ev[-1])
    if tops[1] > tops[0]:
        a, b = b, a  # the purer argument takes the exact rank-one path when possible
    return float(batched_fidelity(b[None], a)[0])


def batched_fidelity(rhos: np.ndarray, truth) -> np.ndarray:
    """Fidelity of every matrix in ``rhos`` (shape ``(S, D, D)``) with ``truth``.

    A rank-one ``truth`` uses the exact linear form ``⟨ψ|ρ|ψ⟩``.
    """
    t = _as_matrix(truth)
    vals, vecs = np.linalg.eigh(t)
    if vals[-1] > 1.0 - 1e-12:
        psi = vecs[:, -1]
        f = np.real(np.einsum("i,sij,j->s", np.conj(psi), rhos, psi))
        return np.clip(f, 0.0, 1.0)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ np.conj(vecs.T)
    inner = root @ rhos @ root
    ev = np.linalg.eigvalsh(0.5 * (inner + np.conj(np.swapaxes(inner, -1, -2))))
    f = np.sqrt(np.clip(ev, 0.0, None)).sum(axis=-1) ** 2
    return np.clip(f, 0.0, 1.0)


def purity(rho) -> float:
    """``tr(ρ²)``, the sum of squared eigenvalues."""
    m = _as_matrix(rho)
    return float(np.real(np.einsum("ij,ji->", m, m)))


def shannon_entropy(p) -> float:
    """Entropy in nats, with 0·ln 0 = 0."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-12):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    p = np.clip(p, 0.0, None)
    return float(-xlogy(p, p).sum())


def plogp(p: np.ndarray) -> np.ndarray:
    """Elementwise ``p ln p`` for ``p`` in [0, 1], with 0 ln 0 = 0."""
    return p * np.log(np.maximum(p, 1e-300))


def entropies(p: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy over the last axis, without validation."""
    return -plogp(p).sum(axis=-1)


def entanglement_entropy(vector, dim_a: int, dim_b: int) -> float:
    """Von Neumann entropy (nats) of the reduced state of a bipartite pure vector."""
    v = np.asarray(vector, dtype=complex).reshape(dim_a, dim_b)
    v = v / np.linalg.norm(v)
    s = np.linalg.svd(v, compute_uv=False) ** 2
    s = s[s > 0]
    return float(-(s * np.log(s)).sum())


def bloch_vector(rho) -> np.ndarray:
    """Bloch coordinates ``(x, y, z)`` of a qubit state (or batch of them)."""
    m = np.asarray(_as_matrix(rho))
    return np.real(np.einsum("kij,...ji->...k", PAULIS, m))


def state_from_bloch(r: Sequence[float]) -> DensityMatrix:
    r = np.asarray(r, dtype=float)
    return DensityMatrix(0.5 * (np.eye(2) + np.einsum("k,kij->ij", r, PAULIS)))
