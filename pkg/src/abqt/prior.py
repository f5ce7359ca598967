"""Seeded random streams and the Haar-induced rank-K prior over density matrices.

The prior is sampled with the Ginibre construction: a D×K matrix ``A`` of
i.i.d. standard complex Gaussians gives ``ρ = A A† / tr(A A†)``.  The
normalized ``A`` is exactly a Haar-random pure state on the D·K dimensional
system ⊗ ancilla space, so ``ρ`` has the induced measure of its partial
trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantum import DensityMatrix, PureState


class RngStream:
    """Philox-4x64 counter-based random stream keyed by ``(seed, stream_id)``.

    Identical keys give bit-identical variate sequences.  Independent
    sub-streams for parallel or per-purpose use come from :meth:`substream`.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    @property
    def position(self) -> int:
        """Philox block counter (advances as variates are drawn)."""
        return int(self._gen.bit_generator.state["state"]["counter"][0])

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id * 1_000_003 + int(stream_id) + 1)

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def complex_normal(self, size) -> np.ndarray:
        """Standard complex Gaussians (E|z|² = 1)."""
        z = self._gen.standard_normal(size) + 1j * self._gen.standard_normal(size)
        return z / np.sqrt(2.0)

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size=size)

    def choice_index(self, probs: np.ndarray) -> int:
        """Inverse-CDF draw of one index from a probability vector."""
        cdf = np.cumsum(probs)
        u = self.uniform() * cdf[-1]
        return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


@dataclass(frozen=True)
class PriorSpec:
    """Prior over D-dimensional states induced by Haar pure states on D·K.

    ``real=True`` restricts ``A`` to real Gaussians, giving real density
    matrices (the rebit / Bloch-disk setting).
    """

    dim_system: int
    ancilla_rank: int = 0
    seed: int = 0
    real: bool = False

    def __post_init__(self):
        if self.ancilla_rank == 0:
            object.__setattr__(self, "ancilla_rank", self.dim_system)
        if self.dim_system < 2:
            raise ValueError("dim_system must be at least 2")
        if self.ancilla_rank < 1:
            raise ValueError("ancilla_rank K must be at least 1")
        if self.ancilla_rank > self.dim_system:
            raise ValueError(
                f"ancilla_rank K={self.ancilla_rank} exceeds dim_system D={self.dim_system}")


def sample_purifications(spec: PriorSpec, rng: RngStream, count: int) -> np.ndarray:
    """``count`` unit-Frobenius-norm purification matrices, shape ``(count, D, K)``."""
    shape = (count, spec.dim_system, spec.ancilla_rank)
    a = rng.normal(shape).astype(complex) if spec.real else rng.complex_normal(shape)
    return a / np.linalg.norm(a, axis=(1, 2), keepdims=True)


def purification_to_rho(a: np.ndarray) -> np.ndarray:
    """``A A† / tr(A A†)`` for a single ``(D, K)`` matrix or a batch."""
    rho = a @ np.conj(np.swapaxes(a, -1, -2))
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    return rho / np.asarray(tr)[..., None, None]


def sample_prior(spec: PriorSpec, rng: RngStream) -> DensityMatrix:
    """One draw from the rank-K induced prior."""
    return DensityMatrix(purification_to_rho(sample_purifications(spec, rng, 1)[0]))


def sample_haar_pure(dim: int, rng: RngStream) -> PureState:
    """Haar-random pure state: a normalized complex Gaussian vector."""
    if dim < 1:
        raise ValueError("dim must be positive")
    z = rng.complex_normal(dim)
    return PureState(z / np.linalg.norm(z))
