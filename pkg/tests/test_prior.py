import numpy as np
import pytest
from scipy import stats

from abqt.prior import (
    PriorSpec,
    RngStream,
    purification_to_rho,
    sample_haar_pure,
    sample_prior,
    sample_purifications,
)
from abqt.quantum import DensityMatrix, bloch_vector, partial_trace_ancilla, purity


def test_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec(1, 1)
    with pytest.raises(ValueError):
        PriorSpec(4, 5)
    assert PriorSpec(4).ancilla_rank == 4


def test_rng_determinism_and_substreams():
    a, b = RngStream(7), RngStream(7)
    np.testing.assert_array_equal(a.normal(10), b.normal(10))
    s1, s2 = RngStream(7).substream(1), RngStream(7).substream(2)
    assert not np.array_equal(s1.normal(5), s2.normal(5))
    with pytest.raises(ValueError):
        RngStream(-1)


def test_rank_one_prior_is_pure():
    rng = RngStream(1)
    for _ in range(20):
        assert purity(sample_prior(PriorSpec(4, 1), rng)) == pytest.approx(1.0, abs=1e-9)


def test_mean_state_is_maximally_mixed():
    a = sample_purifications(PriorSpec(2, 2), RngStream(2), 100_000)
    mean = purification_to_rho(a).mean(axis=0)
    assert np.max(np.abs(mean - np.eye(2) / 2)) < 0.01


def test_eigenvalue_law_matches_purification_sampling():
    n = 40_000
    rhos = purification_to_rho(sample_purifications(PriorSpec(2, 2), RngStream(3), n))
    lam_ginibre = np.linalg.eigvalsh(rhos)[:, -1]
    # second path: first column of a Haar unitary on C^4, then trace out the ancilla
    us = stats.unitary_group.rvs(4, size=n, random_state=np.random.default_rng(4))
    lam_haar = np.array([partial_trace_ancilla(u[:, 0], 2, 2).eigvals()[-1] for u in us])
    assert stats.ks_2samp(lam_ginibre, lam_haar).statistic < 0.02


def test_haar_pure_degenerate_dimension():
    psi = sample_haar_pure(1, RngStream(5))
    assert abs(abs(psi.amplitudes[0]) - 1) < 1e-12


def test_haar_pure_mean_bloch_vector_vanishes():
    rng = RngStream(6)
    z = rng.complex_normal((100_000, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    rhos = np.einsum("si,sj->sij", z, z.conj())
    assert np.linalg.norm(bloch_vector(rhos).mean(axis=0)) < 0.02
    rng = RngStream(16)
    single = np.array([np.outer(p, p.conj()) for p in
                       (sample_haar_pure(2, rng).amplitudes for _ in range(20_000))])
    assert np.linalg.norm(bloch_vector(single).mean(axis=0)) < 0.04


def test_haar_pure_deterministic():
    a = sample_haar_pure(4, RngStream(9)).amplitudes
    b = sample_haar_pure(4, RngStream(9)).amplitudes
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("dim, k", [(2, 1), (2, 2), (4, 1), (4, 2), (4, 4)])
def test_rank_bounded_by_k(dim, k):
    rhos = purification_to_rho(sample_purifications(PriorSpec(dim, k), RngStream(k), 500))
    ranks = (np.linalg.eigvalsh(rhos) > 1e-10).sum(axis=1)
    assert ranks.max() <= k
    for r in rhos[:20]:
        DensityMatrix(r)


def test_purity_invariant_under_conjugation():
    rhos = purification_to_rho(sample_purifications(PriorSpec(4, 3), RngStream(10), 200))
    u = stats.unitary_group.rvs(4, random_state=np.random.default_rng(11))
    rotated = u @ rhos @ u.conj().T
    p1 = np.einsum("sij,sji->s", rhos, rhos).real
    p2 = np.einsum("sij,sji->s", rotated, rotated).real
    np.testing.assert_allclose(p1, p2, atol=1e-12)


def test_same_spec_same_sequence():
    spec = PriorSpec(4, 2, seed=12)
    a = [sample_prior(spec, RngStream(spec.seed)).matrix for _ in range(1)]
    b = [sample_prior(spec, RngStream(spec.seed)).matrix for _ in range(1)]
    np.testing.assert_array_equal(a[0], b[0])


def test_real_prior_gives_real_states():
    a = sample_purifications(PriorSpec(2, 2, real=True), RngStream(13), 50)
    assert np.all(np.abs(purification_to_rho(a).imag) == 0)
