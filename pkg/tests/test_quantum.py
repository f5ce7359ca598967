import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abqt.design import mub_bases
from abqt.prior import PriorSpec, RngStream, sample_prior
from abqt.quantum import (
    DensityMatrix,
    InvalidStateError,
    Povm,
    PureState,
    born_probabilities,
    fidelity,
    from_hermitian_coordinates,
    hermitian_coordinates,
    partial_trace_ancilla,
    purity,
    shannon_entropy,
    tensor_product,
)

H = np.array([1, 0])
V = np.array([0, 1])
HV_POVM = Povm.from_basis(np.array([H, V]), label="HV")


def random_rho(seed, dim=4, rank=None):
    return sample_prior(PriorSpec(dim, rank or dim), RngStream(seed))


class TestDensityMatrix:
    def test_small_hermitian_error_is_repaired(self):
        m = np.eye(2) / 2 + np.array([[0, 1e-9], [0, 0]])
        rho = DensityMatrix(m)
        assert np.allclose(rho.matrix, rho.matrix.conj().T, atol=0)

    def test_large_hermitian_error_raises(self):
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.eye(2) / 2 + np.array([[0, 1e-6], [0, 0]]))

    def test_trace_and_psd_checks(self):
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.eye(2))
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_immutable(self):
        rho = DensityMatrix.maximally_mixed(2)
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 1

    def test_pure_state_norm(self):
        with pytest.raises(InvalidStateError):
            PureState(np.array([1.0, 1.0]))


class TestPovm:
    def test_incomplete_povm_rejected(self):
        with pytest.raises(InvalidStateError):
            Povm(np.array([np.diag([1, 0]), np.diag([0, 0.5])]))

    def test_negative_effect_rejected(self):
        with pytest.raises(InvalidStateError):
            Povm(np.array([np.diag([1.2, 0]), np.diag([-0.2, 1])]))

    def test_coordinates_give_trace_inner_product(self):
        rho = random_rho(3)
        for povm in mub_bases(4):
            direct = np.real(np.einsum("gij,ji->g", povm.effects, rho.matrix))
            via = povm.features @ hermitian_coordinates(rho.matrix)
            np.testing.assert_allclose(via, direct, atol=1e-14)

    def test_coordinates_invert(self):
        rho = random_rho(4)
        back = from_hermitian_coordinates(hermitian_coordinates(rho.matrix), 4)
        np.testing.assert_allclose(back, rho.matrix, atol=1e-15)


class TestBorn:
    def test_maximally_mixed(self):
        np.testing.assert_allclose(
            born_probabilities(DensityMatrix.maximally_mixed(2), HV_POVM), [0.5, 0.5])

    def test_own_projector(self):
        np.testing.assert_allclose(born_probabilities(DensityMatrix.from_pure(H), HV_POVM),
                                   [1.0, 0.0])

    def test_matches_elementwise_trace_oracle(self):
        rho = random_rho(11, 4, 4)
        povm = mub_bases(4)[0]
        got = born_probabilities(rho, povm)
        expected = []
        for e in povm.effects:
            t = 0j
            for i in range(4):
                for j in range(4):
                    t += e[i, j] * rho.matrix[j, i]
            expected.append(t.real)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            born_probabilities(DensityMatrix.maximally_mixed(4), HV_POVM)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32), basis=st.integers(0, 4))
    def test_probabilities_are_distribution(self, seed, basis):
        p = born_probabilities(random_rho(seed), mub_bases(4)[basis])
        assert abs(p.sum() - 1) <= 1e-9
        assert np.all((p >= 0) & (p <= 1))


class TestTensorProduct:
    def test_identity(self):
        np.testing.assert_array_equal(tensor_product(np.eye(2), np.eye(2)), np.eye(4))

    def test_sigma_z(self):
        z = np.diag([1, -1])
        np.testing.assert_array_equal(tensor_product(z, np.eye(2)), np.diag([1, 1, -1, -1]))

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        naive = np.zeros((4, 4), complex)
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for m in range(2):
                        naive[2 * i + k, 2 * j + m] = a[i, j] * b[k, m]
        np.testing.assert_allclose(tensor_product(a, b), naive, atol=0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32))
    def test_trace_multiplies(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = rng.normal(size=(2, 2))
        assert abs(np.trace(tensor_product(a, b)) - np.trace(a) * np.trace(b)) <= 1e-10


class TestPartialTrace:
    def test_bell_state(self):
        phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
        np.testing.assert_allclose(partial_trace_ancilla(phi, 2, 2).matrix, np.eye(2) / 2,
                                   atol=1e-15)

    def test_product_state(self):
        rho = partial_trace_ancilla(np.kron(H, H).astype(complex), 2, 2)
        np.testing.assert_allclose(rho.matrix, np.diag([1, 0]), atol=1e-15)

    def test_purification_matrix_oracle(self):
        rng = np.random.default_rng(8)
        psi = rng.normal(size=8) + 1j * rng.normal(size=8)
        psi /= np.linalg.norm(psi)
        rho = partial_trace_ancilla(psi, 4, 2)
        a = psi.reshape(4, 2)
        np.testing.assert_allclose(rho.matrix, a @ a.conj().T, atol=1e-12)
        # independent check: explicit sum over ancilla index
        explicit = sum(np.outer(psi[k::2], psi[k::2].conj()) for k in range(2))
        np.testing.assert_allclose(rho.matrix, explicit, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            partial_trace_ancilla(np.array([1, 0, 0, 0]), 2, 3)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32), k=st.integers(1, 4))
    def test_rank_at_most_k(self, seed, k):
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=4 * k) + 1j * rng.normal(size=4 * k)
        rho = partial_trace_ancilla(psi / np.linalg.norm(psi), 4, k)
        assert np.sum(rho.eigvals() > 1e-10) <= k


class TestFidelity:
    def test_self(self):
        for seed in range(5):
            rho = random_rho(seed)
            assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert fidelity(DensityMatrix.from_pure(H), DensityMatrix.from_pure(V)) == \
            pytest.approx(0.0, abs=1e-12)

    def test_pure_vs_mixed(self):
        assert fidelity(DensityMatrix.from_pure(H), DensityMatrix.maximally_mixed(2)) == \
            pytest.approx(0.5, abs=1e-12)

    def test_pure_argument_formula(self):
        rng = np.random.default_rng(2)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        sigma = random_rho(9)
        expected = np.real(psi.conj() @ sigma.matrix @ psi)
        assert fidelity(DensityMatrix.from_pure(psi), sigma) == pytest.approx(expected, abs=1e-9)
        assert fidelity(sigma, DensityMatrix.from_pure(psi)) == pytest.approx(expected, abs=1e-9)

    def test_non_psd_rejected(self):
        with pytest.raises(InvalidStateError):
            fidelity(np.diag([1.5, -0.5]), np.eye(2) / 2)

    @settings(max_examples=30, deadline=None)
    @given(s1=st.integers(0, 2**32), s2=st.integers(0, 2**32))
    def test_symmetric(self, s1, s2):
        a, b = random_rho(s1), random_rho(s2)
        assert abs(fidelity(a, b) - fidelity(b, a)) <= 1e-10


class TestPurityEntropy:
    def test_purity_limits(self):
        assert purity(DensityMatrix.maximally_mixed(4)) == pytest.approx(0.25)
        assert purity(DensityMatrix.from_pure(H)) == pytest.approx(1.0)

    def test_purity_frobenius_oracle(self):
        rho = random_rho(21)
        assert purity(rho) == pytest.approx(np.sum(np.abs(rho.matrix) ** 2), abs=1e-12)
        assert purity(rho) == pytest.approx(np.sum(rho.eigvals() ** 2), abs=1e-12)

    @pytest.mark.parametrize("p, h", [
        ((1.0, 0.0), 0.0),
        ((0.5, 0.5), math.log(2)),
        ((0.25, 0.25, 0.25, 0.25), math.log(4)),
    ])
    def test_entropy_values(self, p, h):
        assert shannon_entropy(p) == pytest.approx(h, abs=1e-15)

    def test_entropy_rejects_negative(self):
        with pytest.raises(ValueError):
            shannon_entropy([1.1, -0.1])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=8).filter(lambda x: sum(x) > 1e-3))
    def test_entropy_bounded_by_log_n(self, raw):
        p = np.array(raw) / sum(raw)
        assert shannon_entropy(p) <= math.log(len(p)) + 1e-12
