import math

import numpy as np
import pytest

from abqt.design import DiscreteList, builtin_space, mub_bases, ssqt_bases
from abqt.harness import (
    ExperimentPlan,
    ExperimentRecord,
    Experiment,
    Strategy,
    TrueStateSpec,
    fit_convergence_exponent,
    log_checkpoints,
    run_experiment,
    run_sweep,
    sample_outcome,
)
from abqt.particles import FilterConfig, init_filter
from abqt.prior import PriorSpec, RngStream
from abqt.quantum import DensityMatrix, Povm, born_probabilities, purity

HV = Povm.from_basis(np.eye(2), label="HV")
PAULI = builtin_space("pauli")


def plan(kind="random", space=PAULI, n=50, seed=0, truth=None, dim=2, particles=100, **kw):
    truth = truth or TrueStateSpec("random-pure", dim, seed=seed)
    return ExperimentPlan(truth, Strategy(kind, space), FilterConfig(particles, seed=seed),
                          PriorSpec(dim), n, seed=seed, **kw)


class TestTrueState:
    @pytest.mark.parametrize("name, p", [("maximally-mixed", 0.25), ("bell-hh-vv", 1.0),
                                         ("product-hv", 1.0)])
    def test_named(self, name, p):
        assert purity(TrueStateSpec("named", 4, name=name).resolve()) == pytest.approx(p)

    def test_hv_is_basis_state(self):
        rho = TrueStateSpec("named", 4, name="product-hv").resolve()
        assert rho.matrix[1, 1] == pytest.approx(1)

    @pytest.mark.parametrize("target", [0.55, 0.75, 0.95, 1.0])
    def test_purity_grid(self, target):
        rho = TrueStateSpec("purity", 2, seed=3, purity=target).resolve()
        assert purity(rho) == pytest.approx(target, abs=1e-12)

    def test_random_mixed_rank(self):
        rho = TrueStateSpec("random-mixed", 4, seed=1, rank=2).resolve()
        assert np.sum(rho.eigvals() > 1e-10) == 2

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            TrueStateSpec("nonsense").resolve()


class TestSampleOutcome:
    def test_deterministic_outcome(self):
        rng = RngStream(0)
        h = DensityMatrix.from_pure(np.array([1, 0]))
        assert {sample_outcome(h, HV, rng) for _ in range(200)} == {0}

    def test_binomial_frequency(self):
        rng = RngStream(1)
        mixed = DensityMatrix.maximally_mixed(2)
        draws = [sample_outcome(mixed, HV, rng) for _ in range(100_000)]
        assert abs(np.mean(np.array(draws) == 0) - 0.5) < 0.005

    def test_bell_state_zz(self):
        bell = TrueStateSpec("named", 4, name="bell-hh-vv").resolve()
        zz = next(b for b in ssqt_bases() if b.label == "ssqt:Z|Z")
        rng = RngStream(2)
        assert {sample_outcome(bell, zz, rng) for _ in range(500)} == {0, 3}

    def test_born_marginals(self):
        truth = TrueStateSpec("random-mixed", 4, seed=5).resolve()
        povm = mub_bases(4)[3]
        rng = RngStream(3)
        n = 10_000
        counts = np.bincount([sample_outcome(truth, povm, rng) for _ in range(n)], minlength=4)
        p = born_probabilities(truth, povm)
        se = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(counts / n - p) <= 3 * se)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sample_outcome(DensityMatrix.maximally_mixed(4), HV, RngStream(0))


class TestRun:
    def test_zero_measurements(self):
        p = plan(n=0)
        exp = Experiment(p)
        assert exp.run() == []
        prior = init_filter(p.filter, p.prior, RngStream(p.seed).substream(2).substream(0))
        np.testing.assert_array_equal(exp.ensemble.rhos, prior.rhos)

    def test_forced_choice(self):
        single = DiscreteList((HV,))
        exp = Experiment(plan("adaptive", single, n=30, checkpoints=range(1, 31)))
        exp.run()
        assert set(exp.labels) == {"HV"}

    def test_strategy_separation(self):
        single = DiscreteList((HV,))
        a = Experiment(plan("fixed", single, n=40))
        b = Experiment(plan("adaptive", single, n=40))
        a.run()
        b.run()
        assert a.labels == b.labels
        assert [r.outcome for r in a.records] == [r.outcome for r in b.records]

    def test_reproducible(self):
        a = run_experiment(plan("adaptive", builtin_space("continuous-projective"), n=40))
        b = run_experiment(plan("adaptive", builtin_space("continuous-projective"), n=40))
        assert list(map(repr, a)) == list(map(repr, b))

    def test_records_at_checkpoints(self):
        recs = run_experiment(plan(n=100, checkpoints=(10, 50, 100)))
        assert [r.step for r in recs] == [10, 50, 100]
        assert all(math.isnan(r.millis) for r in recs)
        timed = run_experiment(plan(n=10, checkpoints=(10,), timing=True))
        assert timed[0].millis > 0

    def test_invalid_checkpoints(self):
        with pytest.raises(ValueError):
            plan(n=10, checkpoints=(20,))

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            ExperimentPlan(TrueStateSpec("random-pure", 4), Strategy("random", PAULI),
                           FilterConfig(10), PriorSpec(2), 5)

    def test_fixed_needs_discrete(self):
        with pytest.raises(ValueError):
            Strategy("fixed", builtin_space("continuous-disk"))

    @pytest.mark.slow
    @pytest.mark.parametrize("kind, space", [("random", "continuous-projective"),
                                             ("fixed", "pauli"),
                                             ("adaptive", "continuous-projective")])
    def test_fidelity_improves_with_data(self, kind, space):
        fids = {100: [], 1000: []}
        for seed in range(10):
            recs = run_experiment(plan(kind, builtin_space(space), n=1000, seed=seed,
                                       particles=300, checkpoints=(100, 1000)))
            for r in recs:
                fids[r.step].append(r.fidelity)
        assert np.mean(fids[1000]) > np.mean(fids[100])


class TestSweep:
    def test_identical_replicas(self):
        p = plan(n=30, checkpoints=(10, 30))
        res = run_sweep([p, p])
        assert all(se == 0 for _, _, se, _ in res.table)
        assert list(map(repr, res.records[0])) == list(map(repr, res.records[1]))

    def test_grouping_and_purity_table(self):
        plans = [plan(n=20, seed=s, checkpoints=(20,), name="r",
                      truth=TrueStateSpec("purity", 2, seed=s, purity=pur))
                 for s in range(2) for pur in (0.75, 1.0)]
        res = run_sweep(plans)
        assert [row[0] for row in res.table] == [20]
        assert sorted(row[1] for row in res.purity_table) == [0.75, 1.0]
        finals = [r[-1].infidelity for r in res.records]
        assert res.table[0][1] == pytest.approx(np.mean(finals))

    def test_inconsistent_checkpoints(self):
        with pytest.raises(ValueError):
            run_sweep([plan(n=20, checkpoints=(10,)), plan(n=20, checkpoints=(20,))])

    def test_empty(self):
        with pytest.raises(ValueError):
            run_sweep([])

    def test_parallel_matches_serial(self):
        plans = [plan(n=20, seed=s, checkpoints=(20,)) for s in range(3)]
        assert run_sweep(plans, workers=2).table == run_sweep(plans, workers=1).table


def test_log_checkpoints():
    cps = log_checkpoints(6000)
    assert cps[0] == 1 and cps[-1] == 6000
    assert list(cps) == sorted(set(cps))
    assert log_checkpoints(0) == ()


class TestFitExponent:
    N = np.unique(np.round(np.logspace(2, np.log10(6000), 40)).astype(int))

    @pytest.mark.parametrize("power", [1.0, 0.5])
    def test_exact_power_law(self, power):
        series = [(n, n ** -power) for n in self.N]
        assert fit_convergence_exponent(series, 100, 6000) == pytest.approx(-power, abs=1e-6)

    def test_noise_oracle(self):
        for seed in range(10):
            noise = np.exp(np.random.default_rng(seed).uniform(-0.1, 0.1, len(self.N)))
            series = list(zip(self.N, noise / self.N))
            assert abs(fit_convergence_exponent(series, 100, 6000) + 1) <= 0.08

    def test_records_input(self):
        recs = [ExperimentRecord(int(n), "a", 0, 0.0, 1.0, 1 - 1 / n, 1 / n, 0.0)
                for n in self.N]
        assert fit_convergence_exponent(recs, 100, 6000) == pytest.approx(-1, abs=1e-6)

    def test_saturated_fidelity(self):
        with pytest.raises(ValueError):
            fit_convergence_exponent([(n, 0.0) for n in self.N], 100, 6000)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_convergence_exponent([(100, 0.1), (200, 0.05)], 100, 6000)
