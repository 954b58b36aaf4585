"""Tests for the simulation harness: scenario expansion, distances between
models and partitions, replicate bookkeeping and reports.

The reference simulation runs are marked slow and
run with `pytest -m slow`.
"""

import itertools
import math

import numpy as np
import pytest
from scipy.special import comb

from blockfactor.distribution import (
    BinaryDataset,
    Model,
    Partition,
    VariableParams,
    canonicalize,
    joint_log_pmf,
    pair_prob,
)
from blockfactor.errors import ComponentTooLargeError, InvalidOptionError, PartitionMismatchError
from blockfactor.estimation import FitConfig, fit
from blockfactor.experiments import (
    ScenarioConfig,
    adjusted_rand_index,
    application_summary,
    expand_scenarios,
    kl_divergence,
    run_grid,
    run_replicate,
    run_scenario,
    true_model,
)
from tests.helpers import all_outcomes, block_model


def _brute_force_ari(a: Partition, b: Partition) -> float:
    table = np.zeros((a.n_blocks, b.n_blocks))
    for la, lb in zip(a.labels, b.labels):
        table[la, lb] += 1
    index = comb(table, 2).sum()
    rows = comb(table.sum(axis=1), 2).sum()
    cols = comb(table.sum(axis=0), 2).sum()
    expected = rows * cols / comb(a.d, 2)
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def _joint_pmf(model: Model) -> np.ndarray:
    return np.exp([joint_log_pmf(model, x) for x in all_outcomes(model.d)])


class TestScenarios:
    def test_grid_expands_as_product(self):
        configs = expand_scenarios({"n": [200, 400], "epsilon": [0.2, 0.4, 0.6], "replicates": 3})
        assert len(configs) == 6
        assert {(c.n, c.epsilon) for c in configs} == set(itertools.product([200, 400], [0.2, 0.4, 0.6]))
        assert all(c.replicates == 3 for c in configs)

    def test_scenario_list_shares_top_level_fields(self):
        spec = {"seed": 5, "scenarios": [{"n": 50}, {"n": 800, "d": [10, 50]}]}
        configs = expand_scenarios(spec)
        assert [(c.n, c.d) for c in configs] == [(50, 10), (800, 10), (800, 50)]
        assert all(c.seed == 5 for c in configs)

    @pytest.mark.parametrize("spec", [{"n": 100, "d": 7}, {"n": 0}, {"n": 100, "method": "anneal"}])
    def test_invalid_scenarios(self, spec):
        with pytest.raises(InvalidOptionError):
            expand_scenarios(spec)

    def test_true_model_design(self):
        model = true_model(ScenarioConfig(n=100))
        assert model.partition == Partition((0,) * 5 + (1,) * 5)
        assert all(vp == VariableParams(0.4, 0.4, 1) for vp in model.params)


class TestKullbackLeibler:
    def test_bernoulli_closed_form(self):
        fair = Model(Partition((0, 1)), (VariableParams(0.5), VariableParams(0.5)))
        biased = Model(Partition((0, 1)), (VariableParams(0.6), VariableParams(0.6)))
        expected = 2 * (0.5 * math.log(0.5 / 0.6) + 0.5 * math.log(0.5 / 0.4))
        assert kl_divergence(fair, fair) == 0.0
        assert kl_divergence(fair, biased) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.0408, abs=1e-4)

    def test_matches_full_enumeration(self, rng):
        truth = block_model(6, 3, alpha=0.35, epsilon=0.6)
        labels = (0, 0, 1, 1, 2, 2)
        params = tuple(VariableParams(float(a), float(e), 1) for a, e in zip(rng.uniform(0.2, 0.8, 6), rng.uniform(0, 0.8, 6)))
        estimate = canonicalize(Model(Partition(labels), params))
        p, q = _joint_pmf(truth), _joint_pmf(estimate)
        expected = float(np.sum(p * np.log(p / q)))
        assert kl_divergence(truth, estimate) == pytest.approx(expected, rel=1e-10)

    def test_component_cap(self):
        big = block_model(8, 4)
        merged = block_model(8, 8)
        assert kl_divergence(big, merged, cap=8) > 0.0
        with pytest.raises(ComponentTooLargeError):
            kl_divergence(big, merged, cap=6)

    def test_dimension_mismatch(self):
        with pytest.raises(PartitionMismatchError):
            kl_divergence(block_model(4, 2), block_model(6, 2))


class TestAdjustedRandIndex:
    def test_identical_and_relabelled(self):
        p = Partition((0, 0, 1, 1, 2))
        assert adjusted_rand_index(p, p) == 1.0
        assert adjusted_rand_index(p, Partition((2, 2, 0, 0, 1))) == 1.0

    def test_matches_pair_counting(self, rng):
        for _ in range(100):
            d = int(rng.integers(2, 12))
            a = Partition(tuple(rng.integers(0, 4, size=d)))
            b = Partition(tuple(rng.integers(0, 4, size=d)))
            assert adjusted_rand_index(a, b) == pytest.approx(_brute_force_ari(a, b), abs=1e-12)
            assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(b, a), abs=1e-12)

    def test_mismatched_sizes(self):
        with pytest.raises(PartitionMismatchError):
            adjusted_rand_index(Partition((0, 0)), Partition((0, 0, 1)))


class TestReplicates:
    @pytest.fixture
    def small(self):
        return ScenarioConfig(n=300, d=4, block_size=2, epsilon=0.7, replicates=2, restarts=3, seed=11, threads=1)

    def test_replicate_is_reproducible(self, small):
        first, second = run_replicate(small, 0), run_replicate(small, 0)
        assert first.recovered == second.recovered
        assert first.methods["hac"].partition == second.methods["hac"].partition
        assert first.methods["hac"].kl == second.methods["hac"].kl

    def test_scenario_rows(self, small):
        result = run_scenario(small)
        (row,) = result.rows()
        assert row["method"] == "hac"
        assert row["replicates"] == 2
        assert 0 <= row["recovery_count"] <= 2
        assert 0 <= row["selection_count"] <= 2
        assert -1.0 <= row["ari_mean"] <= 1.0
        assert row["kl_mean"] >= 0.0

    def test_both_methods(self, small):
        cfg = small.model_copy(update={"method": "both", "replicates": 1, "mh_iters": 40, "mh_chains": 1})
        rows = run_scenario(cfg).rows()
        assert [r["method"] for r in rows] == ["hac", "mh"]

    def test_report_csv_leaves_out_timings(self, small):
        report = run_grid([small])
        header = report.to_csv().splitlines()[0].split(",")
        assert "seconds_mean" not in header
        assert "ari_mean" in header

    def test_report_csv_writes_shortest_decimals(self, small):
        report = run_grid([small])
        lines = report.to_csv().splitlines()
        row = dict(zip(lines[0].split(","), lines[1].split(",")))
        assert row["alpha"] == "0.4"
        assert row["epsilon"] == "0.7"
        assert "seconds_mean" in report.to_csv(timings=True).splitlines()[0]
        assert report.to_csv() == run_grid([small]).to_csv()

    def test_thread_count_does_not_change_report(self, small):
        serial = run_grid([small])
        pooled = run_grid([small.model_copy(update={"threads": 2})])
        assert serial.to_csv() == pooled.to_csv()


class TestApplicationSummary:
    def test_tables(self, two_block_data):
        fitted = fit(two_block_data, Partition((0, 0, 0, 1, 1)), FitConfig(restarts=3))
        blocks, pairs = application_summary(fitted.model, two_block_data)
        assert blocks["size"].tolist() == [3, 2]
        assert blocks["variables"].tolist() == ["A B C", "D E"]
        assert len(pairs) == 10
        linked = pairs[pairs["modelled"]]
        assert list(zip(linked["variable_a"], linked["variable_b"])) == [("A", "B"), ("A", "C"), ("B", "C"), ("D", "E")]
        assert linked["block"].tolist() == [0, 0, 0, 1]
        np.testing.assert_allclose(linked["model_v"], linked["empirical_v"], atol=0.05)
        unlinked = pairs[~pairs["modelled"]]
        assert unlinked["block"].isna().all()
        np.testing.assert_allclose(unlinked["model_v"], 0.0)
        np.testing.assert_allclose(unlinked["empirical_v"], 0.0, atol=0.1)

    def test_conditional_probabilities(self, two_block_model, two_block_data):
        _, pairs = application_summary(two_block_model, two_block_data)
        x = two_block_data.values.astype(float)
        index = {name: j for j, name in enumerate(two_block_data.names)}
        for row in pairs.itertuples():
            j, k = index[row.variable_a], index[row.variable_b]
            a, b = two_block_model.params[j], two_block_model.params[k]
            joint = pair_prob(a, b, row.modelled)
            assert row.model_p_a_given_b == pytest.approx(joint / b.alpha)
            assert row.model_p_b_given_a == pytest.approx(joint / a.alpha)
            assert row.empirical_p_a_given_b == pytest.approx(np.mean(x[x[:, k] == 1, j]))
            assert row.empirical_p_b_given_a == pytest.approx(np.mean(x[x[:, j] == 1, k]))
            if not row.modelled:
                assert row.model_p_a_given_b == pytest.approx(a.alpha)

    def test_constant_column_has_no_conditional(self):
        data = BinaryDataset.from_array([[0, 1], [0, 0], [0, 1]], ["A", "B"])
        model = Model(Partition((0, 1)), (VariableParams(1 / 6, 0.0, 1), VariableParams(2 / 3, 0.0, 1)), ("A", "B"))
        _, pairs = application_summary(model, data)
        (row,) = pairs.itertuples()
        assert math.isnan(row.empirical_p_b_given_a)
        assert row.empirical_p_a_given_b == 0.0

    def test_size_mismatch(self, two_block_model):
        data = BinaryDataset.from_array([[0, 1], [1, 0]], ["A", "B"])
        with pytest.raises(PartitionMismatchError):
            application_summary(two_block_model, data)


# ===============================================================
# Reference simulation runs at desk scale
# ===============================================================

@pytest.mark.slow
class TestSimulationTables:
    def _run(self, **fields):
        cfg = ScenarioConfig(replicates=20, restarts=10, seed=20160729, **fields)
        return run_scenario(cfg)

    @pytest.mark.parametrize(
        "n, epsilon, expected_rate",
        [(50, 0.2, 0.0), (400, 0.5, 1.0), (3200, 0.2, 0.8), (800, 0.4, 1.0)],
    )
    def test_reduction_step_recovery(self, n, epsilon, expected_rate):
        (row,) = self._run(n=n, epsilon=epsilon).rows()
        assert abs(row["recovery_count"] / row["replicates"] - expected_rate) <= 0.2

    def test_kl_of_selected_fits(self):
        result = self._run(n=400, epsilon=0.4, method="both", mh_iters=500, mh_chains=3)
        hac_row, mh_row = result.rows()
        assert 0.0 <= hac_row["kl_mean"] <= 0.08
        assert 0.0 <= mh_row["kl_mean"] <= 0.08
        assert abs(hac_row["kl_mean"] - mh_row["kl_mean"]) <= 0.03
        faster = sum(o.methods["hac"].seconds < o.methods["mh"].seconds for o in result.outcomes)
        assert faster >= 18

    @pytest.mark.parametrize("n, d, bound", [(800, 10, 0.98), (800, 50, 0.98)])
    def test_ari_high_dimension(self, n, d, bound):
        (row,) = self._run(n=n, d=d).rows()
        assert row["ari_mean"] >= bound

    def test_ari_small_sample(self):
        (row,) = self._run(n=50, d=10).rows()
        assert row["ari_mean"] <= 0.3

    def test_selection_rate_grows_with_n(self):
        rates = []
        for n in (200, 400, 800):
            (row,) = self._run(n=n, epsilon=0.4).rows()
            rates.append(row["selection_count"] / row["replicates"])
        inversions = sum(later < earlier for earlier, later in zip(rates, rates[1:]))
        assert inversions <= 1
        assert rates[-1] >= 0.9
