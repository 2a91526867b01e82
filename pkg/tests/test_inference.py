import math

import numpy as np
import pytest

from conftest import space
from lfpinfer.capacity import RandomSetDistribution
from lfpinfer.inference import (
    Criterion,
    Dataset,
    Decision,
    HypothesisSpec,
    PipelineOptions,
    SplitPlan,
    cell_table,
    confidence_set,
    crossfit_lr,
    decide,
    entrants_estimator,
    lfp_densities,
    moment_criterion,
    neg_loglik_criterion,
    representative_density,
    restricted_mle,
    split_lr,
    split_sample,
    tailor_made_loglik,
    unrestricted_estimate,
)
from lfpinfer.models import EntryGame
from lfpinfer.models.base import IncompleteModel
from lfpinfer.simulation import SelectionPolicy, simulate_dgp


class TwoOutcomeToy(IncompleteModel):
    """G = {a} with probability t, {a, b} otherwise; so nu({a}) = t, nu({b}) = 0."""

    name = "toy"

    def __init__(self):
        self.space = space(2)

    @property
    def n_params(self):
        return 1

    @property
    def x_dim(self):
        return 0

    def random_set(self, theta, x):
        t = float(self.check_theta(theta)[0])
        return RandomSetDistribution(self.space, [1, 3], [t, 1.0 - t])

    def predicted_masks(self, theta, xs, u):
        t = float(self.check_theta(theta)[0])
        return np.where(np.asarray(u)[:, 0] < t, 1, 3)


def toy_data(n_a: int, n_b: int) -> Dataset:
    return Dataset(np.r_[np.zeros(n_a), np.ones(n_b)], np.zeros((n_a + n_b, 0)))


NO_X = np.zeros((1, 0))


@pytest.fixture(scope="module")
def game_null_data():
    return simulate_dgp(EntryGame(), [0.0, 0.0], SelectionPolicy(), 100, seed=5)


@pytest.fixture(scope="module")
def game_hyp():
    return HypothesisSpec([[0.0, 0.0]], [-3.0, -3.0], [0.0, 0.0])


class TestSplit:
    def test_even(self):
        plan = split_sample(toy_data(5, 5), seed=1)
        assert (len(plan.d0), len(plan.d1)) == (5, 5)
        assert sorted(np.r_[plan.d0, plan.d1].tolist()) == list(range(10))

    def test_odd(self):
        plan = split_sample(toy_data(6, 5), seed=1)
        assert (len(plan.d0), len(plan.d1)) == (6, 5)

    def test_deterministic(self):
        a, b = split_sample(toy_data(30, 20), 9), split_sample(toy_data(30, 20), 9)
        assert np.array_equal(a.d0, b.d0) and np.array_equal(a.d1, b.d1)

    def test_too_small(self):
        with pytest.raises(ValueError):
            split_sample(toy_data(1, 0), 0)

    def test_plan_must_partition(self):
        with pytest.raises(ValueError):
            SplitPlan([0, 1], [1, 2])


class TestCells:
    def test_discrete_cells(self):
        data = Dataset([0, 1, 1, 2], [[0.0], [1.0], [0.0], [0.0]])
        cells = cell_table(data, 4)
        np.testing.assert_array_equal(cells.xs, [[0.0], [1.0]])
        np.testing.assert_array_equal(cells.counts, [[1, 1, 1, 0], [0, 1, 0, 0]])
        np.testing.assert_allclose(cells.p_hat[0], [1 / 3, 1 / 3, 1 / 3, 0.0])

    def test_key_depends_on_content(self):
        a = cell_table(toy_data(3, 2), 2)
        b = cell_table(toy_data(3, 2), 2)
        c = cell_table(toy_data(2, 3), 2)
        assert a.key() == b.key() != c.key()


class TestCriteria:
    def test_moment_example(self):
        assert moment_criterion([0.6], toy_data(50, 50), TwoOutcomeToy()) == pytest.approx(
            0.1 / 0.06)

    def test_moment_vacuous(self):
        assert moment_criterion([0.0], toy_data(90, 10), TwoOutcomeToy()) == 0.0

    def test_moment_near_zero_at_truth(self):
        data = simulate_dgp(EntryGame(), [-1.0, -1.0], SelectionPolicy(), 20000, seed=3)
        assert moment_criterion([-1.0, -1.0], data, EntryGame()) < 0.5

    def test_neg_loglik_example(self):
        val = neg_loglik_criterion([0.6], toy_data(50, 50), TwoOutcomeToy())
        assert val == pytest.approx(-50 * math.log(0.6) - 50 * math.log(0.4), abs=1e-6)
        assert val == pytest.approx(71.36, abs=0.01)

    def test_neg_loglik_in_core_is_entropy(self):
        val = neg_loglik_criterion([0.2], toy_data(30, 70), TwoOutcomeToy())
        assert val == pytest.approx(-30 * math.log(0.3) - 70 * math.log(0.7), abs=1e-6)

    def test_neg_loglik_support_rule(self):
        assert neg_loglik_criterion([1.0], toy_data(9, 1), TwoOutcomeToy()) == np.inf


class TestEstimators:
    def test_singleton_box(self):
        est = unrestricted_estimate(toy_data(5, 5), Criterion.MOMENT, TwoOutcomeToy(), [0.4], [0.4])
        assert est.theta.tolist() == [0.4]

    def test_flat_criterion_flags_non_identification(self):
        est = unrestricted_estimate(toy_data(50, 50), Criterion.MOMENT, TwoOutcomeToy(),
                                    [0.0], [0.3])
        assert est.value == 0.0
        assert est.non_identified

    def test_entrants_invariant_to_label_swap(self):
        g = EntryGame()
        data = simulate_dgp(g, [-0.7, -0.4], SelectionPolicy(), 300, seed=2)
        swapped = Dataset(np.choose(data.y, [0, 2, 1, 3]), data.x)
        a = entrants_estimator(data, g, [-3, -3], [0, 0])
        b = entrants_estimator(swapped, g, [-3, -3], [0, 0])
        np.testing.assert_array_equal(a, b)

    def test_entrants_all_two_hits_boundary(self):
        data = Dataset(np.full(40, 3), np.zeros((40, 0)))
        theta = entrants_estimator(data, EntryGame(), [-3, -3], [0, 0])
        np.testing.assert_allclose(theta, [0.0, 0.0], atol=1e-4)

    def test_entrants_symmetric_null(self):
        g = EntryGame()
        data = simulate_dgp(g, [0.0, 0.0], SelectionPolicy(), 4000, seed=8)
        theta = entrants_estimator(data, g, [-3, -3], [0, 0])
        assert np.all(np.abs(theta) < 0.25)

    def test_mle_calibration(self):
        g = EntryGame()
        hits = 0
        for seed in range(20):
            data = simulate_dgp(g, [-0.5, -0.5], SelectionPolicy(), 500, seed=seed)
            est = unrestricted_estimate(data, Criterion.MLE, g, [-3, -3], [0, 0])
            hits += np.max(np.abs(est.theta + 0.5)) <= 0.25
        assert hits >= 18


class TestLikelihood:
    def test_complete_model(self):
        g = EntryGame()
        cells = cell_table(Dataset([0, 1, 2, 2, 3], np.zeros((5, 0))), 4)
        p = np.array([[0.1, 0.2, 0.3, 0.4]])
        ll = tailor_made_loglik([0.0, 0.0], cells, p, g)
        assert ll == pytest.approx(5 * math.log(0.25))

    def test_prop1_single_observation(self):
        g = EntryGame()
        cells = cell_table(Dataset([2], NO_X), 4)
        p = representative_density([0.0, 0.0], g, NO_X)
        assert tailor_made_loglik([-1.0, -1.0], cells, p, g) == pytest.approx(
            math.log(0.36241), abs=1e-4)

    def test_p_in_core(self):
        g = EntryGame()
        cells = cell_table(Dataset([0, 1, 2, 3, 1], np.zeros((5, 0))), 4)
        p = representative_density([-1.0, -1.0], g, NO_X)
        expected = float(np.log(p[0])[[0, 1, 2, 3, 1]].sum())
        assert tailor_made_loglik([-1.0, -1.0], cells, p, g) == pytest.approx(expected)

    def test_closed_form_matches_solver(self):
        g = EntryGame(k=1)
        xs = np.array([[0.0, 1.0], [-1.0, 2.0], [2.0, -2.0]])
        p = representative_density([-0.5, -1.5, 0.3, 0.2], g, xs)
        theta = [-1.2, -0.4, 0.5, -0.1]
        np.testing.assert_allclose(lfp_densities(theta, g, xs, p, "closed_form"),
                                   lfp_densities(theta, g, xs, p, "solver"), atol=1e-7)

    def test_rmle_ties_and_support(self):
        toy = TwoOutcomeToy()
        cells = cell_table(toy_data(5, 5), 2)
        p = np.array([[0.5, 0.5]])
        theta, ll, idx = restricted_mle([[0.2], [0.2], [0.4]], cells, p, toy)
        assert idx == 0
        theta, ll, idx = restricted_mle([[1.0], [0.4]], cells, p, toy)
        assert idx == 1 and np.isfinite(ll)
        theta, ll, idx = restricted_mle([[1.0], [1.0]], cells, p, toy)
        assert idx == 0 and ll == -np.inf


class TestStatistics:
    def test_estimate_in_null_gives_unit_ratio(self, game_null_data):
        hyp = HypothesisSpec([[-1.0, -1.0]], [-1.0, -1.0], [-1.0, -1.0])
        plan = split_sample(game_null_data, 0)
        res = split_lr(game_null_data, plan, hyp, EntryGame())
        assert res.log_t == 0.0

    def test_all_null_points_impossible(self):
        toy = TwoOutcomeToy()
        data = toy_data(10, 10)
        hyp = HypothesisSpec([[1.0]], [0.0], [0.5])
        rec = crossfit_lr(data, split_sample(data, 3), hyp, toy)
        assert rec.log_t == np.inf and rec.decision is Decision.REJECT
        assert rec.to_dict()["T_n"] == "inf"

    def test_swap_symmetry(self, game_null_data, game_hyp):
        g = EntryGame()
        plan = split_sample(game_null_data, 4)
        a = crossfit_lr(game_null_data, plan, game_hyp, g)
        b = crossfit_lr(game_null_data, plan.swapped(), game_hyp, g)
        assert (a.log_t, a.log_t_swap) == (b.log_t_swap, b.log_t)
        assert a.log_s == b.log_s

    def test_identical_halves(self, game_hyp):
        half = simulate_dgp(EntryGame(), [-0.5, -0.5], SelectionPolicy(), 40, seed=1)
        data = Dataset(np.r_[half.y, half.y], np.zeros((80, 0)))
        plan = SplitPlan(np.arange(40), np.arange(40, 80))
        rec = crossfit_lr(data, plan, game_hyp, EntryGame())
        assert rec.log_t == rec.log_t_swap

    def test_argmax_dominance(self, game_null_data):
        g = EntryGame()
        grid = [[0.0, 0.0], [-0.5, 0.0], [0.0, -0.5], [-0.5, -0.5]]
        hyp = HypothesisSpec(grid, [-3.0, -3.0], [0.0, 0.0])
        res = split_lr(game_null_data, split_sample(game_null_data, 2), hyp, g)
        cells0 = cell_table(game_null_data.subset(split_sample(game_null_data, 2).d0), 4)
        p = representative_density(res.theta_hat1, g, cells0.xs)
        for theta in grid:
            forced = res.loglik1 - tailor_made_loglik(theta, cells0, p, g)
            assert forced >= res.log_t - 1e-12

    def test_decision_depends_only_on_s_and_alpha(self):
        assert decide(math.log(20.0) + 1e-12, 0.05) is Decision.REJECT
        assert decide(math.log(20.0) - 1e-12, 0.05) is Decision.FAIL_TO_REJECT
        assert decide(np.inf, 0.5) is Decision.REJECT
        with pytest.raises(ValueError):
            decide(0.0, 1.0)

    def test_no_overflow_at_large_n(self, game_hyp):
        data = simulate_dgp(EntryGame(), [-2.0, -2.0], SelectionPolicy(), 100_000, seed=1)
        rec = crossfit_lr(data, split_sample(data, 0), game_hyp, EntryGame())
        assert np.isfinite(rec.log_t) and rec.log_t > 100
        assert np.isfinite(rec.log_s) and rec.decision is Decision.REJECT

    def test_traces_sum_to_logliks(self, game_null_data, game_hyp):
        res = split_lr(game_null_data, split_sample(game_null_data, 1), game_hyp, EntryGame())
        assert res.trace1.sum() == pytest.approx(res.loglik1)
        assert res.trace0.sum() == pytest.approx(res.loglik0)


class TestConfidenceSet:
    def test_tiny_alpha_retains_everything(self, game_null_data):
        grid = np.array([[b, b] for b in np.linspace(-2, 0, 9)])
        res = confidence_set(game_null_data, EntryGame(), lambda t: t[0], grid[:, 0], grid,
                             [-3, -3], [0, 0], alpha=1e-300, seed=1)
        assert len(res.retained) == 9

    def test_skips_empty_null_sets(self, game_null_data):
        grid = np.array([[0.0, 0.0], [-1.0, -1.0]])
        res = confidence_set(game_null_data, EntryGame(), lambda t: t[0], [0.0, -0.5, -1.0],
                             grid, [-3, -3], [0, 0], seed=1)
        assert res.skipped == (-0.5,)
        assert 0.0 in res.retained

    def test_empty_grid(self, game_null_data):
        with pytest.raises(ValueError, match="empty grid"):
            confidence_set(game_null_data, EntryGame(), lambda t: t[0], [], [[0.0, 0.0]],
                           [-3, -3], [0, 0])

    def test_matches_crossfit_per_point(self, game_null_data):
        g = EntryGame()
        grid = np.array([[0.0, 0.0], [-1.0, -1.0]])
        res = confidence_set(game_null_data, g, lambda t: t[0], [-1.0], grid, [-3, -3], [0, 0],
                             seed=6)
        rec = crossfit_lr(game_null_data, split_sample(game_null_data, 6),
                          HypothesisSpec([[-1.0, -1.0]], [-3, -3], [0, 0]), g,
                          opts=PipelineOptions())
        assert res.rows[0].log_s == pytest.approx(rec.log_s, abs=1e-12)
