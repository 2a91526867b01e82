import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import random_belief, space
from lfpinfer.capacity import Capacity, RandomSetDistribution, containment_from_random_set, core_membership
from lfpinfer.models import EntryGame
from lfpinfer.optim import InfeasibleError, Status, barrier_newton, lp_solve
from lfpinfer.solvers import (
    GameEtas,
    entry_game_lfp,
    entry_game_regime,
    feasibility_density,
    kl_projection,
    lfp_density,
    lfp_pair,
)


def cap2(nu_a: float, nu_b: float) -> Capacity:
    return Capacity(space(2), [0.0, nu_a, nu_b, 1.0])


def lfp_objective(q, p):
    return float(np.sum((q + p) * np.log((q + p) / q)))


@pytest.fixture
def game_etas():
    masses = EntryGame().masses([-1.0, -1.0], np.zeros((1, 0)))[0]
    return masses, GameEtas.from_masses(masses)


class TestLp:
    def test_max_floor(self):
        # variables (p_a, p_b, eps): max eps s.t. p >= eps, p_a + p_b = 1
        a_ub = np.array([[-1.0, 0.0, 1.0], [0.0, -1.0, 1.0]])
        x, rep = lp_solve([0, 0, 1], a_ub, np.zeros(2), np.array([[1.0, 1.0, 0.0]]), [1.0],
                          bounds=(0.0, None), maximize=True)
        assert x[2] == pytest.approx(0.5)
        assert rep.status is Status.CONVERGED

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            lp_solve([1.0], np.array([[1.0]]), [-1.0])


class TestFeasibility:
    def test_two_outcomes(self):
        # the max-min-slack program has the unique solution (0.5, 0.5) here
        np.testing.assert_allclose(feasibility_density(cap2(0.3, 0.4)), [0.5, 0.5], atol=1e-9)

    def test_floor_binds(self):
        np.testing.assert_allclose(feasibility_density(cap2(0.7, 0.1)), [0.7, 0.3], atol=1e-9)

    def test_additive(self):
        c = Capacity.additive(space(4), [0.25] * 4)
        np.testing.assert_allclose(feasibility_density(c), [0.25] * 4, atol=1e-12)

    def test_vacuous(self):
        c = containment_from_random_set(RandomSetDistribution(space(3), [7], [1.0]))
        np.testing.assert_allclose(feasibility_density(c), [1 / 3] * 3, atol=1e-9)

    def test_zero_plausibility_is_infeasible(self):
        c = Capacity.additive(space(3), [0.5, 0.5, 0.0])
        with pytest.raises(InfeasibleError):
            feasibility_density(c)
        p = feasibility_density(c, drop_null=True)
        assert p[2] == 0.0 and p[:2] == pytest.approx([0.5, 0.5])

    def test_in_core_and_positive(self, rng):
        for _ in range(50):
            c = random_belief(rng, 4)
            try:
                p = feasibility_density(c)
            except InfeasibleError:
                continue
            assert np.all(p > 0)
            assert core_membership(p, c)


class TestLfpDensity:
    def test_interior_is_fixed_point(self):
        q, rep = lfp_density(cap2(0.2, 0.3), [0.45, 0.55])
        np.testing.assert_allclose(q, [0.45, 0.55], atol=1e-8)
        assert rep.converged and rep.kkt_residual <= 1e-8

    def test_active_constraint(self):
        p = np.array([0.5, 0.5])
        q, _ = lfp_density(cap2(0.6, 0.0), p)
        grid = minimize_scalar(lambda a: lfp_objective(np.array([a, 1 - a]), p),
                               bounds=(0.6, 1.0), method="bounded", options={"xatol": 1e-10})
        np.testing.assert_allclose(q, [0.6, 0.4], atol=1e-8)
        assert q[0] == pytest.approx(grid.x, abs=1e-6)

    def test_prop1_instance(self, game_etas):
        masses, etas = game_etas
        c = EntryGame().capacity([-1.0, -1.0], ())
        p = np.array([0.25, 0.3, 0.3, 0.15])
        q, _ = lfp_density(c, p)
        np.testing.assert_allclose(q, entry_game_lfp(etas, p, masses[0], masses[3]), atol=1e-6)

    def test_interior_law(self, rng):
        for _ in range(40):
            c = random_belief(rng, 4)
            try:
                p = feasibility_density(c)
            except InfeasibleError:
                continue
            q, _ = lfp_density(c, p)
            assert np.max(np.abs(q - p)) <= 1e-7

    def test_outputs_in_core_and_deterministic(self, rng):
        for _ in range(40):
            c = random_belief(rng, 4)
            p = rng.dirichlet(np.ones(4))
            q1, r1 = lfp_density(c, p)
            q2, r2 = lfp_density(c, p)
            assert core_membership(q1, c)
            assert np.array_equal(q1, q2)
            assert np.all(np.diff(r1.history) <= 1e-12)

    def test_barrier_unconstrained_interior(self):
        p = np.array([0.2, 0.3, 0.5])

        def obj(x):
            s = x + p
            val = float(np.sum(s * np.log(s / x)))
            grad = np.log(s / x) - p / x
            hess = np.diag(p ** 2 / (x ** 2 * s))
            return val, grad, hess

        x, rep = barrier_newton(obj, np.eye(3), np.zeros(3), np.full(3, 1 / 3),
                                np.ones((1, 3)), [1.0])
        np.testing.assert_allclose(x, p, atol=1e-8)


class TestKlProjection:
    def test_in_core(self):
        q, rep = kl_projection([0.45, 0.55], cap2(0.2, 0.3))
        np.testing.assert_allclose(q, [0.45, 0.55], atol=1e-8)
        assert rep.objective == pytest.approx(0.0, abs=1e-10)

    def test_active_constraint(self):
        q, _ = kl_projection([0.5, 0.5], cap2(0.6, 0.0))
        np.testing.assert_allclose(q, [0.6, 0.4], atol=1e-8)

    def test_zero_entry(self):
        c = containment_from_random_set(
            RandomSetDistribution(space(3), [1, 6], [0.5, 0.5]))
        q, _ = kl_projection([0.3, 0.7, 0.0], c)
        assert core_membership(q, c)
        # all of {b, c}'s mass goes where p_hat puts it
        np.testing.assert_allclose(q, [0.5, 0.5, 0.0], atol=1e-7)


class TestLfpPair:
    def test_additive_second_core(self, rng):
        c0 = random_belief(rng, 3)
        p = np.array([0.2, 0.5, 0.3])
        q0, q1, _ = lfp_pair(c0, Capacity.additive(space(3), p))
        np.testing.assert_allclose(q1, p, atol=1e-8)
        np.testing.assert_allclose(q0, lfp_density(c0, p)[0], atol=1e-8)

    def test_equal_capacities(self):
        c = cap2(0.2, 0.3)
        q0, q1, rep = lfp_pair(c, c)
        np.testing.assert_allclose(q0, q1, atol=1e-8)
        assert rep.objective == pytest.approx(2 * math.log(2), abs=1e-8)

    def test_disjoint_boundaries(self):
        q0, q1, _ = lfp_pair(cap2(0.6, 0.0), cap2(0.0, 0.6))
        np.testing.assert_allclose(q0, [0.6, 0.4], atol=1e-8)
        np.testing.assert_allclose(q1, [0.4, 0.6], atol=1e-8)


class TestEntryGameClosedForm:
    def test_etas(self, game_etas):
        masses, etas = game_etas
        assert masses[0] == pytest.approx(0.25, abs=1e-12)
        assert masses[3] == pytest.approx(0.025171, abs=1e-6)
        assert etas.eta1 == pytest.approx(0.724829, abs=1e-6)
        assert etas.eta2 == pytest.approx(0.420673, abs=1e-6)
        assert etas.eta3 == pytest.approx(0.304156, abs=1e-6)

    def test_interior_regime(self, game_etas):
        masses, etas = game_etas
        q = entry_game_lfp(etas, [0.25, 0.3, 0.3, 0.15], masses[0], masses[3])
        assert q[2] == pytest.approx(0.5 * etas.eta1)
        assert q[2] == pytest.approx(0.36241, abs=1e-5)
        assert entry_game_regime(etas, 0.5) == 1

    def test_upper_regime(self, game_etas):
        masses, etas = game_etas
        q = entry_game_lfp(etas, [0.05, 0.05, 0.45, 0.45], masses[0], masses[3])
        assert q[2] == etas.eta2
        assert entry_game_regime(etas, 0.9) == 2
        assert entry_game_regime(etas, 0.1) == 3

    def test_tie_goes_to_interior(self):
        etas = GameEtas(0.8, 0.4, 0.2)
        assert entry_game_regime(etas, 0.5) == 1
        assert entry_game_regime(etas, 0.25) == 1

    def test_complete_model(self):
        masses = EntryGame().masses([0.0, 0.0], np.zeros((1, 0)))[0]
        etas = GameEtas.from_masses(masses)
        q = entry_game_lfp(etas, [0.1, 0.2, 0.6, 0.1], masses[0], masses[3])
        np.testing.assert_allclose(q, masses[:4], atol=1e-15)

    def test_rejects_bad_inputs(self, game_etas):
        masses, etas = game_etas
        with pytest.raises(ValueError):
            entry_game_lfp(etas, [0.25, 0.3, 0.3, 0.15], 0.5, 0.5)
        with pytest.raises(ValueError):
            GameEtas(0.5, 0.2, 0.3)

    def test_randomized_oracle(self):
        rng = np.random.default_rng(7)
        model = EntryGame()
        for _ in range(60):
            theta = rng.uniform(-3.0, 0.0, size=2)
            other = rng.uniform(-3.0, 0.0, size=2)
            p = feasibility_density(model.capacity(other, ()))
            masses = model.masses(theta, np.zeros((1, 0)))[0]
            closed = entry_game_lfp(GameEtas.from_masses(masses), p, masses[0], masses[3])
            q, _ = lfp_density(model.capacity(theta, ()), p)
            np.testing.assert_allclose(q, closed, atol=1e-6)
