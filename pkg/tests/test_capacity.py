import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import core_vertices, random_belief, space
from lfpinfer.capacity import (
    Capacity,
    OutcomeSpace,
    RandomSetDistribution,
    check_k_monotone,
    choquet_integral,
    conjugate,
    containment_from_random_set,
    core_membership,
    lower_envelope,
    mobius,
)


@pytest.fixture
def nu_ab():
    d = RandomSetDistribution.from_atoms(space(2), [(["a"], 0.2), (["b"], 0.3), (["a", "b"], 0.5)])
    return containment_from_random_set(d)


class TestOutcomeSpace:
    def test_duplicate_labels(self):
        with pytest.raises(ValueError):
            OutcomeSpace(("a", "a"))

    def test_bounds(self):
        with pytest.raises(ValueError):
            OutcomeSpace(("a",))
        with pytest.raises(ValueError):
            OutcomeSpace(tuple(str(i) for i in range(21)))

    def test_mask_roundtrip(self):
        s = space(4)
        mask = s.mask(["a", "c"])
        assert mask == 0b101
        assert s.members(mask) == (0, 2)
        assert s.describe(mask) == "{a,c}"


class TestRandomSet:
    def test_merges_duplicate_atoms(self):
        d = RandomSetDistribution(space(2), [1, 1, 3], [0.25, 0.25, 0.5])
        assert d.atoms() == [(1, 0.5), (3, 0.5)]

    def test_prunes_tiny_masses(self):
        d = RandomSetDistribution(space(2), [1, 2], [1.0 - 1e-15, 1e-15])
        assert d.atoms() == [(1, 1.0)]

    def test_rejects_empty_atom(self):
        with pytest.raises(ValueError):
            RandomSetDistribution(space(2), [0, 1], [0.5, 0.5])

    def test_rejects_bad_total(self):
        with pytest.raises(ValueError):
            RandomSetDistribution(space(2), [1, 2], [0.5, 0.6])


class TestContainment:
    def test_two_outcome_example(self, nu_ab):
        assert nu_ab(0b01) == pytest.approx(0.2)
        assert nu_ab(0b10) == pytest.approx(0.3)
        assert nu_ab(0b11) == 1.0

    def test_vacuous(self):
        c = containment_from_random_set(RandomSetDistribution(space(3), [7], [1.0]))
        assert np.all(c.values[1:-1] == 0.0)
        assert c.values[-1] == 1.0

    def test_singletons_are_additive(self):
        c = containment_from_random_set(RandomSetDistribution(space(2), [1, 2], [0.1, 0.9]))
        assert c.is_additive()
        assert c(1) == pytest.approx(0.1)
        assert c(2) == pytest.approx(0.9)

    def test_mobius_recovers_atoms(self, rng):
        d = RandomSetDistribution(space(4), [1, 6, 9, 15], [0.1, 0.2, 0.3, 0.4])
        m = mobius(containment_from_random_set(d))
        expected = np.zeros(16)
        expected[d.masks] = d.weights
        np.testing.assert_allclose(m, expected, atol=1e-12)

    def test_capacity_rejects_non_monotone(self):
        with pytest.raises(ValueError, match="monotone"):
            Capacity(space(3), [0.0, 0.7, 0.2, 0.6, 0.1, 0.8, 0.3, 1.0])


class TestConjugate:
    def test_two_outcome_value(self, nu_ab):
        assert conjugate(nu_ab)(0b01) == pytest.approx(0.7)

    def test_additive_is_self_conjugate(self):
        c = Capacity.additive(space(3), [0.2, 0.3, 0.5])
        np.testing.assert_allclose(conjugate(c).values, c.values, atol=1e-15)

    def test_vacuous(self):
        c = containment_from_random_set(RandomSetDistribution(space(3), [7], [1.0]))
        assert np.all(conjugate(c).values[1:] == 1.0)

    def test_involution(self, rng):
        c = random_belief(rng, 4)
        np.testing.assert_allclose(conjugate(conjugate(c)).values, c.values, atol=1e-15)


class TestKMonotone:
    def test_belief_function(self, nu_ab):
        assert check_k_monotone(nu_ab, 2)

    def test_counterexample(self):
        c = Capacity(space(2), [0.0, 0.6, 0.6, 1.0])
        assert not check_k_monotone(c, 2)

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_additive(self, k):
        assert check_k_monotone(Capacity.additive(space(4), [0.1, 0.2, 0.3, 0.4]), k)

    def test_rejects_k_below_two(self, nu_ab):
        with pytest.raises(ValueError):
            check_k_monotone(nu_ab, 1)

    def test_sampled_branch_is_deterministic(self, rng):
        c = random_belief(rng, 6)
        assert check_k_monotone(c, 3, seed=7) is check_k_monotone(c, 3, seed=7) is True


class TestCore:
    def test_membership_examples(self, nu_ab):
        assert core_membership([0.45, 0.55], nu_ab)
        assert not core_membership([0.1, 0.9], nu_ab)
        c = Capacity.additive(space(3), [0.2, 0.3, 0.5])
        assert core_membership([0.2, 0.3, 0.5], c)

    def test_lower_envelope_examples(self, nu_ab):
        assert lower_envelope(nu_ab, 0b01) == pytest.approx(0.2, abs=1e-9)
        assert lower_envelope(nu_ab, 0b11) == pytest.approx(1.0, abs=1e-9)
        c = Capacity.additive(space(3), [0.2, 0.3, 0.5])
        for a in range(1, 8):
            assert lower_envelope(c, a) == pytest.approx(c(a), abs=1e-9)


class TestChoquet:
    def test_constant(self, rng):
        assert choquet_integral(np.full(4, 3.0), random_belief(rng, 4)) == pytest.approx(3.0)

    def test_single_layer(self, nu_ab):
        assert choquet_integral([1.0, 0.0], conjugate(nu_ab)) == pytest.approx(0.7)

    def test_additive_is_expectation(self):
        p = np.array([0.2, 0.3, 0.5])
        f = np.array([1.5, -2.0, 4.0])
        assert choquet_integral(f, Capacity.additive(space(3), p)) == pytest.approx(f @ p)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 4))
def test_belief_functions_totally_monotone(seed, m):
    c = random_belief(np.random.default_rng(seed), m)
    assert all(check_k_monotone(c, k) for k in range(2, m + 1))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 4))
def test_exactness_and_duality(seed, m):
    c = random_belief(np.random.default_rng(seed), m)
    full = c.space.full
    star = conjugate(c)
    for a in range(1 << m):
        assert c(a) + star(full ^ a) == pytest.approx(1.0, abs=1e-15)
        assert lower_envelope(c, a) == pytest.approx(c(a), abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 3))
def test_choquet_equals_core_vertex_max(seed, m):
    rng = np.random.default_rng(seed)
    c = random_belief(rng, m)
    f = rng.uniform(0, 5, size=m)
    verts = core_vertices(c)
    assert choquet_integral(f, conjugate(c)) == pytest.approx(np.max(verts @ f), abs=1e-6)
    assert choquet_integral(f, c) == pytest.approx(np.min(verts @ f), abs=1e-6)
