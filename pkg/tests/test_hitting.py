import numpy as np
import pytest

from mml.chain import generate, stationary, validate
from mml.errors import EmptySetError, TooManyStatesError, ValidationError
from mml.hitting import (
    StateSet,
    check_lemma1,
    check_lemma2,
    expected_hitting_time,
    hitting_table,
    state_set,
    subset_masses,
    t_large,
    t_large_upper,
    t_minus,
    t_plus,
)

from oracles import brute_force_t_large, survival_sum_expected, survival_sum_table

UNIFORM2 = validate([[0.5, 0.5], [0.5, 0.5]])
CYCLE3 = validate([[0, 1, 0], [0, 0, 1], [1, 0, 0]])


def random_chain(m, seed):
    return generate("random-dense", m=m, seed=seed).matrix


class TestStateSet:
    def test_normalizes_sorted_unique(self):
        assert StateSet((2, 0, 2, 1)).members == (0, 1, 2)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            StateSet((-1, 0))

    def test_with_mass(self):
        pi = stationary(UNIFORM2)
        assert state_set([0]).with_mass(pi).mass == 0.5


class TestHittingTable:
    def test_uniform_two_state(self):
        # h(0) = 1 + 0.5 h(0)  =>  h(0) = 2
        table = hitting_table(UNIFORM2, state_set([1]))
        np.testing.assert_allclose(table.h, [2.0, 0.0], atol=1e-9)
        assert table.t_plus_all == pytest.approx(2.0, abs=1e-9)

    def test_full_target_is_zero(self):
        table = hitting_table(CYCLE3, state_set([0, 1, 2]))
        assert np.array_equal(table.h, np.zeros(3))
        assert table.t_plus_all == 0.0

    def test_deterministic_cycle(self):
        table = hitting_table(CYCLE3, state_set([2]))
        np.testing.assert_allclose(table.h, [2.0, 1.0, 0.0], atol=1e-9)

    def test_empty_target(self):
        with pytest.raises(EmptySetError):
            hitting_table(UNIFORM2, StateSet(()))

    def test_single_state_chain(self):
        table = hitting_table(validate([[1.0]]), state_set([0]))
        assert table.h.tolist() == [0.0]
        assert table.t_plus_all == 0.0

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            hitting_table(UNIFORM2, state_set([5]))

    @pytest.mark.parametrize("seed", range(10))
    def test_residual_and_floor(self, seed):
        P = random_chain(6, seed)
        members = (seed % 5,)
        table = hitting_table(P, StateSet(members))
        assert table.residual <= 1e-9
        off_target = [x for x in range(6) if x not in members]
        assert all(table.h[x] >= 1 - 1e-9 for x in off_target)

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_survival_sum_oracle(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 9))
        P = random_chain(m, seed + 100)
        k = int(rng.integers(1, m))
        members = tuple(sorted(rng.choice(m, size=k, replace=False).tolist()))
        h = hitting_table(P, StateSet(members)).h
        h_oracle = survival_sum_table(P.rows, members)
        np.testing.assert_allclose(h, h_oracle, rtol=1e-6)

    @pytest.mark.parametrize("seed", range(6))
    def test_monotone_in_target(self, seed):
        P = random_chain(7, seed + 30)
        rng = np.random.default_rng(seed)
        small = tuple(sorted(rng.choice(7, size=2, replace=False).tolist()))
        big = tuple(sorted(set(small) | {int(rng.integers(0, 7))}))
        h_small = hitting_table(P, StateSet(small)).h
        h_big = hitting_table(P, StateSet(big)).h
        assert np.all(h_big <= h_small + 1e-9)

    def test_iid_closed_form(self):
        mu = np.array([0.1, 0.2, 0.3, 0.4])
        P = generate("iid", mu=mu).matrix
        for j in range(4):
            h = hitting_table(P, state_set([j])).h
            for x in range(4):
                expected = 0.0 if x == j else 1.0 / mu[j]
                assert h[x] == pytest.approx(expected, rel=1e-9)


class TestTPlusMinus:
    def test_uniform(self):
        A, B = state_set([0]), state_set([1])
        assert t_plus(UNIFORM2, A, B) == pytest.approx(2.0, abs=1e-9)
        assert t_minus(UNIFORM2, A, B) == pytest.approx(2.0, abs=1e-9)

    def test_start_inside_target(self):
        assert t_plus(CYCLE3, state_set([1]), state_set([0, 1])) == 0.0

    def test_cycle(self):
        A, B = state_set([0, 1]), state_set([2])
        assert t_plus(CYCLE3, A, B) == pytest.approx(2.0, abs=1e-9)
        assert t_minus(CYCLE3, A, B) == pytest.approx(1.0, abs=1e-9)

    def test_empty_start_set(self):
        with pytest.raises(EmptySetError):
            t_plus(UNIFORM2, StateSet(()), state_set([1]))


class TestExpectedHittingTime:
    def test_uniform_from_outside(self):
        table = hitting_table(UNIFORM2, state_set([1]))
        assert expected_hitting_time(table, np.array([1.0, 0.0])) == pytest.approx(3.0)

    def test_start_inside_target_is_one(self):
        table = hitting_table(UNIFORM2, state_set([1]))
        assert expected_hitting_time(table, np.array([0.0, 1.0])) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_survival_oracle(self, seed):
        P = random_chain(6, seed + 60)
        pi = stationary(P)
        members = (0, 3)
        table = hitting_table(P, StateSet(members))
        lhs = expected_hitting_time(table, pi.pi)
        rhs = survival_sum_expected(P.rows, members, pi.pi)
        assert lhs == pytest.approx(rhs, rel=1e-6)


class TestTLarge:
    def test_uniform_half(self):
        pi = stationary(UNIFORM2)
        res = t_large(UNIFORM2, pi, 0.5)
        assert res.value == pytest.approx(2.0, abs=1e-9)
        assert res.argmax_set.members == (0,)  # lexicographic tie-break

    def test_only_full_space_qualifies(self):
        pi = stationary(UNIFORM2)
        res = t_large(UNIFORM2, pi, 1.0)
        assert res.value == 0.0
        assert res.argmax_set.members == (0, 1)

    def test_deterministic_cycle(self):
        # every 2-subset is reached in one step from its single outside state
        pi = stationary(CYCLE3)
        res = t_large(CYCLE3, pi, 0.5)
        assert res.value == pytest.approx(1.0, abs=1e-9)
        assert res.argmax_set.members == (0, 1)

    def test_witness_value_recomputed(self):
        P = random_chain(6, 5)
        pi = stationary(P)
        res = t_large(P, pi, 0.4)
        assert res.argmax_set.mass >= 0.4 - 1e-12
        assert hitting_table(P, res.argmax_set).t_plus_all == pytest.approx(res.value, rel=1e-12)

    @pytest.mark.parametrize("seed,eps", [(0, 0.3), (1, 0.5), (2, 0.5), (3, 0.7)])
    def test_against_brute_force(self, seed, eps):
        P = random_chain(4, seed + 200)
        pi = stationary(P)
        res = t_large(P, pi, eps)
        val, _ = brute_force_t_large(P.rows, pi.pi, eps)
        assert res.value == pytest.approx(val, rel=1e-6)

    def test_too_many_states(self):
        P = generate("lazy-cycle", m=21, hold=0.5).matrix
        with pytest.raises(TooManyStatesError):
            t_large(P, stationary(P), 0.5)

    def test_subset_masses(self):
        masses = subset_masses(np.array([0.25, 0.75]))
        assert masses.tolist() == [0.0, 0.25, 0.75, 1.0]


class TestTLargeUpper:
    def test_delegates_for_small_m(self):
        P = random_chain(5, 7)
        pi = stationary(P)
        assert t_large_upper(P, pi, 0.5) == t_large(P, pi, 0.5).value

    def test_single_state(self):
        P = validate([[1.0]])
        assert t_large_upper(P, stationary(P), 0.5) == 0.0

    def test_heuristic_on_large_iid(self):
        # every qualifying B has T(B) = 1/pi(B) <= 1/eps for an IID chain
        rng = np.random.default_rng(3)
        mu = rng.dirichlet(np.full(25, 1.0))
        P = generate("iid", mu=mu).matrix
        pi = stationary(P)
        val = t_large_upper(P, pi, 0.5)
        assert 0.0 < val <= 1 / 0.5 + 1e-6


class TestLemma1:
    def test_uniform_tight(self):
        pi = stationary(UNIFORM2)
        rep = check_lemma1(UNIFORM2, pi, state_set([0]), state_set([1]))
        assert rep.value == pytest.approx(0.5, abs=1e-12)
        assert rep.bound_value == pytest.approx(0.5, abs=1e-12)
        assert rep.holds and not rep.vacuous

    def test_cycle_tight(self):
        pi = stationary(CYCLE3)
        rep = check_lemma1(CYCLE3, pi, state_set([0]), state_set([1]))
        assert rep.metadata["t_plus"] == pytest.approx(1.0, abs=1e-9)
        assert rep.metadata["t_minus"] == pytest.approx(2.0, abs=1e-9)
        assert rep.bound_value == pytest.approx(1 / 3, abs=1e-9)
        assert rep.value == pytest.approx(1 / 3, abs=1e-9)
        assert rep.holds

    def test_overlap_is_vacuous(self):
        pi = stationary(UNIFORM2)
        rep = check_lemma1(UNIFORM2, pi, state_set([0]), state_set([0]))
        assert rep.vacuous

    def test_product_form_recorded(self):
        pi = stationary(CYCLE3)
        rep = check_lemma1(CYCLE3, pi, state_set([0]), state_set([1]))
        assert rep.metadata["product_holds"]
        assert rep.metadata["product_lhs"] <= rep.metadata["product_rhs"] + 1e-9

    @pytest.mark.parametrize("seed", range(10))
    def test_random_chains_random_pairs(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 7))
        P = random_chain(m, seed + 300)
        pi = stationary(P)
        for _ in range(20):
            members = rng.permutation(m)
            cut = int(rng.integers(1, m)) if m > 1 else 1
            a = tuple(sorted(members[:cut].tolist()))
            rest = members[cut:]
            if rest.size == 0:
                continue
            k = int(rng.integers(1, rest.size + 1))
            b = tuple(sorted(rest[:k].tolist()))
            rep = check_lemma1(P, pi, StateSet(a), StateSet(b))
            assert rep.holds, (a, b, rep)


class TestLemma2:
    def test_uniform(self):
        pi = stationary(UNIFORM2)
        rep = check_lemma2(UNIFORM2, pi, state_set([0]))
        assert rep.value == pytest.approx(2.0, abs=1e-9)
        assert rep.bound_value == pytest.approx(8.0, abs=1e-9)
        assert rep.holds

    def test_full_space(self):
        pi = stationary(CYCLE3)
        rep = check_lemma2(CYCLE3, pi, state_set([0, 1, 2]))
        assert rep.value == 0.0
        assert rep.holds

    def test_cycle_singleton(self):
        # T({0}) = 2 and T(0.5) = 1, so the bound is 2 * 1 / (1/3) = 6
        pi = stationary(CYCLE3)
        rep = check_lemma2(CYCLE3, pi, state_set([0]))
        assert rep.value == pytest.approx(2.0, abs=1e-9)
        assert rep.bound_value == pytest.approx(6.0, abs=1e-9)
        assert rep.holds

    def test_single_state_vacuous(self):
        P = validate([[1.0]])
        rep = check_lemma2(P, stationary(P), state_set([0]))
        assert rep.vacuous and rep.holds

    def test_too_many_states(self):
        P = generate("lazy-cycle", m=21, hold=0.5).matrix
        with pytest.raises(TooManyStatesError):
            check_lemma2(P, stationary(P), state_set([0]))

    @pytest.mark.parametrize("seed", range(5))
    def test_random_chains_all_sets(self, seed):
        m = 5
        P = random_chain(m, seed + 400)
        pi = stationary(P)
        for mask in range(1, 1 << m):
            members = tuple(j for j in range(m) if mask >> j & 1)
            rep = check_lemma2(P, pi, StateSet(members))
            assert rep.holds, (members, rep)
            assert rep.metadata["tight_constant"] <= 2.0 + 1e-9
