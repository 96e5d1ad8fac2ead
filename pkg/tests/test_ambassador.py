import numpy as np
import pytest

from netchoice.ambassador import (
    apply_ambassadors,
    brute_force_select,
    extend_cache,
    greedy_select,
    make_cache,
    marginal_gain,
    optimal_ambassador_sets,
    vertex_cover_instance,
)
from netchoice.errors import ModelFormatError, StaleCacheError
from netchoice.model import validate
from netchoice.shares import choice_shares

from conftest import random_model

UNIFORM3 = np.full(3, 1 / 3)


def direct_gain(model, members, agent, target, w):
    """Oracle: recompute both shares from scratch."""
    j = model.choice_index(target)
    before = choice_shares(apply_ambassadors(model, members, target), w)[j]
    after = choice_shares(apply_ambassadors(model, list(members) + [agent], target), w)[j]
    return after - before


class TestApplyAmbassadors:
    def test_empty_set_is_identity(self, example2):
        out = apply_ambassadors(example2, [], "A")
        np.testing.assert_array_equal(out.adoption, example2.adoption)
        np.testing.assert_array_equal(out.direct, example2.direct)

    def test_single_member_rows(self, example2):
        out = apply_ambassadors(example2, ["1"], "A")
        np.testing.assert_array_equal(out.adoption[0], 0.0)
        np.testing.assert_array_equal(out.direct[0], [1.0, 0.0])
        np.testing.assert_array_equal(out.adoption[1:], example2.adoption[1:])
        np.testing.assert_array_equal(out.direct[1:], example2.direct[1:])

    def test_everyone_selected_takes_whole_endowment(self, example2):
        out = apply_ambassadors(example2, ["1", "2", "3"], "A")
        shares = choice_shares(out, UNIFORM3)
        assert shares[0] == pytest.approx(1.0, abs=1e-12)

    def test_preserves_collective_decisiveness(self):
        rng = np.random.default_rng(10)
        for _ in range(30):
            model = random_model(rng)
            size = int(rng.integers(0, model.n_agents + 1))
            members = list(rng.choice(model.agents, size=size, replace=False))
            out = apply_ambassadors(model, members, model.choices[0])
            assert validate(out).satisfies_assumption1

    def test_unknown_ids_rejected(self, example2):
        with pytest.raises(ModelFormatError):
            apply_ambassadors(example2, ["9"], "A")
        with pytest.raises(ModelFormatError):
            apply_ambassadors(example2, ["1"], "Z")


class TestMarginalGain:
    def test_example2_first_pick(self, example2):
        cache = make_cache(example2, frozenset())
        gain = marginal_gain(example2, frozenset(), "1", "A", UNIFORM3, cache)
        base = choice_shares(example2, UNIFORM3)[0]
        expected = choice_shares(apply_ambassadors(example2, ["1"], "A"), UNIFORM3)[0] - base
        assert gain == pytest.approx(expected, abs=1e-12)
        assert gain > 0

    def test_fully_loyal_agent_contributes_nothing(self):
        from netchoice.model import build_model
        model = build_model(
            ["loyal", "other"], ["A", "B"],
            [[0, 0], [0.5, 0]],
            [[1.0, 0.0], [0.25, 0.25]],
        )
        cache = make_cache(model, frozenset())
        gain = marginal_gain(model, frozenset(), "loyal", "A", np.ones(2), cache)
        assert gain == pytest.approx(0.0, abs=1e-14)

    def test_matches_direct_recomputation(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            model = random_model(rng)
            size = int(rng.integers(0, model.n_agents - 1))
            members = frozenset(rng.choice(model.agents, size=size, replace=False))
            candidates = [a for a in model.agents if a not in members]
            agent = str(rng.choice(candidates))
            target = str(rng.choice(model.choices))
            w = rng.random(model.n_agents)
            cache = make_cache(model, members)
            fast = marginal_gain(model, members, agent, target, w, cache)
            slow = direct_gain(model, members, agent, target, w)
            assert fast == pytest.approx(slow, abs=1e-10)
            assert fast >= -1e-12

    def test_stale_cache_rejected(self, example2):
        cache = make_cache(example2, frozenset({"2"}))
        with pytest.raises(StaleCacheError):
            marginal_gain(example2, frozenset(), "1", "A", UNIFORM3, cache)

    def test_member_cannot_be_candidate(self, example2):
        cache = make_cache(example2, frozenset({"2"}))
        with pytest.raises(ValueError, match="already"):
            marginal_gain(example2, frozenset({"2"}), "2", "A", UNIFORM3, cache)

    def test_rank_one_cache_update_matches_rebuild(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            model = random_model(rng)
            agents = list(model.agents)
            rng.shuffle(agents)
            cache = make_cache(model, frozenset())
            members = frozenset()
            for agent in agents[:3]:
                cache = extend_cache(model, cache, agent)
                members = members | {agent}
                rebuilt = make_cache(model, members)
                np.testing.assert_allclose(cache.inverse, rebuilt.inverse, atol=1e-9)


class TestGreedySelect:
    def test_full_budget_takes_everything(self, example2):
        plan = greedy_select(example2, "A", UNIFORM3, 3)
        assert plan.final_share == pytest.approx(1.0, abs=1e-12)
        assert len(plan.selected) == 3

    def test_example2_single_pick_matches_enumeration(self, example2):
        gains = {
            agent: direct_gain(example2, frozenset(), agent, "A", UNIFORM3)
            for agent in example2.agents
        }
        best = max(gains, key=gains.get)
        plan = greedy_select(example2, "A", UNIFORM3, 1)
        assert plan.selected == (best,)
        assert plan.final_share == pytest.approx(
            plan.baseline_share + gains[best], abs=1e-10)

    def test_marginal_gains_nonincreasing(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            model = random_model(rng)
            budget = int(rng.integers(2, model.n_agents + 1))
            plan = greedy_select(model, model.choices[0], rng.random(model.n_agents), budget)
            gains = np.array(plan.marginal_gains)
            assert np.all(gains >= -1e-12)
            assert np.all(np.diff(gains) <= 1e-10)

    def test_final_share_consistency(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            model = random_model(rng)
            w = rng.random(model.n_agents)
            plan = greedy_select(model, model.choices[0], w, 2)
            assert plan.final_share == pytest.approx(
                plan.baseline_share + sum(plan.marginal_gains), abs=1e-9)

    def test_lazy_matches_eager(self):
        rng = np.random.default_rng(15)
        for _ in range(40):
            model = random_model(rng)
            budget = int(rng.integers(1, model.n_agents + 1))
            w = rng.random(model.n_agents)
            target = str(rng.choice(model.choices))
            eager = greedy_select(model, target, w, budget, lazy=False)
            lazy = greedy_select(model, target, w, budget, lazy=True)
            assert lazy.selected == eager.selected
            np.testing.assert_allclose(lazy.marginal_gains, eager.marginal_gains, atol=1e-12)
            assert lazy.evaluations <= eager.evaluations

    def test_lazy_matches_eager_under_ties(self):
        # disconnected identical agents give bit-exact positive ties, so both
        # modes must fall back to declaration order
        from netchoice.model import build_model
        n = 5
        direct = np.tile([0.5, 0.5], (n, 1))
        model = build_model([f"a{i}" for i in range(n)], ["A", "B"],
                            np.zeros((n, n)), direct)
        for budget in (1, 2, 3):
            eager = greedy_select(model, "A", np.ones(n), budget, lazy=False)
            lazy = greedy_select(model, "A", np.ones(n), budget, lazy=True)
            assert eager.selected == tuple(f"a{i}" for i in range(budget))
            assert lazy.selected == eager.selected
            assert eager.marginal_gains == tuple([0.5] * budget)

    def test_budget_bounds(self, example2):
        with pytest.raises(ValueError):
            greedy_select(example2, "A", UNIFORM3, 0)
        with pytest.raises(ValueError):
            greedy_select(example2, "A", UNIFORM3, 4)


class TestMonotonicityAndSubmodularity:
    def test_monotone_in_the_ambassador_set(self):
        rng = np.random.default_rng(16)
        for _ in range(200):
            model = random_model(rng)
            w = rng.random(model.n_agents)
            target = str(rng.choice(model.choices))
            j = model.choice_index(target)
            small = set(rng.choice(model.agents,
                                   size=int(rng.integers(0, model.n_agents)),
                                   replace=False))
            extra = [a for a in model.agents if a not in small]
            big = small | set(rng.choice(extra,
                                         size=int(rng.integers(0, len(extra) + 1)),
                                         replace=False)) if extra else set(small)
            lo = choice_shares(apply_ambassadors(model, small, target), w)[j]
            hi = choice_shares(apply_ambassadors(model, big, target), w)[j]
            assert hi >= lo - 1e-10

    def test_submodular_gains(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            model = random_model(rng)
            w = rng.random(model.n_agents)
            target = str(rng.choice(model.choices))
            agents = list(model.agents)
            rng.shuffle(agents)
            cut1 = int(rng.integers(0, len(agents) - 1))
            cut2 = int(rng.integers(cut1, len(agents) - 1))
            X, Y = frozenset(agents[:cut1]), frozenset(agents[:cut2])
            a = agents[-1]
            gain_x = direct_gain(model, X, a, target, w)
            gain_y = direct_gain(model, Y, a, target, w)
            assert gain_x >= gain_y - 1e-10


class TestBruteForce:
    def test_zero_budget_returns_baseline(self, example2):
        best, value = brute_force_select(example2, "A", UNIFORM3, 0)
        assert best == frozenset()
        assert value == pytest.approx(7 / 15, abs=1e-12)

    def test_matches_greedy_single_pick(self, example2):
        best, value = brute_force_select(example2, "A", UNIFORM3, 1)
        plan = greedy_select(example2, "A", UNIFORM3, 1)
        assert best == frozenset(plan.selected)
        assert value == pytest.approx(plan.final_share, abs=1e-12)

    def test_guard_on_large_instances(self):
        rng = np.random.default_rng(18)
        model = random_model(rng, n_agents=50)
        with pytest.raises(ValueError, match="too large"):
            brute_force_select(model, model.choices[0], np.ones(50), 5)


class TestVertexCoverReduction:
    def test_path_graph(self):
        model = vertex_cover_instance([("1", "2"), ("2", "3")])
        best, value = brute_force_select(model, "alpha", np.ones(3), 1)
        assert best == frozenset({"2"})
        assert value == pytest.approx((3 + 1) / 2, abs=1e-12)

    def test_triangle_any_pair_optimal(self):
        model = vertex_cover_instance([("1", "2"), ("2", "3"), ("1", "3")])
        sets, value = optimal_ambassador_sets(model, "alpha", np.ones(3), 2)
        assert value == pytest.approx((3 + 2) / 2, abs=1e-12)
        assert sorted(sets, key=sorted) == [
            frozenset({"1", "2"}), frozenset({"1", "3"}), frozenset({"2", "3"})]

    def test_single_edge_symmetric(self):
        model = vertex_cover_instance([("u", "v")])
        sets, value = optimal_ambassador_sets(model, "alpha", np.ones(2), 1)
        assert value == pytest.approx((2 + 1) / 2, abs=1e-12)
        assert set(sets) == {frozenset({"u"}), frozenset({"v"})}

    def test_isolated_vertex_selects_second_choice(self):
        model = vertex_cover_instance([("1", "2")], nodes=["1", "2", "3"])
        assert model.direct[model.agent_index("3"), 1] == 1.0
        assert validate(model).satisfies_assumption1

    def test_malformed_edges_rejected(self):
        with pytest.raises(ModelFormatError, match="self-loop"):
            vertex_cover_instance([("1", "1")])
        with pytest.raises(ModelFormatError, match="duplicate"):
            vertex_cover_instance([("1", "2"), ("2", "1")])
        with pytest.raises(ModelFormatError, match="two endpoints"):
            vertex_cover_instance([("1", "2", "3")])
