import json

import numpy as np
import pytest

from sparse_ce.constructions import (
    StitchParams,
    enumhard_high_family,
    enumhard_low_family,
    enumhard_low_game,
    generalized_matching_pennies,
    independent_set_game,
    planted_profile,
    random_graph,
    stitched_game,
)
from sparse_ce.deviations import enumerate_set
from sparse_ce.dynamics import mwu_external, phi_regret_minimizer, self_play
from sparse_ce.equilibria import ce_gap, embed_on_block
from sparse_ce.games import Graph, MixedStrategy, SparseCorrelated, social_welfare
from sparse_ce.lemmas import (
    LemmaVerdict,
    certify_enumhard,
    check_completeness_ne,
    check_conditioning,
    check_enumhard_marginals,
    check_probability_bounds,
    check_stitch_dichotomy,
    extract_independent_set,
    family_certificate,
    query_harness,
    restrict_and_verify_stitched,
    summarize_verdicts,
)

EDGE_GRAPH = Graph(np.array([[1.0, 1.0], [1.0, 1.0]]))  # single edge on 2 nodes


class TestCompleteness:
    def test_planted_instance(self):
        g, planted = random_graph(20, "planted-is", seed=1, k=5)
        verdict = check_completeness_ne(g, planted, gamma=0.01, k=5)
        assert verdict.passed and verdict.hypothesis_met
        assert verdict.measured["welfare"] == pytest.approx(1.002, abs=1e-12)

    def test_edge_inside_set_fails_hypothesis(self):
        verdict = check_completeness_ne(EDGE_GRAPH, [0, 1], gamma=0.1, k=2)
        assert not verdict.hypothesis_met
        assert verdict.passed  # vacuous
        assert verdict.measured["nash_gap"] > 0

    def test_singleton(self):
        g, _ = random_graph(5, "er-half", seed=2)
        verdict = check_completeness_ne(g, [3], gamma=0.2, k=1)
        assert verdict.passed and verdict.hypothesis_met

    def test_wrong_size_rejected(self):
        g, _ = random_graph(5, "er-half", seed=2)
        with pytest.raises(ValueError, match="equal k"):
            check_completeness_ne(g, [0, 1], gamma=0.1, k=3)


def perturbed_planted(planted, n2, rho):
    """Planted profile with mass rho moved to another top-block action."""
    base = MixedStrategy.uniform_on(planted, n2).p.copy()
    other = next(i for i in range(n2 // 2) if i not in planted)
    base *= 1 - rho
    base[other] += rho
    x = MixedStrategy(base)
    return SparseCorrelated.product(x, x)


class TestConditioning:
    def setup_method(self):
        self.g, self.planted = random_graph(12, "planted-is", seed=3, k=4)
        self.gamma, self.k = 0.01, 4
        self.game = independent_set_game(self.g, self.k, self.gamma)

    def test_planted_profile(self):
        prof = planted_profile(self.planted, 24)
        verdict = check_conditioning(self.game, self.gamma, self.k, prof)
        assert verdict.hypothesis_met and verdict.conclusion_met

    def test_perturbed_profile_with_high_welfare(self):
        dist = perturbed_planted(self.planted, 24, rho=0.02)
        verdict = check_conditioning(self.game, self.gamma, self.k, dist)
        if verdict.hypothesis_met:  # welfare >= 1 for small rho
            assert verdict.conclusion_met
        assert verdict.measured["welfare"] >= 1.0

    def test_low_welfare_is_vacuous(self):
        n2 = 24
        bottom = MixedStrategy.point(n2 - 1, n2)
        dist = SparseCorrelated.product(bottom, bottom)
        verdict = check_conditioning(self.game, self.gamma, self.k, dist)
        assert not verdict.hypothesis_met
        assert verdict.passed


class TestProbabilityBounds:
    def test_planted_profile(self):
        g, planted = random_graph(16, "planted-is", seed=4, k=4)
        gamma = 1 / (256 * 4)
        game = independent_set_game(g, 4, gamma)
        prof = planted_profile(planted, 32, T=2)
        verdict = check_probability_bounds(game, prof, gamma, 4)
        assert verdict.passed
        assert verdict.measured["product_bound_applicable"]
        assert verdict.measured["max_coordinate"] == pytest.approx(0.25)

    def test_high_gap_disables_product_bound(self):
        g, planted = random_graph(8, "planted-is", seed=5, k=2)
        gamma = 0.01
        game = independent_set_game(g, 2, gamma)
        # Point mass on a single top action: far from equilibrium.
        e0 = MixedStrategy.point(0, 16)
        dist = SparseCorrelated.product(e0, e0)
        verdict = check_probability_bounds(game, dist, gamma, 2)
        assert verdict.measured["eps_ce"] > 1.0 / 4.0
        assert not verdict.measured["product_bound_applicable"]

    def test_support_violation_raises(self):
        g, planted = random_graph(8, "planted-is", seed=5, k=2)
        game = independent_set_game(g, 2, 0.01)
        bottom = MixedStrategy.point(10, 16)
        with pytest.raises(ValueError, match="outside the top block"):
            check_probability_bounds(game, SparseCorrelated.product(bottom, bottom), 0.01, 2)


class TestExtraction:
    def test_planted_extraction(self):
        k, T = 8, 2
        g, planted = random_graph(32, "planted-is", seed=6, k=k)
        gamma = 1 / (256 * k * T**3)
        game = independent_set_game(g, k, gamma)
        prof = planted_profile(planted, 64, T=T)
        S, verdict = extract_independent_set(game, prof, 0, k, gamma, g)
        assert S == planted
        assert verdict.hypothesis_met and verdict.conclusion_met
        assert verdict.measured["set_size"] == 8
        assert verdict.threshold["size_floor"] == pytest.approx(0.25)
        assert verdict.threshold["coordinate_threshold"] == pytest.approx(1 / 256)

    def test_uniform_profile_fails_welfare_hypothesis(self):
        k, T = 2, 1
        g, _ = random_graph(24, "er-half", seed=7)
        gamma = 1 / (256 * k)
        game = independent_set_game(g, k, gamma)
        u = MixedStrategy.uniform_on(range(24), 48)
        dist = SparseCorrelated.product(u, u)
        S, verdict = extract_independent_set(game, dist, 0, k, gamma, g)
        assert not verdict.hypothesis_met
        assert verdict.passed


def stitched_fixture(T=2, eps_prime=0.05, seed=5):
    g, planted = random_graph(3, "planted-is", seed=seed, k=2)
    k_is, gamma = 2, 0.01
    sos = independent_set_game(g, k_is, gamma, rescale=True)
    enum = enumhard_low_game(4, [0, 1, 2, 3])
    k = max(12 * T, int(np.ceil(60 * T / eps_prime)))
    delta = (1 + gamma / k_is) / (2 * k_is)
    params = StitchParams(delta=delta, k=float(k), gamma=gamma, k_is=k_is, T=T)
    stitched = stitched_game(sos, enum, params)
    return g, planted, sos, enum, params, stitched


def bottom_planted(stitched_n, enum_dist):
    half = stitched_n // 2
    bottom = list(range(half, stitched_n))
    return embed_on_block(enum_dist, bottom, bottom, stitched_n)


class TestStitchDichotomy:
    def test_bottom_planted_low_regime(self):
        g, planted, sos, enum, params, stitched = stitched_fixture()
        dist = bottom_planted(
            12,
            SparseCorrelated.product(
                MixedStrategy.uniform_on([0, 1, 2, 3], 6), MixedStrategy.uniform(6), 2
            ),
        )
        verdict = check_stitch_dichotomy(stitched, dist, params.k)
        assert verdict.hypothesis_met and verdict.conclusion_met
        assert verdict.measured["regimes"] == ["low", "low"]

    def test_top_planted_high_regime(self):
        g, planted, sos, enum, params, stitched = stitched_fixture()
        dist = planted_profile(planted, 12, T=2)
        verdict = check_stitch_dichotomy(stitched, dist, params.k)
        assert verdict.hypothesis_met and verdict.conclusion_met
        assert verdict.measured["regimes"] == ["high", "high"]

    def test_half_half_profile_fails_hypothesis(self):
        g, planted, sos, enum, params, stitched = stitched_fixture()
        half_mass = MixedStrategy(np.full(12, 1 / 12))
        dist = SparseCorrelated.product(half_mass, half_mass, 2)
        verdict = check_stitch_dichotomy(stitched, dist, params.k)
        assert not verdict.hypothesis_met  # the coarse gap blows past 1/2
        assert verdict.measured["eps_cce"] > 0.5
        assert verdict.passed
        assert "mixed" in verdict.measured["regimes"]


class TestStitchSoundness:
    def test_exact_bottom_planted(self):
        g, planted, sos, enum, params, stitched = stitched_fixture()
        enum_ce = SparseCorrelated.product(
            MixedStrategy.uniform_on([0, 1, 2, 3], 6), MixedStrategy.uniform(6), 2
        )
        dist = bottom_planted(12, enum_ce)
        verdict = restrict_and_verify_stitched(dist, stitched, enum, 0.05, params.k)
        assert verdict.hypothesis_met and verdict.conclusion_met
        assert verdict.measured["max_top_mass"] == 0.0
        assert verdict.measured["restricted_epsilon"] == pytest.approx(0.0, abs=1e-15)
        assert verdict.measured["marginal_drift"] == 0.0

    def test_dynamics_tail_embedding(self):
        enum = enumhard_low_game(4, [0, 1, 2, 3])
        phi6 = enumerate_set("phi", 6)
        mx, my = phi_regret_minimizer(phi6, 1), phi_regret_minimizer(phi6, 2)
        _, log = self_play(enum, mx, my, 400)
        tail = SparseCorrelated.from_arrays(log.X[-2:], log.Y[-2:])
        g_enum = ce_gap(enum, tail, phi6).epsilon_star
        eps_prime = max(1.05 * g_enum, 1e-3)
        _, _, _, _, params, stitched = stitched_fixture(T=2, eps_prime=eps_prime)
        dist = bottom_planted(12, tail)
        verdict = restrict_and_verify_stitched(dist, stitched, enum, eps_prime, params.k)
        assert verdict.hypothesis_met, verdict.measured
        assert verdict.conclusion_met, verdict.measured

    def test_k_below_threshold_is_vacuous(self):
        g, planted, sos, enum, params, stitched = stitched_fixture()
        enum_ce = SparseCorrelated.product(
            MixedStrategy.uniform_on([0, 1, 2, 3], 6), MixedStrategy.uniform(6), 2
        )
        dist = bottom_planted(12, enum_ce)
        verdict = restrict_and_verify_stitched(dist, stitched, enum, 0.05, k=10.0)
        assert not verdict.hypothesis_met
        assert verdict.passed

    def test_soshard_flag_gates_hypothesis(self):
        # The welfare-soundness premise of the top block is not measurable,
        # so disabling the flag must turn an otherwise-passing verdict vacuous.
        g, planted, sos, enum, params, stitched = stitched_fixture()
        enum_ce = SparseCorrelated.product(
            MixedStrategy.uniform_on([0, 1, 2, 3], 6), MixedStrategy.uniform(6), 2
        )
        dist = bottom_planted(12, enum_ce)
        verdict = restrict_and_verify_stitched(
            dist, stitched, enum, 0.05, params.k, assume_soshard=False
        )
        assert not verdict.hypothesis_met
        assert verdict.passed
        assert verdict.measured["assume_soshard"] is False

    def test_full_top_mass_reported(self):
        g, planted, sos, enum, params, stitched = stitched_fixture()
        dist = planted_profile(planted, 12, T=1)
        with pytest.raises(ZeroDivisionError, match="full top-block mass"):
            restrict_and_verify_stitched(dist, stitched, enum, 0.05, params.k)


class TestEnumhardMarginals:
    def test_low_family_exact_equilibrium(self):
        game = enumhard_low_game(4, [0, 1, 2, 3])
        dist = SparseCorrelated.product(
            MixedStrategy.uniform_on([0, 1, 2, 3], 6), MixedStrategy.uniform(6), 3
        )
        verdict = check_enumhard_marginals("low", game, dist, [0, 1, 2, 3])
        assert verdict.hypothesis_met and verdict.conclusion_met
        assert verdict.measured["l1_distance"] == 0.0

    def test_low_family_dynamics(self):
        game = enumhard_low_game(4, [0, 1, 2, 3])
        phi = enumerate_set("phi", 6)
        mx, my = phi_regret_minimizer(phi, 3), phi_regret_minimizer(phi, 4)
        dist, _ = self_play(game, mx, my, 3000)
        verdict = check_enumhard_marginals("low", game, dist, [0, 1, 2, 3])
        assert verdict.hypothesis_met, verdict.measured  # eps below 1/17
        assert verdict.conclusion_met, verdict.measured

    def test_genmatch_exact(self):
        game = generalized_matching_pennies(4)
        u = MixedStrategy.uniform(4)
        verdict = check_enumhard_marginals(
            "genmatch", game, SparseCorrelated.product(u, u), range(4)
        )
        assert verdict.conclusion_met
        assert verdict.measured["l1_distance"] == 0.0
        assert verdict.threshold["l1_bound"] == 0.0

    def test_high_family_exact(self):
        from sparse_ce.constructions import enumhard_high_game

        game = enumhard_high_game(4, [1, 2])
        u = MixedStrategy.uniform_on([1, 2], 4)
        verdict = check_enumhard_marginals("high", game, SparseCorrelated.product(u, u), [1, 2])
        assert verdict.hypothesis_met and verdict.conclusion_met

    def test_unknown_kind(self):
        game = generalized_matching_pennies(2)
        u = MixedStrategy.uniform(2)
        with pytest.raises(ValueError, match="kind"):
            check_enumhard_marginals("medium", game, SparseCorrelated.product(u, u), [0, 1])


class TestQueryHarness:
    def setup_method(self):
        self.family = enumhard_high_family(4)
        self.eps = 1.0 / 256.0

    def test_family_is_distinct(self):
        cert = certify_enumhard(self.family, self.eps)
        assert cert["distinct"]
        assert cert["min_cross_gap"] > self.eps

    def test_certificates_accepted_by_own_game(self):
        from sparse_ce.equilibria import Verdict, verification_oracle

        phi = enumerate_set("phi", 4)
        for key, game in self.family.games:
            cert = family_certificate(self.family, key)
            assert verification_oracle(game, cert, self.eps, phi) is Verdict.ACCEPT

    def test_fixed_order_counts_position(self):
        hidden = self.family.keys[4]
        queries, found = query_harness(
            self.family, hidden, self.eps, strategy="fixed", verify_distinct=False
        )
        assert found and queries == 5

    def test_random_order_mean(self):
        hidden = self.family.keys[7]
        counts = [
            query_harness(
                self.family, hidden, self.eps, strategy="random", seed=s, verify_distinct=False
            )[0]
            for s in range(200)
        ]
        assert 6.0 <= np.mean(counts) <= 10.0

    def test_low_family_certificates(self):
        family = enumhard_low_family(4, packed=True, min_l1=1.0)
        cert = certify_enumhard(family, 0.05)
        assert cert["distinct"]

    def test_unknown_hidden(self):
        with pytest.raises(KeyError):
            query_harness(self.family, "9,9", self.eps)


class TestVerdictPlumbing:
    def test_jsonl_round_trip(self):
        g, planted = random_graph(10, "planted-is", seed=8, k=3)
        verdict = check_completeness_ne(g, planted, gamma=0.05, k=3)
        line = verdict.to_jsonl()
        obj = json.loads(line)
        assert obj["lemma_id"] == "completeness-ne"
        assert obj["passed"] is True

    def test_summary_csv(self):
        g, planted = random_graph(10, "planted-is", seed=8, k=3)
        good = check_completeness_ne(g, planted, gamma=0.05, k=3)
        vacuous = check_completeness_ne(EDGE_GRAPH, [0, 1], gamma=0.05, k=2)
        csv_text = summarize_verdicts([good, good, vacuous])
        lines = csv_text.strip().splitlines()
        assert lines[0] == "lemma_id,trials,passes,worst_slack"
        assert lines[1].startswith("completeness-ne,3,3,")
