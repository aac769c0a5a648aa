import numpy as np
import pytest

from sparse_ce.constructions import generalized_matching_pennies
from sparse_ce.deviations import Deviation, DeviationSet, as_stochastic_matrix, enumerate_set
from sparse_ce.dynamics import (
    ConstantPlay,
    RunLog,
    mwu_external,
    phi_regret,
    phi_regret_minimizer,
    regret_to_ce_certificate,
    self_play,
    stationary_distribution,
)
from sparse_ce.equilibria import ce_gap, verification_oracle, Verdict
from sparse_ce.games import BimatrixGame, MixedStrategy, Player


def random_game(rng, n):
    return BimatrixGame(rng.uniform(-1, 1, (n, n)), rng.uniform(-1, 1, (n, n)))


class TestMwu:
    def test_uniform_before_feedback(self):
        m = mwu_external(5, 0)
        assert np.allclose(m.recommend().p, 0.2)

    def test_constant_utility_concentrates(self):
        m = mwu_external(3, 0)
        last = 1 / 3
        for _ in range(30):
            m.observe(np.array([1.0, 0.0, 0.0]))
            p = m.recommend().p[0]
            assert p >= last - 1e-12
            last = p
        assert last > 0.99

    def test_single_action(self):
        m = mwu_external(1, 0)
        assert np.array_equal(m.recommend().p, [1.0])
        m.observe(np.array([3.0]))
        assert np.array_equal(m.recommend().p, [1.0])

    def test_bad_utility_shape(self):
        m = mwu_external(3, 0)
        with pytest.raises(ValueError):
            m.observe(np.zeros(4))


class TestStationaryDistribution:
    def test_constant_map_fixed_point(self):
        M = as_stochastic_matrix(Deviation.external(1, 3))
        q = stationary_distribution(M)
        assert np.allclose(q, [0.0, 1.0, 0.0], atol=1e-12)

    def test_identity_gives_uniform(self):
        q = stationary_distribution(np.eye(4))
        assert np.allclose(q, 0.25, atol=1e-12)

    def test_periodic_permutation(self):
        P = np.array([[0.0, 1.0], [1.0, 0.0]])
        q = stationary_distribution(P)
        assert np.allclose(q, 0.5, atol=1e-12)

    def test_random_mixtures(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            phi = enumerate_set("phi", n)
            w = rng.dirichlet(np.ones(len(phi)))
            M = np.zeros((n, n))
            for wf, dev in zip(w, phi.devs):
                M += wf * as_stochastic_matrix(dev)
            q = stationary_distribution(M)
            assert q.min() >= 0.0
            assert abs(q.sum() - 1.0) <= 1e-9
            assert np.abs(M @ q - q).sum() <= 1e-9


class TestPhiRegretMinimizer:
    def test_identity_only_stays_uniform(self):
        ident_set = DeviationSet("phi", (Deviation.identity(3),))
        m = phi_regret_minimizer(ident_set, 0)
        for _ in range(5):
            q = m.recommend()
            assert np.allclose(q.p, 1 / 3, atol=1e-12)
            m.observe(np.zeros(3))

    def test_requires_identity(self):
        with pytest.raises(ValueError, match="identity"):
            bad = DeviationSet.__new__(DeviationSet)  # bypass for arg check only
            object.__setattr__(bad, "kind", "phi")
            object.__setattr__(bad, "devs", (Deviation.external(0, 2),))
            phi_regret_minimizer(bad, 0)

    def test_fixed_point_residual_every_round(self):
        rng = np.random.default_rng(18)
        phi = enumerate_set("phi", 4)
        m = phi_regret_minimizer(phi, 0)
        for _ in range(40):
            q = m.recommend()
            assert abs(q.p.sum() - 1.0) <= 1e-12
            m.observe(rng.uniform(-1, 1, 4))

    def test_pennies_regret_regression(self):
        game = generalized_matching_pennies(2)
        phi = enumerate_set("phi", 2)
        mx, my = phi_regret_minimizer(phi, 1), phi_regret_minimizer(phi, 2)
        _, log = self_play(game, mx, my, 500)
        assert phi_regret(log, phi, Player.ROW) / 500 <= 0.2
        assert phi_regret(log, phi, Player.COL) / 500 <= 0.2


class TestSelfPlay:
    def test_single_round_initial_recommendations(self):
        game = generalized_matching_pennies(3)
        dist, log = self_play(game, mwu_external(3, 0), mwu_external(3, 1), 1)
        assert dist.T == 1
        assert np.allclose(dist.xs[0].p, 1 / 3)
        assert np.allclose(dist.ys[0].p, 1 / 3)

    def test_constant_nash_equilibrium_play(self):
        game = generalized_matching_pennies(2)
        u = MixedStrategy.uniform(2)
        dist, _ = self_play(game, ConstantPlay(u), ConstantPlay(u), 20)
        phi = enumerate_set("phi", 2)
        assert ce_gap(game, dist, phi).epsilon_star == pytest.approx(0.0, abs=1e-15)

    def test_output_accepted_at_measured_regret(self):
        game = generalized_matching_pennies(4)
        phi = enumerate_set("phi", 4)
        mx, my = phi_regret_minimizer(phi, 1), phi_regret_minimizer(phi, 2)
        dist, log = self_play(game, mx, my, 200)
        eps = max(phi_regret(log, phi, Player.ROW), phi_regret(log, phi, Player.COL)) / 200
        assert verification_oracle(game, dist, eps, phi) is Verdict.ACCEPT

    def test_determinism_same_seed(self):
        rng = np.random.default_rng(19)
        game = random_game(rng, 4)
        phi = enumerate_set("phi", 4)

        def run():
            mx, my = phi_regret_minimizer(phi, 7), phi_regret_minimizer(phi, 8)
            return self_play(game, mx, my, 50)[1]

        a, b = run(), run()
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.Y, b.Y)
        assert np.array_equal(a.UX, b.UX)


class TestPhiRegret:
    def test_single_round_external(self):
        log = RunLog(
            np.array([[1.0, 0.0]]),
            np.array([[1.0, 0.0]]),
            np.array([[0.0, 1.0]]),
            np.array([[0.0, 0.0]]),
        )
        assert phi_regret(log, enumerate_set("external", 2), Player.ROW) == pytest.approx(1.0)

    def test_identity_only_zero(self):
        rng = np.random.default_rng(20)
        log = RunLog(
            rng.dirichlet(np.ones(3), 5),
            rng.dirichlet(np.ones(3), 5),
            rng.uniform(-1, 1, (5, 3)),
            rng.uniform(-1, 1, (5, 3)),
        )
        ident_set = DeviationSet("phi", (Deviation.identity(3),))
        assert phi_regret(log, ident_set, Player.ROW) == 0.0

    def test_matches_gap_times_horizon(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            game = random_game(rng, 4)
            phi = enumerate_set("phi", 4)
            mx, my = phi_regret_minimizer(phi, 3), phi_regret_minimizer(phi, 4)
            dist, log = self_play(game, mx, my, 60)
            report = ce_gap(game, dist, phi)
            assert 60 * report.gap_row == pytest.approx(phi_regret(log, phi, Player.ROW), abs=1e-10)
            assert 60 * report.gap_col == pytest.approx(phi_regret(log, phi, Player.COL), abs=1e-10)


class TestRegretCertificate:
    def test_seeded_runs_identity(self):
        rng = np.random.default_rng(22)
        phi = enumerate_set("phi", 5)
        for seed in range(10):
            game = random_game(rng, 5)
            mx, my = phi_regret_minimizer(phi, seed), phi_regret_minimizer(phi, seed + 100)
            _, log = self_play(game, mx, my, 40)
            report = regret_to_ce_certificate(game, log, phi)  # raises on mismatch
            assert report.epsilon_star >= -1e-12

    def test_all_identity_set(self):
        game = generalized_matching_pennies(2)
        ident_set = DeviationSet("phi", (Deviation.identity(2),))
        mx, my = mwu_external(2, 0), mwu_external(2, 1)
        _, log = self_play(game, mx, my, 10)
        report = regret_to_ce_certificate(game, log, ident_set)
        assert report.gap_row == 0.0 == report.gap_col
        assert phi_regret(log, ident_set, Player.ROW) == 0.0

    def test_inconsistent_feedback_rejected(self):
        game = generalized_matching_pennies(2)
        mx, my = mwu_external(2, 0), mwu_external(2, 1)
        _, log = self_play(game, mx, my, 5)
        tampered = RunLog(log.X, log.Y, log.UX + 0.5, log.UY, seed=log.seed)
        with pytest.raises(ValueError, match="feedback"):
            regret_to_ce_certificate(game, tampered, enumerate_set("phi", 2))


class TestRunLog:
    def test_json_round_trip(self):
        game = generalized_matching_pennies(3)
        _, log = self_play(game, mwu_external(3, 5), mwu_external(3, 6), 4)
        back = RunLog.from_json(log.to_json())
        assert np.array_equal(back.X, log.X)
        assert back.seed == log.seed

    def test_csv_shape(self):
        game = generalized_matching_pennies(2)
        _, log = self_play(game, mwu_external(2, 0), mwu_external(2, 1), 3)
        lines = log.to_csv().strip().splitlines()
        assert lines[0].split(",") == ["t", "x_1", "x_2", "y_1", "y_2", "welfare"]
        assert len(lines) == 4

    def test_welfare_reconstruction(self):
        rng = np.random.default_rng(23)
        game = random_game(rng, 3)
        dist, log = self_play(game, mwu_external(3, 0), mwu_external(3, 1), 6)
        direct = [
            x.p @ (game.R + game.C) @ y.p for x, y in zip(dist.xs, dist.ys)
        ]
        assert np.allclose(log.welfare_per_round(), direct, atol=1e-12)
