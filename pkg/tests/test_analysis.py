"""Certification operations: energy balances, regret bounds, recurrence,
divergence, and volume preservation on short scenarios."""

import numpy as np
import pytest

from gamedyn.analysis import (
    adversarial_regret_sweep,
    box_corners,
    check_constant_of_motion,
    check_energy_balance,
    divergence_residual,
    game_supply_series,
    lossless_regret_residual,
    recurrence_report,
    regret_report,
    volume_drift,
)
from gamedyn.dynamics import entropy, escort, half_l2, mix, zero_shift_energy
from gamedyn.games import GameSpec, cyclic_matching_pennies, rock_paper_scissors, uniform_profile
from gamedyn.integrate import (
    AgentSpec,
    IntegratorConfig,
    PiecewiseConstantSignal,
    SystemSpec,
    payoff_from_q,
    simulate,
    simulate_open_loop,
)

HALF_HALF = mix((0.5, entropy()), (0.5, half_l2()))


def random_signal(rng, segments, n, segment=0.5):
    return PiecewiseConstantSignal(rng.uniform(-1, 1, size=(segments, n)), segment=segment)


def open_run(dynamic, signal, n, T=10.0, dt=0.01, q0=None):
    cfg = IntegratorConfig(dt=dt, horizon=T, record_stride=10)
    return simulate_open_loop(dynamic, signal, np.zeros(n) if q0 is None else q0, cfg)


class TestEnergyBalance:
    def test_lossless_on_random_signal(self):
        rng = np.random.default_rng(0)
        traj = open_run(entropy(), random_signal(rng, 20, 3), 3)
        rep = check_energy_balance(traj, shift=np.eye(3)[0], tol=1e-6)
        assert rep.verdict == "lossless"
        assert rep.max_abs < 1e-6

    def test_zero_signal_zero_residual(self):
        sig = PiecewiseConstantSignal(np.zeros((1, 2)), segment=10.0)
        traj = open_run(entropy(), sig, 2)
        rep = check_energy_balance(traj, shift=np.zeros(2))
        np.testing.assert_array_equal(rep.residual, 0.0)
        assert rep.verdict == "lossless"

    def test_corrupted_storage_flags_violation(self):
        rng = np.random.default_rng(1)
        traj = open_run(entropy(), random_signal(rng, 20, 2), 2)
        rep = check_energy_balance(
            traj,
            shift=np.zeros(2),
            storage_fn=lambda q: zero_shift_energy(entropy(), q) + 0.1 * np.linalg.norm(q),
        )
        assert rep.verdict == "violated"

    def test_residual_scales_at_fourth_order(self):
        rng = np.random.default_rng(0)
        vals = 3.0 * rng.uniform(-1, 1, size=(20, 3))
        residuals = []
        for dt in (0.1, 0.05, 0.025):
            sig = PiecewiseConstantSignal(vals, segment=0.5)
            cfg = IntegratorConfig(dt=dt, horizon=10.0)
            traj = simulate_open_loop(entropy(), sig, np.zeros(3), cfg)
            residuals.append(check_energy_balance(traj, shift=np.eye(3)[0]).max_abs)
        assert residuals[0] / residuals[1] >= 8.0
        assert residuals[1] / residuals[2] >= 8.0

    def test_closed_loop_per_agent_balance(self):
        game = cyclic_matching_pennies()
        system = SystemSpec(game, tuple(
            AgentSpec(HALF_HALF, x0=x) for x in ([0.9, 0.1], [0.88, 0.12], [0.4, 0.6])
        ))
        # the projection component crosses active-set kinks here; dt=0.005
        # keeps the quadrature residual comfortably inside the tolerance
        traj = simulate(system, IntegratorConfig(dt=0.005, horizon=20.0))
        for i in range(3):
            rep = check_energy_balance(traj, agent=i, shift=np.full(2, 0.5), tol=1e-6)
            assert rep.verdict == "lossless"


class TestConstantOfMotion:
    def test_conserved_on_short_runs(self):
        game = rock_paper_scissors()
        system = SystemSpec(game, (AgentSpec(entropy(), x0=[0.5, 0.25, 0.25]),
                                   AgentSpec(entropy(), x0=[0.6, 0.3, 0.1])))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=20.0))
        rep = check_constant_of_motion(traj, uniform_profile(game), tol_rel=1e-6)
        assert rep.ok

    def test_start_at_equilibrium_is_flat_minimum(self):
        game = rock_paper_scissors()
        u = np.full(3, 1 / 3)
        system = SystemSpec(game, (AgentSpec(entropy(), x0=u), AgentSpec(entropy(), x0=u)))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=5.0))
        rep = check_constant_of_motion(traj, uniform_profile(game))
        assert rep.max_drift < 1e-12
        assert rep.initial == pytest.approx(0.0, abs=1e-12)

    def test_hypotheses_enforced(self):
        bad = GameSpec((2, 2), {(0, 1): np.eye(2), (1, 0): np.zeros((2, 2))})
        system = SystemSpec(bad, (AgentSpec(entropy(), q0=np.zeros(2)),
                                  AgentSpec(entropy(), q0=np.zeros(2))))
        traj = simulate(system, IntegratorConfig(dt=0.1, horizon=1.0))
        with pytest.raises(ValueError):
            check_constant_of_motion(traj, uniform_profile(bad))
        game = rock_paper_scissors()
        systemset = SystemSpec(game, (AgentSpec(entropy(), q0=np.zeros(3)),
                                      AgentSpec(entropy(), q0=np.zeros(3))))
        traj = simulate(system, IntegratorConfig(dt=0.1, horizon=1.0))
        with pytest.raises(ValueError):
            check_constant_of_motion(
                simulate(systemset, IntegratorConfig(dt=0.1, horizon=1.0)),
                [np.array([1.0, 0.0, 0.0]), np.full(3, 1 / 3)],
            )


class TestRegret:
    def test_zero_signal_zero_regret(self):
        sig = PiecewiseConstantSignal(np.zeros((1, 3)), segment=5.0)
        traj = open_run(HALF_HALF, sig, 3, T=5.0)
        rep = regret_report(traj)[0]
        np.testing.assert_array_equal(rep.regret, 0.0)
        assert rep.ok

    def test_bounded_by_initial_storage(self):
        rng = np.random.default_rng(4)
        for dyn in (entropy(), half_l2(), HALF_HALF):
            traj = open_run(dyn, random_signal(rng, 40, 3), 3, T=20.0)
            rep = regret_report(traj, tol=1e-4)[0]
            assert rep.ok
            assert rep.sup <= rep.bound + 1e-4

    def test_identity_links_regret_to_storage_drop(self):
        rng = np.random.default_rng(5)
        traj = open_run(entropy(), random_signal(rng, 20, 2), 2)
        assert lossless_regret_residual(traj) < 1e-7

    def test_escort_agent_reports_nan_bound(self):
        game = rock_paper_scissors()
        system = SystemSpec(game, (AgentSpec(escort("identity", 3), x0=[0.5, 0.25, 0.25]),
                                   AgentSpec(entropy(), x0=[0.6, 0.3, 0.1])))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=2.0))
        reports = regret_report(traj)
        assert np.isnan(reports[0].bound) and reports[0].ok
        assert np.isfinite(reports[1].bound)


class TestRecurrence:
    def test_stationary_trajectory_flagged(self):
        game = rock_paper_scissors()
        u = np.full(3, 1 / 3)
        system = SystemSpec(game, (AgentSpec(entropy(), x0=u), AgentSpec(entropy(), x0=u)))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=5.0))
        rep = recurrence_report(traj, epsilon=1e-3)
        assert rep.stationary and rep.count == 0

    def test_cyclic_pennies_returns_detected(self):
        game = cyclic_matching_pennies()
        system = SystemSpec(game, tuple(
            AgentSpec(entropy(), x0=x) for x in ([0.9, 0.1], [0.88, 0.12], [0.4, 0.6])
        ))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=30.0))
        rep = recurrence_report(traj, epsilon=1e-2)
        assert rep.count >= 2
        # near-periodic orbit: returns land around t = 11.2 and 22.3
        assert rep.events[0][0] == pytest.approx(11.2, abs=0.5)
        assert rep.events[1][0] == pytest.approx(22.3, abs=0.5)

    def test_dead_time_suppresses_departure_noise(self):
        game = cyclic_matching_pennies()
        system = SystemSpec(game, tuple(
            AgentSpec(entropy(), x0=x) for x in ([0.9, 0.1], [0.88, 0.12], [0.4, 0.6])
        ))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=15.0))
        rep = recurrence_report(traj, epsilon=1.0, dead_time=12.0)
        assert all(t >= 12.0 for t, _ in rep.events)

    def test_return_times_stable_under_dt_halving(self):
        game = cyclic_matching_pennies()
        times = []
        for dt in (0.01, 0.005):
            system = SystemSpec(game, tuple(
                AgentSpec(entropy(), x0=x) for x in ([0.9, 0.1], [0.88, 0.12], [0.4, 0.6])
            ))
            traj = simulate(system, IntegratorConfig(dt=dt, horizon=40.0))
            rep = recurrence_report(traj, epsilon=1e-2)
            times.append([t for t, _ in rep.events])
        assert len(times[0]) == len(times[1])
        for a, b in zip(*times):
            assert abs(a - b) < 1.0


class TestDivergence:
    def test_zero_for_graphical_structure(self):
        rng = np.random.default_rng(6)
        game = rock_paper_scissors()
        system = SystemSpec(game, (AgentSpec(entropy(), q0=np.zeros(3)),
                                   AgentSpec(HALF_HALF, q0=np.zeros(3))))
        for _ in range(20):
            qhat = rng.normal(scale=3, size=6)
            assert divergence_residual(system, qhat) < 1e-8

    def test_points_along_trajectory(self):
        game = rock_paper_scissors()
        system = SystemSpec(game, (AgentSpec(entropy(), x0=[0.5, 0.25, 0.25]),
                                   AgentSpec(entropy(), x0=[0.6, 0.3, 0.1])))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=10.0, record_stride=10))
        qhat = np.concatenate(traj.q, axis=1)
        rng = np.random.default_rng(7)
        for k in rng.integers(0, len(traj.t), size=25):
            assert divergence_residual(system, qhat[k]) < 1e-8

    def test_self_coupling_control_is_nonzero(self):
        # a payoff that reads the agent's own state breaks the structure
        game = rock_paper_scissors()
        system = SystemSpec(game, (AgentSpec(entropy(), q0=np.zeros(3)),
                                   AgentSpec(entropy(), q0=np.zeros(3))))
        base = payoff_from_q(system)

        def self_coupled(qhat):
            return base(qhat) + 0.05 * qhat

        res = divergence_residual(system, np.zeros(6), payoff_fn=self_coupled)
        assert res == pytest.approx(0.3, abs=1e-6)


class TestVolume:
    def make_system(self):
        game = rock_paper_scissors()
        return SystemSpec(game, (AgentSpec(entropy(), x0=[0.5, 0.25, 0.25]),
                                 AgentSpec(entropy(), x0=[0.6, 0.3, 0.1])))

    def test_zero_horizon_preserves_exactly(self):
        rep = volume_drift(self.make_system(), box_corners(np.zeros(4), 1e-3),
                           IntegratorConfig(dt=0.01, horizon=0.0))
        assert rep.ratio == 1.0 and rep.drift == 0.0

    def test_short_horizon_drift_small_and_edge_sensitive(self):
        system = self.make_system()
        rng = np.random.default_rng(8)
        center = rng.normal(scale=0.5, size=4)
        cfg = IntegratorConfig(dt=0.01, horizon=10.0)
        big = volume_drift(system, box_corners(center, 2e-3), cfg)
        small = volume_drift(system, box_corners(center, 1e-3), cfg)
        assert big.drift < 1e-2
        assert small.drift < big.drift

    def test_dissipative_control_contracts(self):
        system = self.make_system()
        rep = volume_drift(
            system, box_corners(np.zeros(4), 1e-3),
            IntegratorConfig(dt=0.01, horizon=5.0),
            extra_field=lambda Q: -0.1 * Q,
        )
        # four contracting directions for five time units: ratio near e^-2
        assert rep.ratio == pytest.approx(np.exp(-2.0), rel=0.05)
        assert rep.ratio < 0.9

    def test_degenerate_simplex_rejected(self):
        corners = np.zeros((5, 4))
        with pytest.raises(ValueError):
            volume_drift(self.make_system(), corners, IntegratorConfig(dt=0.01, horizon=1.0))


class TestGameSupply:
    def test_integrated_supply_vanishes_at_mixed_equilibrium(self):
        game = rock_paper_scissors()
        system = SystemSpec(game, (AgentSpec(entropy(), x0=[0.5, 0.25, 0.25]),
                                   AgentSpec(entropy(), x0=[0.6, 0.3, 0.1])))
        traj = simulate(system, IntegratorConfig(dt=0.01, horizon=20.0))
        series = game_supply_series(traj, uniform_profile(game))
        assert np.abs(series).max() < 1e-6


class TestAdversarialSweep:
    def test_matches_single_open_loop_run(self):
        # one-signal sweep against the public single-run integrator: the two
        # routes must agree sample for sample
        rng = np.random.default_rng(123)
        sweep_rng = np.random.default_rng(99)
        sweep = adversarial_regret_sweep(
            entropy(), 3, 1, sweep_rng, horizon=5.0, dt=0.01, segment=0.5, record_every=0.5
        )
        values = np.random.default_rng(99).uniform(-1, 1, size=(1, 10, 3))
        sig = PiecewiseConstantSignal(values[0], segment=0.5)
        traj = simulate_open_loop(entropy(), sig, np.zeros(3),
                                  IntegratorConfig(dt=0.01, horizon=5.0, record_stride=50))
        assert sweep.sup_regret[0] == pytest.approx(traj.regret(0).max(), abs=1e-12)
        assert sweep.max_identity_residual < 1e-7

    def test_bound_holds_across_dynamics(self):
        rng = np.random.default_rng(11)
        for dyn in (entropy(), half_l2(), HALF_HALF):
            sweep = adversarial_regret_sweep(dyn, 3, 10, rng, horizon=10.0, dt=2e-3)
            assert sweep.ok
            assert sweep.max_identity_residual < 1e-6
