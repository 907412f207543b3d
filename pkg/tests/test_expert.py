"""
Tests for Expert Dispatch

Unit tests for the dispatch MILP, the receding-horizon driver and demonstration rollouts.
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from grid_dispatch.bess.battery import BatterySpec, step_soc
from grid_dispatch.env.dispatch_env import DispatchEnv
from grid_dispatch.exceptions import UnplacedBatteryError
from grid_dispatch.expert.demonstrations import ExpertPolicy, generate_demonstrations
from grid_dispatch.expert.dispatcher import DispatchStatus, solve_dispatch, solve_receding_horizon
from grid_dispatch.expert.problem import DispatchProblem, build_problem
from grid_dispatch.grid.feeder import feeder_from_dict
from grid_dispatch.grid.power_flow import count_violations, solve_linear
from grid_dispatch.lp.branch_and_bound import solve_milp
from grid_dispatch.lp.problem import verify_solution
from grid_dispatch.market.settlement import MarketAccount

FOUR_SECONDS = 4.0 / 3600.0


def dispatch(feeder, specs, instructions, account, prices=None, **kwargs):
    instructions = np.atleast_1d(np.asarray(instructions, dtype=float))
    if prices is None:
        prices = np.full(instructions.shape, 0.5)
    return DispatchProblem(
        feeder=feeder,
        specs=specs,
        energies=[spec.e_initial for spec in specs],
        duration_h=FOUR_SECONDS,
        instructions=instructions,
        prices=prices,
        account=account,
        **kwargs,
    )


class TestDispatchProblem:
    """Test cases for build_problem"""

    def test_variable_count(self, four_node_feeder):
        """Test splits, energies, capacity and per-step network variables"""
        specs = [BatterySpec(id="b1", node="3", phase="a"), BatterySpec(id="b2", node="4", phase="a")]
        dp = dispatch(four_node_feeder, specs, [0.2, -0.2], MarketAccount(capacity_kw=10.0))
        problem, pairs, layout = build_problem(dp)

        assert problem.n_vars == 31
        assert len(pairs) == 8
        assert layout.p_plus.shape == (2, 2)
        assert problem.names[layout.capacity] == "capacity"

    def test_shape_validation(self, four_node_feeder):
        """Test energies must match the fleet"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        with pytest.raises(ValueError):
            DispatchProblem(feeder=four_node_feeder, specs=specs, energies=[1.0, 2.0],
                            duration_h=FOUR_SECONDS, instructions=[0.1], prices=[0.5],
                            account=MarketAccount(capacity_kw=10.0))

    def test_unplaced_battery(self, four_node_feeder):
        """Test a battery on a missing phase is refused"""
        specs = [BatterySpec(id="b1", node="4", phase="b")]
        with pytest.raises(UnplacedBatteryError):
            build_problem(dispatch(four_node_feeder, specs, [0.1], MarketAccount(capacity_kw=10.0)))


class TestSolveDispatch:
    """Test cases for solve_dispatch"""

    def test_single_battery_tracks_target(self, four_node_feeder):
        """Test one battery follows C * r within the tolerance"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        account = MarketAccount(capacity_kw=10.0)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [0.5], account))

        assert schedule.status == DispatchStatus.OPTIMAL
        assert abs(schedule.power_kw[0, 0] - 5.0) <= account.tolerance_kw + 1e-9
        assert schedule.charging_powers(0)[0] == pytest.approx(-schedule.power_kw[0, 0])

    def test_priority_orders_batteries(self, four_node_feeder):
        """Test the higher-priority battery takes the whole band"""
        specs = [
            BatterySpec(id="b1", node="3", phase="a", priority=1.0),
            BatterySpec(id="b2", node="4", phase="a", priority=0.5),
        ]
        account = MarketAccount(capacity_kw=10.0, tolerance_kw=0.2)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [0.5], account))

        assert schedule.optimal
        assert schedule.power_kw[0, 0] == pytest.approx(5.2, abs=1e-6)
        assert schedule.power_kw[1, 0] == pytest.approx(0.0, abs=1e-6)

    def test_charging_target(self, four_node_feeder):
        """Test a negative instruction charges the fleet"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        account = MarketAccount(capacity_kw=10.0, tolerance_kw=0.0)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [-0.3], account))
        assert schedule.power_kw[0, 0] == pytest.approx(-3.0, abs=1e-6)

    def test_target_beyond_ratings(self, four_node_feeder):
        """Test an unreachable target is infeasible"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [1.0], MarketAccount(capacity_kw=30.0)))
        assert schedule.status == DispatchStatus.INFEASIBLE
        assert schedule.power_kw is None

    def test_zero_target_idles(self, four_node_feeder):
        """Test a zero instruction with no tolerance leaves every battery idle"""
        specs = [BatterySpec(id="b1", node="3", phase="a"), BatterySpec(id="b2", node="4", phase="a")]
        account = MarketAccount(capacity_kw=10.0, tolerance_kw=0.0)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [0.0], account))
        assert schedule.optimal
        np.testing.assert_allclose(schedule.power_kw, 0.0, atol=1e-9)

    def test_weak_line_is_infeasible(self, feeder_document):
        """Test a dispatch that cannot keep voltages inside limits is infeasible"""
        feeder = feeder_from_dict(feeder_document(r=1.0, x=1.0))
        specs = [BatterySpec(id="b1", node="2", phase="a")]
        schedule = solve_dispatch(dispatch(feeder, specs, [1.0], MarketAccount(capacity_kw=10.0)))
        assert schedule.status == DispatchStatus.INFEASIBLE

    def test_performance_gate(self, four_node_feeder):
        """Test a poor performance record blocks dispatch"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        account = MarketAccount(capacity_kw=10.0, rho_min=0.4)
        account.record(0.1)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [0.5], account))
        assert schedule.status == DispatchStatus.PERFORMANCE_GATED
        assert not schedule.optimal

    def test_voltages_safe_on_benchmark(self, thirteen_node_feeder, benchmark_fleet):
        """Test re-simulating the schedule stays inside the voltage band"""
        account = MarketAccount(capacity_kw=20.0)
        for r in (0.8, -0.8):
            schedule = solve_dispatch(dispatch(thirteen_node_feeder, benchmark_fleet, [r], account))
            assert schedule.optimal
            solution = solve_linear(thirteen_node_feeder, schedule.injections(thirteen_node_feeder, benchmark_fleet))
            assert count_violations(solution) == 0
            assert np.sum(schedule.power_kw[:, 0]) == pytest.approx(20.0 * r, abs=account.tolerance_kw + 1e-6)

    def test_energy_trajectory(self, four_node_feeder):
        """Test scheduled energies follow the SoC update"""
        spec = BatterySpec(id="b1", node="4", phase="a")
        account = MarketAccount(capacity_kw=10.0)
        schedule = solve_dispatch(dispatch(four_node_feeder, [spec], [0.5, -0.4, 0.1], account))

        energy = spec.e_initial
        for t in range(3):
            energy = step_soc(spec, energy, schedule.charging_powers(t)[0], FOUR_SECONDS)
            assert schedule.energies_kwh[0, t] == pytest.approx(energy, abs=1e-9)

    def test_complementarity(self, four_node_feeder):
        """Test no battery charges and discharges in the same step"""
        specs = [BatterySpec(id="b1", node="3", phase="a"), BatterySpec(id="b2", node="4", phase="a")]
        dp = dispatch(four_node_feeder, specs, [0.7, -0.2], MarketAccount(capacity_kw=12.0))
        problem, pairs, _ = build_problem(dp)
        schedule = solve_dispatch(dp)
        assert schedule.optimal
        assert schedule.nodes >= 1
        assert len(pairs) == 8
        assert schedule.voltages_sq.shape == (2, four_node_feeder.n_nodes, 3)

    def test_capacity_sizing(self, four_node_feeder):
        """Test capacity sizing commits the whole cap when the fleet can follow it"""
        specs = [BatterySpec(id="b1", node="3", phase="a"), BatterySpec(id="b2", node="4", phase="a")]
        account = MarketAccount(capacity_kw=10.0, capacity_cap_kw=20.0, tolerance_kw=0.2)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [1.0], account, size_capacity=True))
        assert schedule.optimal
        assert schedule.capacity_kw == pytest.approx(20.0, abs=0.3)

    def test_schedule_frame(self, four_node_feeder):
        """Test the schedule table layout"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [0.5, 0.5], MarketAccount(capacity_kw=10.0)))
        frame = schedule.to_frame(offset=10)
        assert list(frame.columns) == ["t", "battery", "p_kw"]
        assert list(frame["t"]) == [10, 11]

    def test_solution_is_feasible_for_lp(self, four_node_feeder):
        """Test the optimal split satisfies every row of the built problem"""
        specs = [BatterySpec(id="b1", node="2", phase="a"), BatterySpec(id="b2", node="4", phase="a")]
        problem, pairs, _ = build_problem(dispatch(four_node_feeder, specs, [0.3], MarketAccount(capacity_kw=15.0)))
        solution = solve_milp(problem, pairs)
        assert verify_solution(problem, solution.x, row_tol=1e-6, bound_tol=1e-8) == []

    def test_fleet_follows_small_charging_instructions(self, thirteen_node_feeder, benchmark_fleet):
        """Test every battery charges or idles when the instruction asks the fleet to charge"""
        account = MarketAccount(capacity_kw=20.0)
        for r in (-0.0268, -0.39):
            schedule = solve_dispatch(dispatch(thirteen_node_feeder, benchmark_fleet, [r], account))
            assert schedule.optimal
            power = schedule.power_kw[:, 0]
            assert np.all(power <= 1e-9)
            assert np.sum(power) < 0.0
            assert np.sum(power) == pytest.approx(20.0 * r, abs=account.tolerance_kw + 1e-6)

    def test_fleet_direction_per_step(self, four_node_feeder):
        """Test no step mixes charging and discharging batteries"""
        specs = [
            BatterySpec(id="b1", node="2", phase="a", priority=0.3),
            BatterySpec(id="b2", node="3", phase="a", priority=1.0, initial_soc=0.85),
            BatterySpec(id="b3", node="4", phase="a", priority=0.7, initial_soc=0.15),
        ]
        account = MarketAccount(capacity_kw=15.0, tolerance_kw=1.5)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [0.05, -0.05, 0.4, -0.6], account))
        assert schedule.optimal
        for t in range(4):
            power = schedule.power_kw[:, t]
            assert not (np.any(power > 1e-9) and np.any(power < -1e-9))

    def test_energy_budget_binds(self, four_node_feeder):
        """Test a tight throughput budget caps one battery and the rest of the fleet covers the band"""
        budget = 0.005
        specs = [
            BatterySpec(id="b1", node="3", phase="a", priority=1.0, energy_budget_kwh=budget),
            BatterySpec(id="b2", node="4", phase="a", priority=0.5),
        ]
        account = MarketAccount(capacity_kw=10.0, tolerance_kw=0.2)
        schedule = solve_dispatch(dispatch(four_node_feeder, specs, [0.5, 0.5], account))
        assert schedule.optimal

        eta = specs[0].efficiency
        power = schedule.power_kw[0]
        throughput = np.sum(FOUR_SECONDS / eta * np.clip(power, 0.0, None)
                            + eta * FOUR_SECONDS * np.clip(-power, 0.0, None))
        assert throughput <= budget + 1e-9
        assert throughput == pytest.approx(budget, abs=1e-9)
        assert np.all(schedule.power_kw[1] > 0.0)
        np.testing.assert_allclose(schedule.power_kw.sum(axis=0), 5.2, atol=1e-6)

        unbudgeted = solve_dispatch(dispatch(four_node_feeder, [replace(specs[0], energy_budget_kwh=None), specs[1]],
                                             [0.5, 0.5], account))
        assert np.sum(FOUR_SECONDS / eta * unbudgeted.power_kw[0]) > budget


class TestRecedingHorizon:
    """Test cases for solve_receding_horizon"""

    def test_constant_signal(self, four_node_feeder, constant_scenario):
        """Test every step is solved and revenue accrues"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        scenario = constant_scenario(instruction=0.5, price=0.5, steps=4)
        result = solve_receding_horizon(four_node_feeder, specs, scenario, MarketAccount(capacity_kw=10.0),
                                        horizon=2)

        assert result.statuses == [DispatchStatus.OPTIMAL] * 4
        assert result.power_kw.shape == (1, 4)
        assert result.violations == 0
        assert result.revenue == pytest.approx(4 * 0.5 * 10.0 * scenario.duration_h, rel=0.05)
        assert len(result.to_frame()) == 4

    def test_infeasible_steps_hold_idle(self, four_node_feeder, constant_scenario):
        """Test infeasible steps apply zero power"""
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        scenario = constant_scenario(instruction=1.0, steps=2)
        result = solve_receding_horizon(four_node_feeder, specs, scenario, MarketAccount(capacity_kw=30.0))
        assert result.statuses[0] == DispatchStatus.INFEASIBLE
        np.testing.assert_allclose(result.power_kw, 0.0)


class TestDemonstrations:
    """Test cases for the expert policy inside the environment"""

    @pytest.fixture
    def env(self, four_node_feeder, constant_scenario):
        specs = [BatterySpec(id="b1", node="4", phase="a")]
        return DispatchEnv(four_node_feeder, specs, constant_scenario(instruction=0.5, steps=3),
                           MarketAccount(capacity_kw=10.0), episode_steps=3, random_offset=False)

    def test_expert_action_tracks(self, env):
        """Test the expert action earns near-perfect performance"""
        env.reset(seed=0)
        policy = ExpertPolicy()
        decision = policy.decide(env)
        assert decision.feasible
        _, _, _, _, info = env.step(decision.action)
        assert info["performance"] >= 0.95
        assert policy.mean_solve_time > 0

    def test_generate_demonstrations(self, env):
        """Test every feasible expert step becomes a +1 demonstration"""
        transitions = generate_demonstrations(env, episodes=2, seed=5)
        assert len(transitions) == 6
        assert all(tr.demo and tr.reward == 1.0 for tr in transitions)
        assert transitions[2].done and not transitions[0].done
        assert transitions[0].state.shape == (env.obs_dim,)

    def test_invalid_horizon(self):
        """Test the look-ahead must be positive"""
        with pytest.raises(ValueError):
            ExpertPolicy(horizon=0)
