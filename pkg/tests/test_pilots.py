"""Scripted experts and the corruption models."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disco.envs import (SUCCESS, Drive4State, Reach2State, evaluate_outcome,
                        get_env)
from disco.errors import ConfigError
from disco.pilots import (BROKEN_PEDAL, Corruptor, CorruptionModel,
                          Drive4Pilot, Reach2Pilot, corrupt, demo_start,
                          make_pilot)
from disco.rng import stream


class TestCorruption:
    def test_all_probabilities_zero_is_identity(self):
        model = CorruptionModel(delay_prob=0.0, negate_prob=0.0)
        rng = stream(0, "c")
        u = np.array([0.5, -0.2])
        out = corrupt([u], rng, model)
        assert np.array_equal(out, u)

    def test_constant_stream_is_delay_invariant(self):
        model = CorruptionModel(delay_prob=1.0, negate_prob=0.0)
        rng = stream(1, "c")
        hist = [np.array([0.3, 0.3])] * 10
        out = corrupt(hist, rng, model)
        assert np.array_equal(out, hist[-1])

    def test_delay_emits_three_frames_back(self):
        model = CorruptionModel(delay_prob=1.0, negate_prob=0.0)
        hist = [np.array([float(i), 0.0]) for i in range(8)]
        out = corrupt(hist, stream(2, "c"), model)
        assert out[0] == 4.0  # t=7, delayed 3 -> u_4

    def test_prestart_frames_use_earliest(self):
        model = CorruptionModel(delay_prob=1.0, negate_prob=0.0)
        hist = [np.array([9.0, 0.0]), np.array([1.0, 0.0])]
        out = corrupt(hist, stream(3, "c"), model)
        assert out[0] == 9.0

    def test_negation_flips_exactly_one_uniform_coordinate(self):
        model = CorruptionModel(delay_prob=0.0, negate_prob=1.0)
        u = np.array([0.5, -0.2])
        rng = stream(4, "c")
        counts = [0, 0]
        for _ in range(10_000):
            out = corrupt([u], rng, model)
            flipped = [i for i in range(2) if out[i] == -u[i]]
            assert len(flipped) == 1
            counts[flipped[0]] += 1
        assert abs(counts[0] / 10_000 - 0.5) < 0.03

    def test_broken_pedal_zeroes_throttle(self):
        model = CorruptionModel(variant=BROKEN_PEDAL, delay_prob=0.0,
                                negate_prob=0.0, broken_pedal_zero_prob=1.0)
        out = corrupt([np.array([0.7, 0.9])], stream(5, "c"), model)
        assert out[1] == 0.0 and out[0] == 0.7

    def test_calibration_rates(self):
        model = CorruptionModel()
        corr = Corruptor(model, stream(6, "cal"))
        rng = stream(7, "in")
        for _ in range(100_000):
            corr.step(rng.uniform(-1, 1, 2))
        assert abs(corr.delays_applied / corr.frames - 0.95) < 0.005
        assert abs(corr.negations_applied / corr.frames - 0.5) < 0.005

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=2), st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_box_preserved(self, u, seed):
        model = CorruptionModel()
        out = corrupt([np.array(u)], stream(seed, "box"), model)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)

    def test_empty_history_rejected(self):
        with pytest.raises(ConfigError):
            corrupt([], stream(0, "x"), CorruptionModel())

    def test_corruptor_matches_pure_function(self):
        model = CorruptionModel()
        corr = Corruptor(model, stream(8, "par"))
        rng_in = stream(9, "in")
        hist = []
        pure_rng = stream(8, "par")
        for _ in range(50):
            u = rng_in.uniform(-1, 1, 2)
            hist.append(u)
            a = corr.step(u)
            b = corrupt(list(hist), pure_rng, model)
            assert np.array_equal(a, b)


class TestDrive4Pilot:
    def test_near_zero_action_at_terminal(self):
        pilot = Drive4Pilot("straight")
        s = Drive4State(x=0.0, y=42.0, heading=np.pi / 2, speed=0.0, goal="straight")
        u = pilot.action(s)
        assert np.max(np.abs(u)) < 1e-9

    def test_deterministic(self):
        s = Drive4State(x=0.2, y=-25.0, heading=1.5, speed=5.0, goal="left")
        u1 = Drive4Pilot("left").action(s)
        u2 = Drive4Pilot("left").action(s)
        assert np.array_equal(u1, u2)

    def test_unknown_goal_rejected(self):
        with pytest.raises(ConfigError):
            Drive4Pilot("diagonal")

    @pytest.mark.parametrize("envname", ["drive4", "reach2"])
    def test_expert_solvability(self, envname):
        # >= 98% success with zero crashes over randomized starts
        env = get_env(envname)
        n, ok, crashes = 120, 0, 0
        for i in range(n):
            st_ = env.reset(stream(900, f"solv{i}", "env"))
            pilot = make_pilot(envname, st_.goal)
            evs = []
            for _ in range(env.frame_budget):
                st_, events = env.step(st_, pilot.action(st_))
                evs.append(events)
                if any(e[0] in ("crash", "reached", "grasp") for e in events):
                    break
            out = evaluate_outcome(evs, st_.goal, env.frame_budget)
            ok += out.result == SUCCESS
            crashes += out.result == "crash"
            assert out.collisions == 0
        assert ok / n >= 0.98
        assert crashes == 0

    def test_demo_start_states_are_viable(self):
        env = get_env("drive4")
        for i in range(60):
            rng = stream(901, f"ds{i}")
            goal = env.goals[i % 4]
            st_ = demo_start(env, goal, rng)
            assert st_.goal == goal
            pilot = make_pilot("drive4", goal)
            evs = []
            for _ in range(env.frame_budget):
                st_, events = env.step(st_, pilot.action(st_))
                evs.append(events)
                if any(e[0] in ("crash", "reached", "grasp") for e in events):
                    break
            out = evaluate_outcome(evs, goal, env.frame_budget)
            assert out.result == SUCCESS, f"demo start {i} ({goal}) -> {out.result}"


class TestReach2Pilot:
    def test_near_zero_at_grasped_target(self):
        pilot = Reach2Pilot("target_A")
        s = Reach2State(x=0.25, y=0.7, grip=1.0, target_a=(0.25, 0.7),
                        target_b=(0.75, 0.7), goal="target_A")
        u = pilot.action(s)
        assert np.max(np.abs(u)) < 1e-9

    def test_heads_toward_correct_target(self):
        pilot = Reach2Pilot("target_B")
        s = Reach2State(x=0.5, y=0.1, grip=0.0, target_a=(0.25, 0.7),
                        target_b=(0.75, 0.7), goal="target_B")
        u = pilot.action(s)
        assert u[0] > 0 and u[1] > 0


class TestCorruptedCollapse:
    def test_drive4_collapse(self):
        # under the standard model the surrogate pilot must fail hard:
        # qualitative collapse mirroring near-total crash rates
        env = get_env("drive4")
        model = CorruptionModel()
        n, ok, crash = 250, 0, 0
        for i in range(n):
            st_ = env.reset(stream(902, f"cc{i}", "env"))
            pilot = make_pilot("drive4", st_.goal)
            corr = Corruptor(model, stream(902, f"cc{i}", "corrupt"))
            evs = []
            for _ in range(env.frame_budget):
                u = pilot.action(st_)
                st_, events = env.step(st_, corr.step(u))
                evs.append(events)
                if any(e[0] in ("crash", "reached", "grasp") for e in events):
                    break
            out = evaluate_outcome(evs, st_.goal, env.frame_budget)
            ok += out.result == SUCCESS
            crash += out.result == "crash"
        assert crash / n > 0.9
        assert ok / n < 0.1
