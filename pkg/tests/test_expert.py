import math

import pytest

from trileg.actuation import VoltageTriple
from trileg.config import Config
from trileg.errors import InstructionParseError
from trileg.expert import (
    INSTRUCTION_PRESETS,
    LEGAL_TRANSITIONS,
    ExpertPolicy,
    Phase,
    parse_instruction,
    rollout,
)
from trileg.primitives import Kind, Violation
from trileg.robot import Simulator

CONFIG = Config()


class TestParseInstruction:
    def test_bare_keyword(self):
        spec = parse_instruction("SQUAT")
        assert spec.kind is Kind.SQUAT

    def test_keyword_with_argument(self):
        spec = parse_instruction("ROTATE_LEFT 30")
        assert spec.kind is Kind.ROTATE_LEFT and spec.psi_star_deg == 30.0
        spec = parse_instruction("rotate_right 45")
        assert spec.kind is Kind.ROTATE_RIGHT and spec.psi_star_deg == -45.0

    def test_unknown_keyword_position(self):
        with pytest.raises(InstructionParseError) as err:
            parse_instruction("FLY")
        assert err.value.position == 0

    def test_forward_axis(self):
        spec = parse_instruction("FORWARD 10 Y")
        assert spec.kind is Kind.FORWARD and spec.distance_mm == 10.0 and spec.axis == "y"

    def test_lift_variants(self):
        assert parse_instruction("LIFT_BACK_LEG").target_leg == 0
        assert parse_instruction("LIFT_LEG 2").target_leg == 2
        with pytest.raises(InstructionParseError):
            parse_instruction("LIFT_LEG 3")

    def test_standup_maps_to_recovery(self):
        spec = parse_instruction("STAND_UP")
        assert spec.kind is Kind.RECOVERY and spec.stand_up

    def test_bad_arguments(self):
        with pytest.raises(InstructionParseError):
            parse_instruction("ROTATE_LEFT")
        with pytest.raises(InstructionParseError):
            parse_instruction("FORWARD ten")
        with pytest.raises(InstructionParseError):
            parse_instruction("SQUAT 5")
        with pytest.raises(InstructionParseError):
            parse_instruction("")


class TestNextAction:
    def test_squat_ramps_vertical(self):
        sim = Simulator(CONFIG)
        sim.reset()
        policy = ExpertPolicy(parse_instruction("SQUAT"), CONFIG, sim)
        dv, gait = policy.next_action(sim.state)
        assert gait.phase is Phase.CROUCH
        assert dv.vz == CONFIG.actuation.dv_max
        assert dv.vx == 0.0 and dv.vy == 0.0

    def test_rotate_stops_at_target(self):
        sim = Simulator(CONFIG)
        sim.reset()
        policy = ExpertPolicy(parse_instruction("ROTATE_LEFT 30"), CONFIG, sim)
        # pretend we are already at the target heading
        policy.next_action(sim.state)
        sim.state = sim.state
        state = sim.state
        from trileg.robot import replace_state

        at_target = replace_state(state, psi=math.radians(30.0))
        dv, gait = policy.next_action(at_target)
        assert gait.phase in (Phase.RECOVER, Phase.IDLE)
        assert dv == VoltageTriple()

    def test_emitted_dv_always_feasible(self):
        cap = CONFIG.actuation.dv_max
        for text in ["SQUAT", "LIFT_LEG 1", "ROTATE_LEFT 30", "FORWARD 10 X", "STAND_UP"]:
            sim = Simulator(CONFIG)
            sim.reset(seed=5, randomize_pose=True)
            roll = rollout(text, sim, CONFIG)
            assert roll.result.violation is not Violation.SAFETY_GUARD
            for v in roll.voltages:
                assert max(abs(v.vx), abs(v.vy), abs(v.vz)) <= CONFIG.actuation.v_max
            for a, b in zip(roll.voltages, roll.voltages[1:]):
                assert max(abs(b.vx - a.vx), abs(b.vy - a.vy), abs(b.vz - a.vz)) <= cap


class TestRollout:
    def test_squat_succeeds_quickly(self):
        sim = Simulator(CONFIG)
        sim.reset()
        roll = rollout("SQUAT", sim, CONFIG)
        assert roll.result.success and roll.result.steps_used <= 40

    def test_phase_trace_is_legal(self):
        for text in ["SQUAT", "LIFT_LEG 2", "ROTATE_RIGHT 20", "FORWARD 10 X", "STAND_UP"]:
            sim = Simulator(CONFIG)
            sim.reset(seed=2, randomize_pose=True)
            roll = rollout(text, sim, CONFIG)
            trace = [g.phase for g in roll.phases]
            for a, b in zip(trace, trace[1:]):
                assert a == b or (a, b) in LEGAL_TRANSITIONS, (text, a, b)

    def test_forward_decomposition(self):
        sim = Simulator(CONFIG)
        sim.reset(seed=3, randomize_pose=True)
        roll = rollout("FORWARD 10 X", sim, CONFIG)
        trace = [g.phase for g in roll.phases]
        assert trace[0] is Phase.IDLE
        first_swing = trace.index(Phase.SWING_A)
        assert Phase.CROUCH in trace[:first_swing]
        assert Phase.LIFT_A in trace[:first_swing]
        crouch_idx = trace.index(Phase.CROUCH)
        lift_idx = trace.index(Phase.LIFT_A)
        assert crouch_idx < lift_idx < first_swing

    def test_forward_timeout_under_high_friction(self):
        cfg = Config()
        cfg.sim.friction_scale = 10.0
        sim = Simulator(cfg)
        sim.reset()
        roll = rollout("FORWARD 10 X", sim, cfg)
        assert not roll.result.success
        assert roll.result.violation is Violation.TIMEOUT
        final = roll.trajectory[-1]
        assert (final.x, final.y) == (25.0, 25.0)

    def test_recorder_called_per_step(self):
        sim = Simulator(CONFIG)
        sim.reset()
        seen = []
        roll = rollout("SQUAT", sim, CONFIG, recorder=lambda s, v, dv: seen.append(s.t))
        assert seen == [s.t for s in roll.trajectory]

    def test_ten_random_trials_each_primitive(self):
        from trileg.gateway import run_eval

        for kind in ["squat", "lift_leg", "rotate_left", "rotate_right", "forward", "recovery"]:
            row = run_eval(kind, trials=10, config=CONFIG)
            assert row["rate"] >= 0.9, row


class TestPresets:
    def test_three_presets_bundled(self):
        assert set(INSTRUCTION_PRESETS) == {"action_history", "concise", "detailed"}
        assert "<Im0>" in INSTRUCTION_PRESETS["concise"]
        assert "{a1}" in INSTRUCTION_PRESETS["action_history"]
        assert "crouch" in INSTRUCTION_PRESETS["detailed"]
