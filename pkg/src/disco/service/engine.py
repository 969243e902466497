"""Session engine: the deterministic core of a live cockpit session.

The engine is synchronous and clock-agnostic: the network layer (or a test)
feeds it messages via handle_message() and drives time via advance_frame(),
one call per frame. That keeps the live loop on exactly the same scheduler
and RNG contract as batch evaluation, so a recorded live trial replays
bit-exactly through the batch replayer.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..copilot import CopilotConfig, HorizonConfig
from ..envs import get_env
from ..errors import ConfigError
from ..harness.episodes import TERMINAL_EVENTS, _make_planner, _Runtime
from ..harness.records import (EpisodeRecord, TraceFrame, config_to_dict,
                               corruption_to_dict, obs_digest)
from ..harness.sweep import horizon_for_checkpoint
from ..kernels import backend_name
from ..pilots import CORRUPTION_VARIANTS, NONE, STANDARD, CorruptionModel, Corruptor
from ..scheduler import DISCO, NO_COPILOT, STATE_BASED, Controller
from ..envs import evaluate_outcome
from .protocol import error_msg, parse_client_message

log = logging.getLogger(__name__)

GOAL_PROMPTS = {
    "drive4": {
        "u_turn": "Make a U-turn and drive back to the south end",
        "left": "Turn left and drive to the west end",
        "right": "Turn right and drive to the east end",
        "straight": "Drive straight through to the north end",
    },
    "reach2": {
        "target_A": "Reach target A (left disc) and close the gripper",
        "target_B": "Reach target B (right disc) and close the gripper",
    },
}

AWAIT_HELLO = "await_hello"
IDLE = "idle"
IN_TRIAL = "in_trial"


@dataclass
class _Trial:
    trial_id: str
    seed: int
    env: object
    state: object
    goal: str
    condition: str
    cfg: CopilotConfig
    corr_model: object
    controller: Controller
    corruptor: object
    frame: int = -1
    trace: list = None
    frame_events: list = None
    latest_input: np.ndarray = None
    done: bool = False


class SessionEngine:
    """One pilot's session: trials, frame loop, persistence."""

    def __init__(self, ck, ck1, session_seed: int, record_sink=None,
                 participant: str = ""):
        self.ck = ck
        self.ck1 = ck1
        self.session_seed = session_seed
        self.record_sink = record_sink  # callable(EpisodeRecord)
        self.participant = participant
        self.phase = AWAIT_HELLO
        self.trial_count = 0
        self.trial: _Trial = None
        self._finished: EpisodeRecord = None  # awaiting survey
        self._rt = _Runtime()
        self._condition_rng = None

    # -- message handling --------------------------------------------------

    def handle_message(self, raw) -> list:
        try:
            msg = parse_client_message(raw)
        except ConfigError as exc:
            out = [error_msg("bad_message", str(exc))]
            if self.trial is not None and not self.trial.done:
                out.extend(self._abort_trial("protocol violation"))
            return out
        tag = msg["tag"]
        if self.phase == AWAIT_HELLO and tag != "hello":
            return [error_msg("bad_sequence", "hello must come first")]
        handler = getattr(self, f"_on_{tag}")
        try:
            return handler(msg)
        except ConfigError as exc:
            return [error_msg("bad_config", str(exc))]

    def _on_hello(self, msg) -> list:
        if self.phase != AWAIT_HELLO:
            return [error_msg("bad_sequence", "already greeted")]
        self.participant = str(msg["participant"])
        self.phase = IDLE
        self._condition_rng = rngmod.stream(self.session_seed, "conditions")
        self._condition_block = []
        return []

    def _next_condition(self) -> str:
        """Seeded random interleaving in balanced blocks of the conditions
        the loaded checkpoints support."""
        if not self._condition_block:
            block = [NO_COPILOT]
            if self.ck is not None:
                block.append(DISCO)
            if self.ck1 is not None:
                block.append(STATE_BASED)
            order = self._condition_rng.permutation(len(block))
            self._condition_block = [block[i] for i in order]
        return self._condition_block.pop(0)

    def _on_start_trial(self, msg) -> list:
        if self.trial is not None and not self.trial.done:
            return [error_msg("bad_sequence", "a trial is already running")]
        self._flush_finished()
        default_env = self.ck.env_name if self.ck is not None else None
        env_name = msg.get("env", default_env)
        if env_name is None:
            raise ConfigError("start_trial needs an env (no checkpoint loaded)")
        condition = msg.get("condition") or self._next_condition()
        if condition not in (NO_COPILOT, STATE_BASED, DISCO):
            raise ConfigError(f"unknown condition {condition!r}")
        if condition == STATE_BASED and self.ck1 is None:
            raise ConfigError("no single-step checkpoint loaded")
        if condition == DISCO and self.ck is None:
            raise ConfigError("no sequence checkpoint loaded")
        if condition == DISCO and self.ck.env_name != env_name:
            raise ConfigError(
                f"checkpoint is for {self.ck.env_name}, trial wants {env_name}")
        corruption = msg.get("corruption", STANDARD)
        if corruption not in CORRUPTION_VARIANTS:
            raise ConfigError(f"unknown corruption {corruption!r}")
        if condition in (DISCO,):
            horizon = horizon_for_checkpoint(self.ck)
        else:
            horizon = HorizonConfig()
        cfg = CopilotConfig(
            gamma_ratio=float(msg.get("gamma", 0.3)),
            inpaint_ratio=float(msg.get("rho", 0.5)),
            blend_ratio=float(msg.get("beta", 0.3)),
            anchoring={"user": "user_centric", "hybrid": "hybrid"}.get(
                msg.get("anchor", "user"), msg.get("anchor", "user_centric")),
            horizon=horizon,
        )
        env = get_env(env_name)
        trial_seed = rngmod.derive_seed(self.session_seed, self.participant,
                                        f"trial{self.trial_count}")
        self.trial_count += 1
        state = env.reset(rngmod.stream(trial_seed, "live", "env"))
        corr_model = None if corruption == NONE else CorruptionModel(variant=corruption)
        planner = _make_planner(condition, cfg, self.ck, self.ck1,
                                self._rt, trial_seed, "live")
        controller = Controller(condition, cfg, env.action_dim, env.obs_dim,
                                planner=planner, action_box=env.action_box)
        corruptor = (Corruptor(corr_model, rngmod.stream(trial_seed, "live", "corrupt"))
                     if corr_model else None)
        self.trial = _Trial(
            trial_id=f"{self.participant}-t{self.trial_count - 1}",
            seed=trial_seed, env=env, state=state, goal=state.goal,
            condition=condition, cfg=cfg, corr_model=corr_model,
            controller=controller, corruptor=corruptor,
            trace=[], frame_events=[],
            latest_input=np.zeros(env.action_dim),
        )
        self.phase = IN_TRIAL
        return [{
            "tag": "trial_begin",
            "trial_id": self.trial.trial_id,
            "env": env_name,
            "goal_prompt": GOAL_PROMPTS[env_name][state.goal],
            "frame_ms": cfg.horizon.frame_ms,
            "action_dims": env.action_dim,
        }]

    def _on_input(self, msg) -> list:
        t = self.trial
        if t is None or t.done:
            return [error_msg("bad_sequence", "no active trial")]
        u = np.clip(np.asarray(msg["u"], dtype=float), -1.0, 1.0)
        if u.shape != (t.env.action_dim,):
            return [error_msg("bad_message",
                              f"input has {u.shape[0]} dims, env wants "
                              f"{t.env.action_dim}")]
        if not np.isfinite(u).all():
            return [error_msg("bad_message", "input must be finite")]
        t.latest_input = u
        return []

    def _on_survey(self, msg) -> list:
        if self._finished is None:
            return [error_msg("bad_sequence", "no finished trial awaiting a survey")]
        self._finished.survey = {k: msg[k] for k in ("ease", "control", "effect")}
        self._flush_finished()
        return []

    def _on_end_trial(self, msg) -> list:
        out = []
        if self.trial is not None and not self.trial.done:
            out.extend(self._abort_trial("ended by client"))
        self._flush_finished()
        return out

    # -- frame loop ----------------------------------------------------------

    def advance_frame(self) -> list:
        """One 100 ms frame: corrupt the held input, tick, step, stream state.

        Missing inputs repeat the last one (hold-last); the clock owner calls
        this at the frame cadence regardless of network traffic.
        """
        t = self.trial
        if t is None or t.done:
            return []
        t.frame += 1
        o = t.env.observe(t.state)
        u_raw = t.latest_input.copy()
        u_corr = t.corruptor.step(u_raw) if t.corruptor is not None else u_raw
        executed, info = t.controller.tick(t.frame, u_corr, o)
        t.state, events = t.env.step(t.state, executed)
        t.trace.append(TraceFrame(
            frame=t.frame,
            u_clean=[float(v) for v in u_raw],
            u_corrupt=[float(v) for v in u_corr],
            planned=None if info.planned is None else [float(v) for v in info.planned],
            executed=[float(v) for v in executed],
            obs_digest=obs_digest(o),
        ))
        t.frame_events.append(events)
        budget = t.env.frame_budget
        out = [{
            "tag": "state",
            "frame": t.frame,
            "render": t.env.render_primitives(t.state, t.goal),
            "executed_u": [float(v) for v in executed],
            "hud": {
                "condition": t.condition,
                "gamma": t.cfg.gamma_ratio, "rho": t.cfg.inpaint_ratio,
                "beta": t.cfg.blend_ratio,
                "time_left": max(0.0, (budget - 1 - t.frame)
                                 * t.cfg.horizon.frame_ms / 1000.0),
            },
        }]
        terminal = any(ev[0] in TERMINAL_EVENTS for ev in events)
        if terminal or t.frame + 1 >= budget:
            out.append(self._finish_trial())
        return out

    # -- trial lifecycle -----------------------------------------------------

    def _record_for(self, t: _Trial, outcome) -> EpisodeRecord:
        return EpisodeRecord(
            episode_id=t.trial_id, env=t.env.name, condition=t.condition,
            pilot="live", seed=t.seed, ep_label="live", goal=t.goal,
            config=config_to_dict(t.cfg),
            corruption=corruption_to_dict(t.corr_model),
            ckpt=None, ckpt1=None, backend=backend_name(),
            outcome=outcome,
            time_s=len(t.trace) * t.cfg.horizon.frame_ms / 1000.0,
            stutters=t.controller.stutter_count,
            frame_budget=t.env.frame_budget,
            trace=t.trace,
        )

    def _finish_trial(self) -> dict:
        t = self.trial
        t.done = True
        self.phase = IDLE
        outcome = evaluate_outcome(t.frame_events, t.goal, t.env.frame_budget)
        od = {"result": outcome.result, "frames": outcome.frames,
              "collisions": outcome.collisions}
        self._finished = self._record_for(t, od)
        return {"tag": "trial_result", "outcome": outcome.result,
                "time_s": self._finished.time_s,
                "collisions": outcome.collisions}

    def _abort_trial(self, reason: str) -> list:
        t = self.trial
        t.done = True
        self.phase = IDLE
        od = {"result": "aborted", "frames": len(t.trace), "collisions": 0,
              "reason": reason}
        self._finished = self._record_for(t, od)
        self._flush_finished()
        return []

    def _flush_finished(self):
        if self._finished is not None:
            if self.record_sink is not None:
                self.record_sink(self._finished)
            self._finished = None

    def close(self):
        if self.trial is not None and not self.trial.done:
            self._abort_trial("disconnect")
        self._flush_finished()
