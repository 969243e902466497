"""Receding-horizon control loop: plan cadence, inference delay, seamless
action-queue coverage, and per-frame blending.

A plan launched at frame t becomes usable after the inference delay and
serves frames [t + delay + 1, t + replan]; launches repeat every
``obs_horizon`` frames. When ``replan >= obs_horizon + delay`` successive
plans tile the frame axis with no gaps — a frame with no planned action
available is a "stutter" and should never occur under a valid config.

The controller is deterministic: in simulated time the inference result is
computed at launch and revealed ``delay`` frames later; in threaded mode the
same computation runs concurrently and must merely finish by the reveal
frame, so both modes produce identical traces for the same seeds.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from .copilot import (CopilotConfig, ObservationBuffer, UserHistory, blend)
from .diffusion import ActionSequence
from .errors import ConfigError

NO_COPILOT = "no_copilot"
STATE_BASED = "state_based"
DISCO = "disco"
AUTONOMOUS = "autonomous"
CONDITIONS = (NO_COPILOT, STATE_BASED, DISCO, AUTONOMOUS)


@dataclass(frozen=True)
class CoverageReport:
    ok: bool
    gap_frames: tuple
    window: tuple  # [start, end] inclusive steady-state frames examined
    cycles: int


def coverage_check(horizon, cycles: int = 12) -> CoverageReport:
    """Symbolically tile plans from a few launch cycles and report gaps.

    Accepts a HorizonConfig or any object with obs_horizon/delay/replan.
    """
    o, d, r = horizon.obs_horizon, horizon.delay, horizon.replan
    if min(o, r) < 1 or d < 0:
        raise ConfigError("invalid horizon")
    covered = set()
    for i in range(cycles):
        t = i * o
        covered.update(range(t + d + 1, t + r + 1))
    start, end = d + 1, (cycles - 1) * o + d
    gaps = tuple(f for f in range(start, end + 1) if f not in covered)
    return CoverageReport(ok=not gaps, gap_frames=gaps, window=(start, end),
                          cycles=cycles)


@dataclass
class PlanTimeline:
    """A plan plus its scheduling envelope."""

    invoked_at: int
    available_at: int
    plan: ActionSequence

    def covers(self, frame: int, replan: int) -> bool:
        return (self.available_at < frame <= self.invoked_at + replan)

    def action_for(self, frame: int, obs_horizon: int):
        idx = obs_horizon - 1 + (frame - self.invoked_at)
        return self.plan.values[idx]


@dataclass
class TickInfo:
    launched: bool = False
    stuttered: bool = False
    warmup: bool = False
    plan_invoked_at: int = None
    planned: np.ndarray = None


class _Pending:
    """At most one inference in flight; sim mode resolves it eagerly."""

    def __init__(self, invoked_at, due, compute, threaded):
        self.invoked_at = invoked_at
        self.due = due
        self.result = None
        self.thread = None
        if threaded:
            def work():
                self.result = compute()
            self.thread = threading.Thread(target=work, daemon=True)
            self.thread.start()
        else:
            self.result = compute()

    def ready(self) -> bool:
        return self.thread is None or not self.thread.is_alive()


class Controller:
    """Per-episode receding-horizon state machine.

    ``planner(history, prev_plan, obs_window, frame) -> ActionSequence`` is
    injected by the harness; it owns all inference randomness (derived from
    the invocation frame, so threaded and simulated execution agree).
    """

    def __init__(self, condition: str, cfg: CopilotConfig, action_dim: int,
                 obs_dim: int, planner=None, action_box=(-1.0, 1.0),
                 threaded: bool = False):
        if condition not in CONDITIONS:
            raise ConfigError(f"unknown condition {condition!r}")
        if condition != NO_COPILOT and planner is None:
            raise ConfigError(f"condition {condition} needs a planner")
        self.condition = condition
        self.cfg = cfg
        self.horizon = cfg.horizon
        self.action_box = action_box
        self.planner = planner
        self.threaded = threaded
        self.history = UserHistory(cfg.horizon.obs_horizon, action_dim)
        self.obs_buffer = ObservationBuffer(cfg.horizon.obs_horizon, obs_dim)
        self.active: list[PlanTimeline] = []
        self.pending: _Pending = None
        self.stutter_count = 0
        self.skipped_launches = 0
        self.last_executed = np.zeros(action_dim)
        self._frame = -1

    # -- internals -------------------------------------------------------

    def _latest_plan(self):
        return self.active[-1] if self.active else None

    def _absorb_pending(self, t: int):
        if self.pending is None or t < self.pending.due:
            return
        if not self.pending.ready():
            return  # inference overran its budget; will be absorbed late
        if self.pending.thread is not None:
            self.pending.thread.join()
        self.active.append(PlanTimeline(
            invoked_at=self.pending.invoked_at,
            available_at=self.pending.due,
            plan=self.pending.result,
        ))
        self.pending = None
        # drop plans whose coverage ended strictly before this frame
        r = self.horizon.replan
        self.active = [p for p in self.active if p.invoked_at + r >= t][-4:]

    def _launch(self, t: int):
        if self.pending is not None:
            self.skipped_launches += 1
            return False
        hist = self.history.snapshot()
        obs = self.obs_buffer.window()
        prev = self._latest_plan()
        prev_plan = prev.plan if prev is not None else None
        planner = self.planner

        def compute():
            return planner(hist, prev_plan, obs, t)

        self.pending = _Pending(t, t + self.horizon.delay, compute, self.threaded)
        return True

    def _plan_action(self, t: int):
        r = self.horizon.replan
        for p in reversed(self.active):
            if p.covers(t, r):
                return p, p.action_for(t, self.horizon.obs_horizon)
        return None, None

    # -- public ----------------------------------------------------------

    def tick(self, t: int, u_t: np.ndarray, o_t: np.ndarray):
        """Advance one frame: ingest input/observation, keep the plan queue
        warm, and return the action to execute."""
        if t != self._frame + 1:
            raise ConfigError(f"frames must advance by 1 (got {t} after {self._frame})")
        self._frame = t
        u_t = np.asarray(u_t, dtype=float)
        self.history.push(u_t, t)
        self.obs_buffer.push(o_t)
        info = TickInfo()

        if self.condition == NO_COPILOT:
            executed = np.clip(u_t, *self.action_box)
            self.last_executed = executed
            return executed, info

        self._absorb_pending(t)
        if t % self.horizon.obs_horizon == 0:
            info.launched = self._launch(t)

        timeline, planned = self._plan_action(t)
        if planned is None:
            if t <= self.horizon.delay:
                info.warmup = True
                executed = np.clip(u_t, *self.action_box)
            else:
                info.stuttered = True
                self.stutter_count += 1
                executed = self.last_executed
        else:
            info.plan_invoked_at = timeline.invoked_at
            info.planned = planned
            if self.condition == AUTONOMOUS:
                executed = np.clip(planned, *self.action_box)
            else:
                executed = blend(u_t, planned, self.cfg.blend_ratio, self.action_box)
        self.last_executed = executed
        return executed, info
