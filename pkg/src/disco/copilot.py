"""Sequence copilot: seed construction from pilot history, partial forward
diffusion, inpainted partial reverse diffusion, per-frame blending, and the
single-step baseline copilot.

The knobs:

  * diffusion ratio ``gamma``   — fraction of levels the seed is noised to
    (and reverse-diffused back from); more means closer to the learned
    policy's expert-like action distribution.
  * inpaint ratio ``rho``       — fraction of those reverse steps that
    overwrite the pilot's observed past actions with their correctly
    re-noised values, harmonizing the plan with pilot intent.
  * blend ratio ``beta_blend``  — convex weight of the live pilot action in
    what actually executes; responsiveness at the cost of autonomy.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import (ActionSequence, NoiseSchedule, ReverseContext,
                        forward_diffuse, make_context, run_reverse)
from .errors import ConfigError, DomainError, ShapeError
from .nn import DenoiserParams

USER_CENTRIC = "user_centric"
HYBRID = "hybrid"
PAST_ONLY = "past_only"
FULL_SEED = "full_seed"


def round_half_up(x: float) -> int:
    """Ratio-to-step-count rounding; banker's rounding would make the
    gamma/rho grids seed-dependent in surprising ways."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class HorizonConfig:
    """Receding-horizon frame counts.

    ``replan >= obs_horizon + delay`` is required for stutter-free coverage;
    construction enforces it unless ``check_tiling=False`` (the scheduler's
    diagnostics deliberately build broken configs to show the gaps).
    """

    obs_horizon: int = 6   # observations conditioned on, and launch cadence
    delay: int = 4         # frames between launching a plan and its availability
    replan: int = 10       # planned actions after the current frame
    frame_ms: int = 100
    check_tiling: bool = True

    def __post_init__(self):
        if min(self.obs_horizon, self.replan) < 1 or self.delay < 0 or self.frame_ms < 1:
            raise ConfigError("horizon counts must be positive (delay >= 0)")
        if self.check_tiling and self.replan < self.obs_horizon + self.delay:
            raise ConfigError(
                f"replan interval {self.replan} < obs horizon {self.obs_horizon} "
                f"+ delay {self.delay}: plans cannot cover every frame"
            )

    @property
    def pred_horizon(self) -> int:
        return self.obs_horizon + self.replan

    @property
    def tiles(self) -> bool:
        return self.replan >= self.obs_horizon + self.delay


@dataclass(frozen=True)
class CopilotConfig:
    gamma_ratio: float = 0.3
    inpaint_ratio: float = 0.5
    blend_ratio: float = 0.0
    anchoring: str = USER_CENTRIC
    inpaint_region: str = PAST_ONLY
    horizon: HorizonConfig = field(default_factory=HorizonConfig)

    def __post_init__(self):
        for name in ("gamma_ratio", "inpaint_ratio", "blend_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        if self.anchoring not in (USER_CENTRIC, HYBRID):
            raise ConfigError(f"unknown anchoring {self.anchoring!r}")
        if self.inpaint_region not in (PAST_ONLY, FULL_SEED):
            raise ConfigError(f"unknown inpaint region {self.inpaint_region!r}")

    def switch_level(self, total_steps: int) -> int:
        """Number of forward (and reverse) diffusion levels applied to the seed."""
        return round_half_up(self.gamma_ratio * total_steps)

    def inpaint_steps(self, total_steps: int) -> int:
        return round_half_up(self.inpaint_ratio * self.switch_level(total_steps))


class UserHistory:
    """Ring buffer of the last ``obs_horizon`` pilot actions, as received.

    Before it is warm, the window left-pads with the earliest action seen.
    Tracks the frame of the latest push so seeds can be frame-aligned.
    """

    def __init__(self, obs_horizon: int, action_dim: int):
        if obs_horizon < 1 or action_dim < 1:
            raise ConfigError("history needs positive horizon and action dim")
        self.obs_horizon = obs_horizon
        self.action_dim = action_dim
        self._buf = []
        self.last_frame = -1

    def push(self, u: np.ndarray, frame: int):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.action_dim,):
            raise ShapeError(f"action shape {u.shape} != ({self.action_dim},)")
        self._buf.append(u.copy())
        if len(self._buf) > self.obs_horizon:
            self._buf.pop(0)
        self.last_frame = frame

    def __len__(self):
        return len(self._buf)

    def snapshot(self) -> "UserHistory":
        """Frozen copy for handing to a concurrently running planner."""
        s = UserHistory(self.obs_horizon, self.action_dim)
        s._buf = [u.copy() for u in self._buf]
        s.last_frame = self.last_frame
        return s

    @property
    def warm(self) -> bool:
        return len(self._buf) >= self.obs_horizon

    def window(self) -> np.ndarray:
        """(obs_horizon, action_dim) window, oldest first, padded if cold."""
        if not self._buf:
            raise ConfigError("history is empty")
        pad = self.obs_horizon - len(self._buf)
        rows = [self._buf[0]] * pad + self._buf
        return np.stack(rows)


class ObservationBuffer:
    """Same ring-buffer/padding discipline for environment observations."""

    def __init__(self, obs_horizon: int, obs_dim: int):
        self.obs_horizon = obs_horizon
        self.obs_dim = obs_dim
        self._buf = []

    def push(self, o: np.ndarray):
        o = np.asarray(o, dtype=float)
        if o.shape != (self.obs_dim,):
            raise ShapeError(f"observation shape {o.shape} != ({self.obs_dim},)")
        self._buf.append(o.copy())
        if len(self._buf) > self.obs_horizon:
            self._buf.pop(0)

    def window(self) -> np.ndarray:
        if not self._buf:
            raise ConfigError("observation buffer is empty")
        pad = self.obs_horizon - len(self._buf)
        rows = [self._buf[0]] * pad + self._buf
        return np.stack(rows)


def build_seed(history: UserHistory, prev_plan, cfg: CopilotConfig) -> ActionSequence:
    """Construct the clean pilot sequence that seeds the diffusion process.

    The past block is always the observed pilot actions. The future block is
    the latest action repeated (user-centric anchoring) or, with hybrid
    anchoring, the previous plan's still-future actions with its last action
    repeated to fill the horizon. Hybrid falls back to user-centric when no
    previous plan exists yet.
    """
    h = cfg.horizon
    t = history.last_frame
    past = history.window()
    rows = list(past)
    if cfg.anchoring == HYBRID and prev_plan is not None:
        if prev_plan.level != 0:
            raise DomainError("previous plan must be fully denoised")
        if prev_plan.frame_origin >= t:
            raise ConfigError("previous plan is not in the past")
        prev = prev_plan.values
        last_idx = prev.shape[0] - 1
        for j in range(1, h.replan + 1):
            idx = (h.obs_horizon - 1) + (t + j - prev_plan.frame_origin)
            rows.append(prev[min(idx, last_idx)])
    else:
        rows.extend([past[-1]] * h.replan)
    return ActionSequence(values=np.stack(rows), level=0, frame_origin=t)


def disco_infer(params: DenoiserParams, obs_window: np.ndarray,
                seed: ActionSequence, cfg: CopilotConfig,
                schedule: NoiseSchedule, rng,
                ctx: ReverseContext = None) -> ActionSequence:
    """Noise the seed partway, then reverse-diffuse it back with the pilot's
    past actions inpainted for the first ``inpaint_steps`` of the descent.

    gamma=0 returns the seed unchanged (and consumes no randomness). With
    rho=1 and the past-only region, the output's past rows equal the seed's
    past rows exactly: the final overwrite happens at level 0 where the
    re-noising is the identity.
    """
    if seed.level != 0:
        raise DomainError("seed must be at level 0")
    if ctx is None:
        ctx = make_context(params, schedule)
    k_sw = cfg.switch_level(schedule.steps)
    if k_sw == 0:
        return seed
    values = seed.values
    eps0 = rng.standard_normal(values.shape)
    x = forward_diffuse(values, k_sw, eps0, schedule)
    k_ip = cfg.inpaint_steps(schedule.steps)
    if cfg.inpaint_region == PAST_ONLY:
        region_rows = cfg.horizon.obs_horizon
    else:
        region_rows = values.shape[0]
    region_len = region_rows * values.shape[1]
    out = run_reverse(
        ctx, obs_window.ravel(), x.ravel(), k_sw, rng,
        n_inpaint=k_ip, region_len=region_len if k_ip else 0,
        seed_region=values.ravel()[:region_len] if k_ip else None,
    )
    return ActionSequence(values=out.reshape(values.shape), level=0,
                          frame_origin=seed.frame_origin)


def blend(u_now: np.ndarray, a_plan: np.ndarray, beta_blend: float,
          box=(-1.0, 1.0)) -> np.ndarray:
    """Convex combination of the live pilot action and the planned action,
    clipped to the environment action box."""
    u_now = np.asarray(u_now, dtype=float)
    a_plan = np.asarray(a_plan, dtype=float)
    if u_now.shape != a_plan.shape:
        raise ShapeError("blend inputs must share a shape")
    if not 0.0 <= beta_blend <= 1.0:
        raise ConfigError(f"blend ratio {beta_blend} outside [0, 1]")
    return np.clip(beta_blend * u_now + (1.0 - beta_blend) * a_plan, box[0], box[1])


def state_based_infer(params1: DenoiserParams, o_t: np.ndarray, u_t: np.ndarray,
                      gamma_ratio: float, schedule: NoiseSchedule, rng,
                      ctx: ReverseContext = None) -> np.ndarray:
    """Single-step baseline: partially noise the lone pilot action, then
    reverse-diffuse it conditioned on the current observation alone. No
    sequence, no inpainting."""
    if not 0.0 <= gamma_ratio <= 1.0:
        raise ConfigError(f"gamma {gamma_ratio} outside [0, 1]")
    if ctx is None:
        ctx = make_context(params1, schedule)
    u_t = np.asarray(u_t, dtype=float)
    k_sw = round_half_up(gamma_ratio * schedule.steps)
    if k_sw == 0:
        return u_t.copy()
    eps0 = rng.standard_normal(u_t.shape)
    x = forward_diffuse(u_t, k_sw, eps0, schedule)
    out = run_reverse(ctx, np.asarray(o_t, dtype=float).ravel(), x.ravel(), k_sw, rng)
    return out.reshape(u_t.shape)
