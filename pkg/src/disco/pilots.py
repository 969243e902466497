"""Surrogate pilots: scripted goal-conditioned experts and the input
corruption models used to emulate a degraded control channel.

The experts are deterministic P-controllers over goal-specific waypoint
chains; good enough to generate clean demonstrations and, once corrupted,
to stand in for a struggling human pilot.
"""

import math
from dataclasses import dataclass

import numpy as np

from .envs import (DISC_R, OMEGA_MAX, TERMINAL_CENTERS, Drive4State,
                   Reach2State, wrap_angle)
from .errors import ConfigError

STANDARD = "standard"
BROKEN_PEDAL = "broken_pedal"
NONE = "none"
CORRUPTION_VARIANTS = (STANDARD, BROKEN_PEDAL, NONE)


@dataclass(frozen=True)
class CorruptionModel:
    """Per-frame stochastic corruption: delay, sign-flip, optional pedal cut.

    Each frame, independently: with ``delay_prob`` emit the action from
    ``delay_frames`` ago instead of the current one; then with
    ``negate_prob`` flip the sign of one uniformly chosen coordinate of the
    (possibly delayed) action; the broken-pedal variant additionally zeroes
    the throttle coordinate with ``broken_pedal_zero_prob``.
    """

    variant: str = STANDARD
    delay_prob: float = 0.95
    delay_frames: int = 3
    negate_prob: float = 0.5
    broken_pedal_zero_prob: float = 0.85
    pedal_coord: int = 1

    def __post_init__(self):
        if self.variant not in CORRUPTION_VARIANTS:
            raise ConfigError(f"unknown corruption variant {self.variant!r}")
        for name in ("delay_prob", "negate_prob", "broken_pedal_zero_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} outside [0, 1]")
        if self.delay_frames < 0:
            raise ConfigError("delay_frames must be >= 0")


def corrupt(history, rng, model: CorruptionModel) -> np.ndarray:
    """Corrupt the newest action given the clean history up to now.

    ``history`` holds the clean actions u_0..u_t (at least one); pre-start
    frames resolve to the earliest action. Draw order per frame: delay
    decision, negation decision, negated coordinate (only when negating),
    pedal decision (broken-pedal variant only).
    """
    if len(history) == 0:
        raise ConfigError("corruption needs at least the current action")
    if model.variant == NONE:
        return np.asarray(history[-1], dtype=float).copy()
    t = len(history) - 1
    if rng.random() < model.delay_prob:
        u = np.asarray(history[max(0, t - model.delay_frames)], dtype=float).copy()
    else:
        u = np.asarray(history[t], dtype=float).copy()
    if rng.random() < model.negate_prob:
        i = int(rng.integers(u.shape[0]))
        u[i] = -u[i]
    if model.variant == BROKEN_PEDAL and rng.random() < model.broken_pedal_zero_prob:
        u[model.pedal_coord] = 0.0
    return u


class Corruptor:
    """Stateful wrapper: feeds the rolling clean history through corrupt().

    Keeps counters so calibration tests can check the applied rates.
    """

    def __init__(self, model: CorruptionModel, rng):
        self.model = model
        self.rng = rng
        self._history = []
        self.frames = 0
        self.delays_applied = 0
        self.negations_applied = 0

    def step(self, u_clean: np.ndarray) -> np.ndarray:
        self._history.append(np.asarray(u_clean, dtype=float).copy())
        keep = self.model.delay_frames + 1
        if len(self._history) > keep:
            self._history = self._history[-keep:]
        if self.model.variant == NONE:
            self.frames += 1
            return self._history[-1].copy()
        # mirror corrupt()'s draw order, instrumented
        t = len(self._history) - 1
        if self.rng.random() < self.model.delay_prob:
            u = self._history[max(0, t - self.model.delay_frames)].copy()
            self.delays_applied += 1
        else:
            u = self._history[t].copy()
        if self.rng.random() < self.model.negate_prob:
            i = int(self.rng.integers(u.shape[0]))
            u[i] = -u[i]
            self.negations_applied += 1
        if self.model.variant == BROKEN_PEDAL and \
                self.rng.random() < self.model.broken_pedal_zero_prob:
            u[self.model.pedal_coord] = 0.0
        self.frames += 1
        return u


# --------------------------------------------------------------------------
# scripted experts
# --------------------------------------------------------------------------

# steering feedback is speed-scheduled: firm in the slow turns where the
# geometry is tight, deliberately loose at cruise where the path feedforward
# carries the work — a corrupted command stream random-walks away faster
# than the loose feedback can rein it in
HEADING_GAIN_CRUISE = 0.2
HEADING_GAIN_TURN = 1.4
CROSS_TRACK_GAIN_CRUISE = 0.04
CROSS_TRACK_GAIN_TURN = 0.6
GAIN_V_LO = 2.0      # full turn gains at or below this base speed
GAIN_V_HI = 4.5      # cruise gains at or above
THROTTLE_GAIN = 1.8  # hot: unstable once the input stream lags ~3 frames
CURVE_PREVIEW = 0.8  # meters of feedforward curvature preview
PATH_STEP = 0.25     # route densification resolution (m)

# cruise-speed oscillation along the arms: keeps the throttle channel live
# (so sign flips and the delay always act on a moving command) and makes
# turn entries speed-critical; tapers out at low base speed (turns)
SPEED_OSC_AMP = 1.8
SPEED_OSC_WAVELEN = 14.0

# Two-harmonic slalom weave on the arms. The route demands continuous,
# phase-critical steering: the feedforward oscillates with periods of
# roughly 1.2 s and 0.85 s of travel, so a stream delayed by 300 ms runs
# ~90 and ~127 degrees out of phase, and a sign flip inverts a live
# command. The second harmonic is nearly invisible in position (a few cm)
# but contributes a large share of the command amplitude — cheap margin
# for anything that keeps phase, hopeless for anything that lags. The
# clean pilot tracks both exactly; amplitudes keep the total feedforward
# inside saturation.
WEAVE_AMP = 0.42
WEAVE_WAVELEN = 8.0
WEAVE2_AMP = 0.0
WEAVE2_WAVELEN = 5.5

# (x, y, target speed) chains from the south-arm spawn through the junction.
# Each goal commits to its own approach lane early; the lane offset plus the
# speed profile is what lets an observer (and the learned policy) tell the
# intended goal apart well before the junction.
_DRIVE4_ROUTES = {
    "straight": [(0.0, -34.0, 5.5), (0.0, -16.0, 5.5), (0.0, -6.0, 5.5),
                 (0.0, 6.0, 5.5), (0.0, 20.0, 5.5), (0.0, 42.0, 5.5)],
    "left": [(0.0, -34.0, 5.5), (-0.9, -16.0, 5.5), (-0.9, -8.0, 4.2),
             (-0.9, -1.2, 2.0), (-2.4, 0.3, 2.0), (-8.0, 0.0, 5.5),
             (-42.0, 0.0, 5.5)],
    "right": [(0.0, -34.0, 5.5), (0.9, -16.0, 5.5), (0.9, -8.0, 4.2),
              (0.9, -1.2, 2.0), (2.4, 0.3, 2.0), (8.0, 0.0, 5.5),
              (42.0, 0.0, 5.5)],
    "u_turn": [(0.0, -34.0, 5.5), (1.2, -16.0, 5.0), (1.2, -8.0, 4.0),
               (1.2, -3.0, 1.9), (1.2, -0.6, 1.9), (0.0, 1.5, 1.9),
               (-1.2, -0.6, 1.9), (-1.2, -3.0, 1.9), (-1.2, -8.0, 4.2),
               (0.0, -20.0, 5.5), (0.0, -42.0, 5.5)],
}

REACH_CLOSE_DIST = 0.10  # begin closing the gripper inside this radius
REACH_GAIN = 20.0
GRIP_GAIN = 4.0


class Drive4Pilot:
    """Route follower: curvature feedforward plus weak pose feedback.

    The steering command is dominated by the path's curvature at a short
    preview (exact weave/turn tracking with no phase lag), with low-gain
    heading and cross-track terms pulling residual error out. The split is
    deliberate: feedforward keeps clean commands smooth and predictable
    many frames ahead (what a sequence model must learn, and what survives
    the replan latency), while the corrupted channel — which time-shifts
    and sign-flips the command stream — wrecks exactly the phase alignment
    the feedforward relies on, and the weak feedback cannot save it.
    """

    def __init__(self, goal: str):
        if goal not in _DRIVE4_ROUTES:
            raise ConfigError(f"unknown drive4 goal {goal!r}")
        self.goal = goal
        pts = np.array([(x, y) for x, y, _ in _DRIVE4_ROUTES[goal]])
        spd = np.array([v for _, _, v in _DRIVE4_ROUTES[goal]])
        # round the polyline corners (Chaikin) so path curvature ramps
        # instead of jumping; the expert's steering then varies smoothly,
        # which a sequence model can actually predict
        for _ in range(3):
            new_p = [pts[0]]
            new_v = [spd[0]]
            for i in range(len(pts) - 1):
                q = 0.75 * pts[i] + 0.25 * pts[i + 1]
                r = 0.25 * pts[i] + 0.75 * pts[i + 1]
                new_p.extend([q, r])
                new_v.extend([0.75 * spd[i] + 0.25 * spd[i + 1],
                              0.25 * spd[i] + 0.75 * spd[i + 1]])
            new_p.append(pts[-1])
            new_v.append(spd[-1])
            pts = np.array(new_p)
            spd = np.array(new_v)
        dense_p, dense_v = [], []
        for i in range(len(pts) - 1):
            seg = pts[i + 1] - pts[i]
            n = max(1, int(np.linalg.norm(seg) / PATH_STEP))
            for j in range(n):
                f = j / n
                dense_p.append(pts[i] + f * seg)
                dense_v.append(spd[i] + (spd[i + 1] - spd[i]) * f)
        dense_p.append(pts[-1])
        dense_v.append(spd[-1])
        path = np.array(dense_p)
        arc = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))])
        # sinusoidal weave along the path normal, tapered to zero inside
        # the junction and at the route's ends
        tang = np.gradient(path, axis=0)
        tang /= np.linalg.norm(tang, axis=1, keepdims=True) + 1e-12
        normals = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
        cheb = np.max(np.abs(path), axis=1)
        taper = (np.clip((cheb - 7.0) / 4.0, 0, 1)
                 * np.clip((arc[-1] - arc - 4.0) / 6.0, 0, 1)
                 * np.clip((arc - 12.0) / 6.0, 0, 1))
        offset = (WEAVE_AMP * np.sin(2 * np.pi * arc / WEAVE_WAVELEN)
                  + WEAVE2_AMP * np.sin(2 * np.pi * arc / WEAVE2_WAVELEN)) * taper
        self._path = path + normals * offset[:, None]
        self._speed = np.array(dense_v)
        self._arc = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(self._path, axis=0), axis=1))])
        # tangent angles and smoothed curvature along the (weaved) path
        seg = np.diff(self._path, axis=0)
        theta = np.arctan2(seg[:, 1], seg[:, 0])
        theta = np.append(theta, theta[-1])
        dtheta = np.array([wrap_angle(a) for a in np.diff(theta)])
        ds = np.maximum(np.diff(self._arc), 1e-9)
        kappa = np.append(dtheta / ds, 0.0)
        kernel = np.ones(5) / 5.0
        self._kappa = np.convolve(kappa, kernel, mode="same")
        self._theta = theta
        self._s = None  # arc-length progress; resolved on first action()

    def set_progress(self, s: float):
        """Pin the route progress (used when spawning mid-route)."""
        self._s = float(s)

    def action(self, s: Drive4State) -> np.ndarray:
        pos = np.array([s.x, s.y])
        if math.hypot(*(self._path[-1] - pos)) < 2.0:
            return np.array([0.0, float(np.clip(THROTTLE_GAIN * -s.speed, -1, 1))])
        if self._s is None:
            # first call: episodes begin in the route's first half, so
            # restrict the search there (the u-turn's return leg would
            # otherwise shadow the outbound leg near the spawn)
            n = np.searchsorted(self._arc, 0.6 * self._arc[-1])
            self._s = self._arc[int(np.argmin(
                np.linalg.norm(self._path[:n] - pos, axis=1)))]
        # nearest path point within a forward window (no hairpin shortcuts)
        lo = np.searchsorted(self._arc, self._s - 1.0)
        hi = np.searchsorted(self._arc, self._s + 8.0)
        d = np.linalg.norm(self._path[lo:hi] - pos, axis=1)
        i = lo + int(np.argmin(d))
        self._s = self._arc[i]
        last = len(self._path) - 1
        j = min(np.searchsorted(self._arc, self._s + CURVE_PREVIEW), last)
        steer_ff = s.speed * self._kappa[j] / OMEGA_MAX
        e_heading = wrap_angle(self._theta[i] - s.heading)
        normal = np.array([-math.sin(self._theta[i]), math.cos(self._theta[i])])
        e_cross = float(normal @ (self._path[i] - pos))
        base_v = self._speed[min(j, len(self._speed) - 1)]
        turn_frac = min(max((GAIN_V_HI - base_v) / (GAIN_V_HI - GAIN_V_LO), 0.0), 1.0)
        kh = HEADING_GAIN_CRUISE + (HEADING_GAIN_TURN - HEADING_GAIN_CRUISE) * turn_frac
        kc = CROSS_TRACK_GAIN_CRUISE + (CROSS_TRACK_GAIN_TURN - CROSS_TRACK_GAIN_CRUISE) * turn_frac
        steer_fb = kh * e_heading + kc * e_cross
        osc = SPEED_OSC_AMP * min(max((base_v - 3.5) / 1.5, 0.0), 1.0)
        v_tgt = base_v + osc * math.sin(2 * math.pi * self._s / SPEED_OSC_WAVELEN)
        return np.array([
            float(np.clip(steer_ff + steer_fb, -1.0, 1.0)),
            float(np.clip(THROTTLE_GAIN * (v_tgt - s.speed), -1.0, 1.0)),
        ])


class Reach2Pilot:
    """Proportional reach toward the prompted disc; closes when near."""

    def __init__(self, goal: str):
        if goal not in ("target_A", "target_B"):
            raise ConfigError(f"unknown reach2 goal {goal!r}")
        self.goal = goal

    def action(self, s: Reach2State) -> np.ndarray:
        cx, cy = s.target_a if self.goal == "target_A" else s.target_b
        dx, dy = cx - s.x, cy - s.y
        dist = math.hypot(dx, dy)
        grip_target = 1.0 if dist <= REACH_CLOSE_DIST else 0.0
        return np.array([
            float(np.clip(REACH_GAIN * dx, -1.0, 1.0)),
            float(np.clip(REACH_GAIN * dy, -1.0, 1.0)),
            float(np.clip(GRIP_GAIN * (grip_target - s.grip), -1.0, 1.0)),
        ])


def make_pilot(env_name: str, goal: str):
    if env_name == "drive4":
        return Drive4Pilot(goal)
    if env_name == "reach2":
        return Reach2Pilot(goal)
    raise ConfigError(f"no scripted pilot for env {env_name!r}")


def demo_start(env, goal: str, rng):
    """A randomized starting state for demonstration collection.

    Half the demos start from the regular spawn; the other half start
    mid-route with lateral/heading/speed perturbation, so the dataset
    covers recovery from off-path states — closed-loop execution visits
    such states constantly, and the policy must have seen them.
    """
    import dataclasses

    state = env.reset(rng)
    state = dataclasses.replace(state, goal=goal)
    if rng.random() < 0.5:
        return state
    if env.name == "drive4":
        pilot = Drive4Pilot(goal)
        s = rng.uniform(0.0, 0.55) * pilot._arc[-1]
        i = min(int(np.searchsorted(pilot._arc, s)), len(pilot._path) - 2)
        p = pilot._path[i]
        tangent = pilot._path[i + 1] - pilot._path[i]
        heading = math.atan2(tangent[1], tangent[0])
        normal = np.array([-math.sin(heading), math.cos(heading)])
        pos = p + normal * rng.uniform(-1.0, 1.0)
        return dataclasses.replace(
            state, x=float(pos[0]), y=float(pos[1]),
            heading=wrap_angle(heading + rng.uniform(-0.3, 0.3)),
            speed=float(np.clip(pilot._speed[i] + rng.uniform(-1.5, 1.5), 1.0, 10.0)),
        )
    if env.name == "reach2":
        return dataclasses.replace(
            state, x=float(rng.uniform(0.05, 0.95)),
            y=float(rng.uniform(0.03, 0.65)),
            grip=float(rng.uniform(0.0, 0.3)),
        )
    return state


def expert_action(env_name: str, state, goal: str) -> np.ndarray:
    """Stateless convenience: one clean expert action for (state, goal).

    Episode rollouts should hold a pilot from make_pilot() instead, which
    tracks waypoint progress.
    """
    return make_pilot(env_name, goal).action(state)
