"""Desk-scale task environments.

drive4 — a 2-D four-exit intersection: the car spawns on the south arm and
must execute one of {u_turn, left, right, straight}, i.e. reach the matching
arm's terminal zone without leaving the road.

reach2 — a planar reach-and-grasp: the effector must enter the prompted
target disc and close the gripper; entering any disc with the gripper wide
open, or pressing against the workspace boundary, counts as a collision
(debounced to one count per contiguous contact).

Observations never include the assigned goal: the policy must stay
goal-agnostic, with pilot intent entering only through actions.

Dynamics are deterministic; randomness appears only in reset(). States are
immutable records, so episodes replay exactly from (seed, action stream).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

SUCCESS = "success"
WRONG_GOAL = "wrong_goal"
CRASH = "crash"
TIMEOUT = "timeout"


@dataclass(frozen=True)
class Outcome:
    result: str
    frames: int
    collisions: int = 0

    def __post_init__(self):
        if self.result not in (SUCCESS, WRONG_GOAL, CRASH, TIMEOUT):
            raise ConfigError(f"unknown outcome {self.result!r}")


def evaluate_outcome(frame_events, goal: str, frame_budget: int) -> Outcome:
    """Scan per-frame event lists; the first terminal event decides.

    ``frame_events`` is a list (one entry per executed frame) of event
    tuples as produced by the env step functions.
    """
    collisions = 0
    for f, events in enumerate(frame_events):
        for ev in events:
            if ev[0] == "collision":
                collisions += 1
            elif ev[0] == "crash":
                return Outcome(CRASH, f + 1, collisions)
            elif ev[0] in ("reached", "grasp"):
                result = SUCCESS if ev[1] == goal else WRONG_GOAL
                return Outcome(result, f + 1, collisions)
    return Outcome(TIMEOUT, min(len(frame_events), frame_budget), collisions)


# --------------------------------------------------------------------------
# drive4
# --------------------------------------------------------------------------

EXTENT = 44.0         # junction center to arm end (m)
HALF_W = 2.6          # road half-width; the intersection square is 5.2 x 5.2
TERMINAL_DEPTH = 4.0  # terminal zone = outermost stretch of each arm
V_MAX = 10.0
OMEGA_MAX = 1.5
A_MAX = 4.0

DRIVE4_GOALS = ("u_turn", "left", "right", "straight")
# terminal-zone centers in goal order (south, west, east, north)
TERMINAL_CENTERS = {
    "u_turn": (0.0, -(EXTENT - TERMINAL_DEPTH / 2)),
    "left": (-(EXTENT - TERMINAL_DEPTH / 2), 0.0),
    "right": (EXTENT - TERMINAL_DEPTH / 2, 0.0),
    "straight": (0.0, EXTENT - TERMINAL_DEPTH / 2),
}


@dataclass(frozen=True)
class Drive4State:
    x: float
    y: float
    heading: float
    speed: float
    goal: str


def _on_road(x: float, y: float) -> bool:
    return (abs(x) <= HALF_W and abs(y) <= EXTENT) or \
           (abs(y) <= HALF_W and abs(x) <= EXTENT)


def _terminal_zone(x: float, y: float):
    inner = EXTENT - TERMINAL_DEPTH
    if abs(x) <= HALF_W and y >= inner:
        return "straight"
    if abs(x) <= HALF_W and y <= -inner:
        return "u_turn"
    if abs(y) <= HALF_W and x <= -inner:
        return "left"
    if abs(y) <= HALF_W and x >= inner:
        return "right"
    return None


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


class Drive4Env:
    """Unicycle car on a plus-shaped road; 2-D action (steer, throttle)."""

    name = "drive4"
    action_dim = 2
    obs_dim = 9
    goals = DRIVE4_GOALS
    frame_budget = 300
    action_box = (-1.0, 1.0)

    def __init__(self, dt: float = 0.1):
        self.dt = dt

    def reset(self, rng) -> Drive4State:
        """Randomized spawn on the south arm, rolling at speed toward the
        junction; goal drawn uniformly."""
        goal = DRIVE4_GOALS[rng.integers(len(DRIVE4_GOALS))]
        x = rng.uniform(-0.5, 0.5)
        y = rng.uniform(-30.0, -24.0)
        heading = math.pi / 2 + rng.uniform(-0.08, 0.08)
        speed = rng.uniform(4.0, 6.0)
        return Drive4State(x=x, y=y, heading=heading, speed=speed, goal=goal)

    def step(self, s: Drive4State, u):
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        heading = wrap_angle(s.heading + u[0] * OMEGA_MAX * self.dt)
        speed = min(max(s.speed + u[1] * A_MAX * self.dt, 0.0), V_MAX)
        x = s.x + math.cos(heading) * speed * self.dt
        y = s.y + math.sin(heading) * speed * self.dt
        nxt = replace(s, x=x, y=y, heading=heading, speed=speed)
        events = []
        zone = _terminal_zone(x, y)
        if zone is not None:
            events.append(("reached", zone))
        elif not _on_road(x, y):
            events.append(("crash",))
        return nxt, events

    def observe(self, s: Drive4State) -> np.ndarray:
        """Pose, speed, and distances to the four terminals; goal-blind.

        Positions are scaled by 10 m, not the full map extent: lane-level
        lateral structure (road half-width 3 m) must stay resolvable to the
        denoiser, and inputs in [-4.4, 4.4] cost an MLP nothing.
        """
        dists = [
            math.hypot(s.x - cx, s.y - cy) / EXTENT
            for cx, cy in (TERMINAL_CENTERS[g] for g in DRIVE4_GOALS)
        ]
        return np.array([
            s.x / 10.0, s.y / 10.0,
            math.sin(s.heading), math.cos(s.heading),
            s.speed / V_MAX, *dists,
        ])

    def render_primitives(self, s: Drive4State, goal: str = None) -> list:
        e, w = EXTENT, HALF_W
        arms = [
            [(-w, w), (w, w), (w, e), (-w, e)],       # north
            [(-w, -e), (w, -e), (w, -w), (-w, -w)],   # south
            [(-e, -w), (-w, -w), (-w, w), (-e, w)],   # west
            [(w, -w), (e, -w), (e, w), (w, w)],       # east
            [(-w, -w), (w, -w), (w, w), (-w, w)],     # junction
        ]
        prims = [{"kind": "polygon", "points": [list(p) for p in poly], "role": "road"}
                 for poly in arms]
        for g in DRIVE4_GOALS:
            cx, cy = TERMINAL_CENTERS[g]
            prims.append({
                "kind": "disc", "center": [cx, cy], "r": TERMINAL_DEPTH / 2,
                "role": "goal" if g == goal else "terminal", "label": g,
            })
        prims.append({"kind": "pose", "position": [s.x, s.y],
                      "heading": s.heading, "speed": s.speed, "role": "agent"})
        return prims


# --------------------------------------------------------------------------
# reach2
# --------------------------------------------------------------------------

WORKSPACE = (0.0, 1.0)
DISC_R = 0.06
EFFECTOR_SPEED = 0.2    # m/s at full deflection
GRIP_RATE = 3.0         # full-range closes in ~1/3 s
GRIP_OPEN_MAX = 0.2     # at or below: fingers spread, disc entry collides
GRIP_CLOSED_MIN = 0.8   # at or above while inside a disc: grasp

REACH2_GOALS = ("target_A", "target_B")


@dataclass(frozen=True)
class Reach2State:
    x: float
    y: float
    grip: float
    target_a: tuple
    target_b: tuple
    goal: str
    disc_contact: bool = False      # debounce: currently touching a disc, open
    boundary_contact: bool = False  # debounce: currently pressed on the edge
    grasped: bool = False


class Reach2Env:
    """Planar effector with gripper; 3-D action (dx, dy, dgrip)."""

    name = "reach2"
    action_dim = 3
    obs_dim = 7
    goals = REACH2_GOALS
    frame_budget = 200
    action_box = (-1.0, 1.0)

    def __init__(self, dt: float = 0.1):
        self.dt = dt

    def reset(self, rng) -> Reach2State:
        """Targets randomized in the upper band, effector low near the
        bottom edge; goal drawn uniformly."""
        goal = REACH2_GOALS[rng.integers(len(REACH2_GOALS))]
        ta = (rng.uniform(0.15, 0.40), rng.uniform(0.60, 0.88))
        tb = (rng.uniform(0.60, 0.85), rng.uniform(0.60, 0.88))
        x = rng.uniform(0.35, 0.65)
        y = rng.uniform(0.03, 0.12)
        return Reach2State(x=x, y=y, grip=0.0, target_a=ta, target_b=tb, goal=goal)

    def step(self, s: Reach2State, u):
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        lo, hi = WORKSPACE
        raw_x = s.x + u[0] * EFFECTOR_SPEED * self.dt
        raw_y = s.y + u[1] * EFFECTOR_SPEED * self.dt
        x = min(max(raw_x, lo), hi)
        y = min(max(raw_y, lo), hi)
        grip = min(max(s.grip + u[2] * GRIP_RATE * self.dt, 0.0), 1.0)
        events = []

        at_boundary = (raw_x != x) or (raw_y != y)
        if at_boundary and not s.boundary_contact:
            events.append(("collision", "boundary"))

        inside = None
        for label, (cx, cy) in (("target_A", s.target_a), ("target_B", s.target_b)):
            if math.hypot(x - cx, y - cy) <= DISC_R:
                inside = label
                break
        open_hit = inside is not None and grip <= GRIP_OPEN_MAX
        if open_hit and not s.disc_contact:
            events.append(("collision", "disc"))

        grasped = inside is not None and grip >= GRIP_CLOSED_MIN
        if grasped and not s.grasped:
            events.append(("grasp", inside))

        nxt = replace(s, x=x, y=y, grip=grip, disc_contact=open_hit,
                      boundary_contact=at_boundary, grasped=grasped)
        return nxt, events

    def observe(self, s: Reach2State) -> np.ndarray:
        return np.array([s.x, s.y, s.grip, *s.target_a, *s.target_b])

    def render_primitives(self, s: Reach2State, goal: str = None) -> list:
        lo, hi = WORKSPACE
        prims = [{
            "kind": "polygon", "role": "workspace",
            "points": [[lo, lo], [hi, lo], [hi, hi], [lo, hi]],
        }]
        for label, center in (("target_A", s.target_a), ("target_B", s.target_b)):
            prims.append({
                "kind": "disc", "center": list(center), "r": DISC_R,
                "role": "goal" if label == goal else "target", "label": label,
            })
        prims.append({"kind": "pose", "position": [s.x, s.y], "heading": 0.0,
                      "role": "agent", "grip": s.grip})
        return prims


_ENVS = {"drive4": Drive4Env, "reach2": Reach2Env}


def get_env(name: str, dt: float = 0.1):
    if name not in _ENVS:
        raise ConfigError(f"unknown env {name!r}; choose from {sorted(_ENVS)}")
    return _ENVS[name](dt=dt)
