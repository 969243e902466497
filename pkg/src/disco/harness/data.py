"""Demonstration collection and training-window extraction."""

import json
import logging
from dataclasses import dataclass, replace

import numpy as np

from .. import rng as rngmod
from ..envs import SUCCESS, evaluate_outcome, get_env
from ..errors import ConfigError
from ..pilots import demo_start, make_pilot

log = logging.getLogger(__name__)

MAX_RETRIES = 20


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension affine map of actions onto [-1, 1] from dataset min/max."""

    act_min: np.ndarray
    act_max: np.ndarray

    @classmethod
    def fit(cls, actions: np.ndarray) -> "Normalizer":
        lo = actions.min(axis=0)
        hi = actions.max(axis=0)
        span = hi - lo
        # constant dimensions map to 0; widen them so decode stays exact
        hi = np.where(span < 1e-9, lo + 1.0, hi)
        return cls(act_min=lo, act_max=hi)

    def encode(self, a: np.ndarray) -> np.ndarray:
        return 2.0 * (a - self.act_min) / (self.act_max - self.act_min) - 1.0

    def decode(self, a: np.ndarray) -> np.ndarray:
        return (a + 1.0) / 2.0 * (self.act_max - self.act_min) + self.act_min


@dataclass
class DemoDataset:
    env_name: str
    obs: np.ndarray        # (total_frames, obs_dim)
    act: np.ndarray        # (total_frames, act_dim)
    episodes: list         # [(start, end), ...) slices into the flat arrays
    meta: dict

    @property
    def n_frames(self) -> int:
        return self.obs.shape[0]

    def save(self, path):
        np.savez_compressed(
            path, obs=self.obs, act=self.act,
            episodes=np.array(self.episodes, dtype=np.int64),
            meta=json.dumps({"env": self.env_name, **self.meta}, sort_keys=True),
        )

    @classmethod
    def load(cls, path) -> "DemoDataset":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            return cls(env_name=meta.pop("env"), obs=z["obs"], act=z["act"],
                       episodes=[tuple(e) for e in z["episodes"]], meta=meta)


def collect_demos(env_name: str, n_episodes: int, seed: int) -> DemoDataset:
    """Uncorrupted scripted-expert rollouts, goals balanced round-robin,
    starts randomized per episode. Failed expert episodes (they should be
    rare) are discarded and resampled with a fresh stream."""
    if n_episodes < 1:
        raise ConfigError("need at least one episode")
    env = get_env(env_name)
    all_obs, all_act, episodes = [], [], []
    discarded = 0
    cursor = 0
    for i in range(n_episodes):
        goal = env.goals[i % len(env.goals)]
        for retry in range(MAX_RETRIES):
            label = f"demo{i}" if retry == 0 else f"demo{i}r{retry}"
            obs_rows, act_rows, outcome = _rollout(env, goal, rngmod.stream(seed, label))
            if outcome.result == SUCCESS:
                break
            discarded += 1
            log.warning("demo %d (%s) ended in %s; resampling", i, goal, outcome.result)
        else:
            raise ConfigError(
                f"expert failed {MAX_RETRIES} times on goal {goal!r}; "
                "environment and pilot are out of tune"
            )
        all_obs.extend(obs_rows)
        all_act.extend(act_rows)
        episodes.append((cursor, cursor + len(obs_rows)))
        cursor += len(obs_rows)
    return DemoDataset(
        env_name=env_name,
        obs=np.array(all_obs), act=np.array(all_act), episodes=episodes,
        meta={"n_episodes": n_episodes, "seed": seed, "discarded": discarded},
    )


def _rollout(env, goal, reset_rng):
    state = demo_start(env, goal, reset_rng)
    pilot = make_pilot(env.name, goal)
    obs_rows, act_rows, frame_events = [], [], []
    for _ in range(env.frame_budget):
        o = env.observe(state)
        u = pilot.action(state)
        state, events = env.step(state, u)
        obs_rows.append(o)
        act_rows.append(np.clip(u, *env.action_box))
        frame_events.append(events)
        if any(ev[0] in ("crash", "reached", "grasp") for ev in events):
            break
    return obs_rows, act_rows, evaluate_outcome(frame_events, goal, env.frame_budget)


def window_indices(dataset: DemoDataset, obs_horizon: int, pred_horizon: int):
    """Sliding-window index arrays with edge padding.

    Every frame t of every episode yields one window: observations for
    frames [t-O+1, t], actions for [t-O+1, t+R], indices clamped to the
    episode (repeat first/last frame at the edges).

    Returns (obs_idx (n, O), act_idx (n, P)) into the flat dataset arrays.
    """
    obs_rows, act_rows = [], []
    back = obs_horizon - 1
    for start, end in dataset.episodes:
        last = end - 1
        for t in range(start, end):
            obs_rows.append([min(max(t - back + j, start), last)
                             for j in range(obs_horizon)])
            act_rows.append([min(max(t - back + j, start), last)
                             for j in range(pred_horizon)])
    return np.array(obs_rows, dtype=np.int64), np.array(act_rows, dtype=np.int64)
