"""Batch episode evaluation: condition planners, the episode loop, metric
aggregation, and record replay."""

import logging
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..copilot import CopilotConfig, build_seed, disco_infer, state_based_infer
from ..diffusion import ActionSequence, make_context, sample_sequence
from ..envs import evaluate_outcome, get_env
from ..errors import ConfigError
from ..kernels import backend_name
from ..pilots import Corruptor, make_pilot
from ..scheduler import AUTONOMOUS, DISCO, NO_COPILOT, STATE_BASED, Controller
from .checkpoint import Checkpoint
from .metrics import summarize
from .records import (EpisodeRecord, TraceFrame, config_to_dict,
                      corruption_to_dict, obs_digest)

log = logging.getLogger(__name__)

TERMINAL_EVENTS = ("crash", "reached", "grasp")


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate_setup(env, condition, cfg: CopilotConfig, ck: Checkpoint, ck1: Checkpoint):
    if condition in (DISCO, AUTONOMOUS):
        _require(ck is not None, f"{condition} needs a sequence checkpoint")
        _require(ck.env_name == env.name,
                 f"checkpoint trained on {ck.env_name}, env is {env.name}")
        _require(not ck.single_step, f"{condition} needs a sequence checkpoint, "
                 "got a single-step one")
        _require(cfg.horizon.obs_horizon == ck.obs_horizon,
                 f"config obs horizon {cfg.horizon.obs_horizon} != "
                 f"checkpoint {ck.obs_horizon}")
        _require(cfg.horizon.pred_horizon == ck.pred_horizon,
                 f"config prediction horizon {cfg.horizon.pred_horizon} != "
                 f"checkpoint {ck.pred_horizon}")
    if condition == STATE_BASED:
        _require(ck1 is not None, "state_based needs a single-step checkpoint")
        _require(ck1.env_name == env.name,
                 f"single-step checkpoint trained on {ck1.env_name}, env is {env.name}")
        _require(ck1.single_step, "state_based checkpoint must be single-step "
                 "(trained with --single-step)")


@dataclass
class _Runtime:
    """Contexts shared across the episodes of one evaluation run."""

    ctx: object = None
    ctx1: object = None


def _make_planner(condition, cfg, ck, ck1, rt: _Runtime, master_seed, ep_label):
    if condition == NO_COPILOT:
        return None

    if condition == AUTONOMOUS:
        if rt.ctx is None:
            rt.ctx = make_context(ck.params, ck.schedule)
        shape = (ck.pred_horizon, ck.act_dim)
        nrm = ck.normalizer

        def planner(history, prev_plan, obs_window, frame):
            rng = rngmod.stream(master_seed, ep_label, f"plan{frame}")
            out = sample_sequence(ck.params, obs_window, ck.schedule, rng,
                                  shape, ctx=rt.ctx)
            return ActionSequence(nrm.decode(out), level=0, frame_origin=frame)

        return planner

    if condition == DISCO:
        if rt.ctx is None:
            rt.ctx = make_context(ck.params, ck.schedule)
        nrm = ck.normalizer

        def planner(history, prev_plan, obs_window, frame):
            seed = build_seed(history, prev_plan, cfg)
            seed_norm = ActionSequence(nrm.encode(seed.values), level=0,
                                       frame_origin=seed.frame_origin)
            rng = rngmod.stream(master_seed, ep_label, f"plan{frame}")
            out = disco_infer(ck.params, obs_window, seed_norm, cfg,
                              ck.schedule, rng, ctx=rt.ctx)
            return ActionSequence(nrm.decode(out.values), level=0,
                                  frame_origin=out.frame_origin)

        return planner

    if condition == STATE_BASED:
        if rt.ctx1 is None:
            rt.ctx1 = make_context(ck1.params, ck1.schedule)
        nrm = ck1.normalizer
        rows = cfg.horizon.pred_horizon

        def planner(history, prev_plan, obs_window, frame):
            u_now = history.window()[-1]
            o_now = obs_window[-1]
            rng = rngmod.stream(master_seed, ep_label, f"plan{frame}")
            a = state_based_infer(ck1.params, o_now, nrm.encode(u_now),
                                  cfg.gamma_ratio, ck1.schedule, rng, ctx=rt.ctx1)
            # the single inferred action holds for the plan's whole window
            return ActionSequence(np.tile(nrm.decode(a), (rows, 1)),
                                  level=0, frame_origin=frame)

        return planner

    raise ConfigError(f"unknown condition {condition!r}")


def run_episode(env, condition, cfg: CopilotConfig, corr_model, ck, ck1,
                master_seed: int, ep_label: str, rt: _Runtime = None,
                budget: int = None, threaded: bool = False,
                input_override=None, ckpt_info=None, ckpt1_info=None,
                pilot_kind: str = "surrogate") -> EpisodeRecord:
    """One deterministic episode.

    ``input_override``, when given, replaces pilot+corruption with a stored
    corrupted-input stream (live-trial replay).
    """
    if rt is None:
        rt = _Runtime()
    budget = budget or env.frame_budget
    state = env.reset(rngmod.stream(master_seed, ep_label, "env"))
    goal = state.goal
    planner = _make_planner(condition, cfg, ck, ck1, rt, master_seed, ep_label)
    controller = Controller(condition, cfg, env.action_dim, env.obs_dim,
                            planner=planner, action_box=env.action_box,
                            threaded=threaded)
    pilot = None
    corruptor = None
    if input_override is None and condition != AUTONOMOUS:
        pilot = make_pilot(env.name, goal)
        if corr_model is not None:
            corruptor = Corruptor(corr_model, rngmod.stream(master_seed, ep_label, "corrupt"))

    zero = np.zeros(env.action_dim)
    trace, frame_events = [], []
    for t in range(budget):
        o = env.observe(state)
        if input_override is not None:
            u_clean = np.asarray(input_override[t], dtype=float)
            u_corr = u_clean
        elif condition == AUTONOMOUS:
            u_clean = zero
            u_corr = zero
        else:
            u_clean = pilot.action(state)
            u_corr = corruptor.step(u_clean) if corruptor is not None else u_clean
        executed, info = controller.tick(t, u_corr, o)
        state, events = env.step(state, executed)
        trace.append(TraceFrame(
            frame=t,
            u_clean=[float(v) for v in u_clean],
            u_corrupt=[float(v) for v in u_corr],
            planned=None if info.planned is None else [float(v) for v in info.planned],
            executed=[float(v) for v in executed],
            obs_digest=obs_digest(o),
        ))
        frame_events.append(events)
        if any(ev[0] in TERMINAL_EVENTS for ev in events):
            break
    outcome = evaluate_outcome(frame_events, goal, budget)
    return EpisodeRecord(
        episode_id=f"{master_seed}/{ep_label}",
        env=env.name, condition=condition, pilot=pilot_kind,
        seed=master_seed, ep_label=ep_label, goal=goal,
        config=config_to_dict(cfg), corruption=corruption_to_dict(corr_model),
        ckpt=ckpt_info, ckpt1=ckpt1_info, backend=backend_name(),
        outcome={"result": outcome.result, "frames": outcome.frames,
                 "collisions": outcome.collisions},
        time_s=outcome.frames * cfg.horizon.frame_ms / 1000.0,
        stutters=controller.stutter_count,
        frame_budget=budget,
        trace=trace,
    )


def run_episodes(env_name: str, condition: str, cfg: CopilotConfig, corr_model,
                 ck: Checkpoint, ck1: Checkpoint, n: int, seed: int,
                 budget: int = None, ckpt_info=None, ckpt1_info=None):
    """n independent episodes; returns (metrics dict, records list)."""
    if n < 1:
        raise ConfigError("need at least one episode")
    env = get_env(env_name)
    validate_setup(env, condition, cfg, ck, ck1)
    rt = _Runtime()
    records = []
    for i in range(n):
        records.append(run_episode(
            env, condition, cfg, corr_model, ck, ck1, seed, f"ep{i}",
            rt=rt, budget=budget, ckpt_info=ckpt_info, ckpt1_info=ckpt1_info))
        if (i + 1) % 50 == 0:
            log.info("%s: %d/%d episodes", condition, i + 1, n)
    metrics = summarize(records, seed)
    metrics["condition"] = condition
    metrics["env"] = env_name
    return metrics, records


def replay_record(record: EpisodeRecord, ck: Checkpoint, ck1: Checkpoint):
    """Re-run an episode from its header and compare executed traces.

    Surrogate episodes re-derive every input from the seed; live episodes
    feed the stored corrupted inputs. Returns (ok, list of mismatch notes).
    """
    from .records import config_from_dict, corruption_from_dict

    env = get_env(record.env)
    cfg = config_from_dict(record.config)
    corr = corruption_from_dict(record.corruption)
    override = None
    if record.pilot == "live":
        override = [f.u_corrupt for f in record.trace]
        corr = None
    rerun = run_episode(
        env, record.condition, cfg, corr, ck, ck1,
        record.seed, record.ep_label,
        budget=len(override) if override else (record.frame_budget or None),
        input_override=override, pilot_kind=record.pilot,
    )
    notes = []
    if len(rerun.trace) != len(record.trace):
        notes.append(f"trace length {len(rerun.trace)} != {len(record.trace)}")
    for a, b in zip(record.trace, rerun.trace):
        if a.executed != b.executed:
            notes.append(f"frame {a.frame}: executed {b.executed} != {a.executed}")
            break
        if a.obs_digest != b.obs_digest:
            notes.append(f"frame {a.frame}: observation digest mismatch")
            break
    if rerun.outcome != record.outcome:
        notes.append(f"outcome {rerun.outcome} != {record.outcome}")
    return (not notes), notes
