"""Hyperparameter sweeps over the diffusion and inpainting ratios."""

import csv
import json
import logging
from dataclasses import dataclass, field

from .. import rng as rngmod
from ..copilot import CopilotConfig, HorizonConfig
from ..errors import ConfigError
from ..pilots import CORRUPTION_VARIANTS, NONE, CorruptionModel
from ..scheduler import CONDITIONS, DISCO
from .episodes import run_episodes

log = logging.getLogger(__name__)

def horizon_for_checkpoint(ck, delay: int = None, frame_ms: int = 100) -> HorizonConfig:
    """Scheduling horizon implied by a sequence checkpoint's window sizes.

    The replan interval is pinned by training (P - O); the inference delay
    defaults to the largest stutter-free value, replan - obs_horizon.
    """
    replan = ck.pred_horizon - ck.obs_horizon
    if replan < 1:
        raise ConfigError("checkpoint prediction horizon leaves no replan room")
    if delay is None:
        delay = replan - ck.obs_horizon
    if delay < 0:
        raise ConfigError("checkpoint horizons do not admit a stutter-free delay")
    return HorizonConfig(obs_horizon=ck.obs_horizon, delay=delay,
                         replan=replan, frame_ms=frame_ms)


CSV_COLUMNS = [
    "gamma", "rho", "condition", "n",
    "success_rate", "success_lo", "success_hi",
    "wrong_rate", "crash_rate", "timeout_rate",
    "mean_time_s", "time_lo", "time_hi",
    "mean_collisions", "collisions_lo", "collisions_hi",
]


@dataclass(frozen=True)
class SweepSpec:
    env: str
    gamma_grid: tuple
    rho_grid: tuple
    episodes_per_cell: int
    seed: int
    conditions: tuple = (DISCO,)
    corruption: str = "standard"
    beta: float = 0.0
    anchor: str = "user_centric"
    budget: int = None

    def __post_init__(self):
        if not self.gamma_grid or not self.rho_grid:
            raise ConfigError("gamma/rho grids must be non-empty")
        for g in list(self.gamma_grid) + list(self.rho_grid):
            if not 0.0 <= g <= 1.0:
                raise ConfigError(f"grid value {g} outside [0, 1]")
        if self.episodes_per_cell < 1:
            raise ConfigError("episodes_per_cell must be >= 1")
        for c in self.conditions:
            if c not in CONDITIONS:
                raise ConfigError(f"unknown condition {c!r}")
        if self.corruption not in CORRUPTION_VARIANTS:
            raise ConfigError(f"unknown corruption {self.corruption!r}")

    @classmethod
    def from_file(cls, path) -> "SweepSpec":
        with open(path) as fh:
            d = json.load(fh)
        return cls(
            env=d["env"],
            gamma_grid=tuple(d["gamma_grid"]),
            rho_grid=tuple(d["rho_grid"]),
            episodes_per_cell=d["episodes_per_cell"],
            seed=d["seed"],
            conditions=tuple(d.get("conditions", [DISCO])),
            corruption=d.get("corruption", "standard"),
            beta=d.get("beta", 0.0),
            anchor=d.get("anchor", "user_centric"),
            budget=d.get("budget"),
        )


def sweep(spec: SweepSpec, ck, ck1=None, horizon: HorizonConfig = None):
    """One row of metrics per (gamma, rho, condition) cell.

    Cell seeds derive from (spec.seed, cell labels), so cells are
    order-independent and the whole grid is reproducible.
    """
    if horizon is None:
        horizon = horizon_for_checkpoint(ck)
    corr = None if spec.corruption == NONE else CorruptionModel(variant=spec.corruption)
    rows = []
    for gi, gamma in enumerate(spec.gamma_grid):
        for ri, rho in enumerate(spec.rho_grid):
            for cond in spec.conditions:
                cfg = CopilotConfig(
                    gamma_ratio=gamma, inpaint_ratio=rho, blend_ratio=spec.beta,
                    anchoring=spec.anchor, horizon=horizon,
                )
                cell_seed = rngmod.derive_seed(spec.seed, f"cell-g{gi}-r{ri}-{cond}")
                metrics, _ = run_episodes(
                    spec.env, cond, cfg, corr, ck, ck1,
                    spec.episodes_per_cell, cell_seed, budget=spec.budget)
                ci = metrics["ci95"]
                rows.append({
                    "gamma": gamma, "rho": rho, "condition": cond,
                    "n": metrics["n"],
                    "success_rate": metrics["success_rate"],
                    "success_lo": ci["success_rate"][0],
                    "success_hi": ci["success_rate"][1],
                    "wrong_rate": metrics["wrong_rate"],
                    "crash_rate": metrics["crash_rate"],
                    "timeout_rate": metrics["timeout_rate"],
                    "mean_time_s": metrics["mean_time_s"],
                    "time_lo": ci["mean_time_s"][0],
                    "time_hi": ci["mean_time_s"][1],
                    "mean_collisions": metrics["mean_collisions"],
                    "collisions_lo": ci["mean_collisions"][0],
                    "collisions_hi": ci["mean_collisions"][1],
                })
                log.info("cell gamma=%.2f rho=%.2f %s: success %.3f",
                         gamma, rho, cond, metrics["success_rate"])
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)
