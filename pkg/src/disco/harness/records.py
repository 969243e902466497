"""Episode records: per-frame traces plus everything needed to replay them.

Records serialize to JSON lines. Floats pass through Python's repr, which
round-trips float64 exactly, so a stored trace compares bit-for-bit against
a re-run. A record is replayable from its header alone: surrogate-pilot
episodes re-derive every input from (seed, episode label); live episodes
re-feed the stored corrupted input stream.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..copilot import CopilotConfig, HorizonConfig
from ..errors import ConfigError
from ..pilots import CorruptionModel


def obs_digest(o: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(o, dtype=np.float64).tobytes()) \
        .hexdigest()[:12]


@dataclass
class TraceFrame:
    frame: int
    u_clean: list
    u_corrupt: list
    planned: list  # None during warmup/stutter
    executed: list
    obs_digest: str

    def to_row(self):
        return [self.frame, self.u_clean, self.u_corrupt, self.planned,
                self.executed, self.obs_digest]

    @classmethod
    def from_row(cls, row):
        return cls(*row)


@dataclass
class EpisodeRecord:
    episode_id: str
    env: str
    condition: str
    pilot: str            # "surrogate" | "live"
    seed: int
    ep_label: str
    goal: str
    config: dict          # CopilotConfig snapshot (incl. horizon)
    corruption: dict      # CorruptionModel snapshot or None
    ckpt: dict            # {"path":..., "digest":...} or None
    ckpt1: dict
    backend: str
    outcome: dict         # {"result","frames","collisions"}
    time_s: float
    stutters: int
    frame_budget: int = 0
    trace: list = field(default_factory=list)   # list[TraceFrame]
    survey: dict = None

    def to_json(self, with_trace=True) -> str:
        d = asdict(self)
        d["type"] = "episode"
        d["trace"] = [f.to_row() for f in self.trace] if with_trace else []
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EpisodeRecord":
        d = json.loads(line)
        if d.pop("type", None) != "episode":
            raise ConfigError("not an episode record")
        d["trace"] = [TraceFrame.from_row(r) for r in d["trace"]]
        return cls(**d)


def config_to_dict(cfg: CopilotConfig) -> dict:
    h = cfg.horizon
    return {
        "gamma": cfg.gamma_ratio, "rho": cfg.inpaint_ratio,
        "beta": cfg.blend_ratio, "anchor": cfg.anchoring,
        "inpaint_region": cfg.inpaint_region,
        "horizon": {"obs": h.obs_horizon, "delay": h.delay,
                    "replan": h.replan, "frame_ms": h.frame_ms},
    }


def config_from_dict(d: dict) -> CopilotConfig:
    h = d["horizon"]
    return CopilotConfig(
        gamma_ratio=d["gamma"], inpaint_ratio=d["rho"], blend_ratio=d["beta"],
        anchoring=d["anchor"], inpaint_region=d.get("inpaint_region", "past_only"),
        horizon=HorizonConfig(obs_horizon=h["obs"], delay=h["delay"],
                              replan=h["replan"], frame_ms=h["frame_ms"]),
    )


def corruption_to_dict(model) -> dict:
    if model is None:
        return None
    return asdict(model)


def corruption_from_dict(d) -> CorruptionModel:
    if d is None:
        return None
    return CorruptionModel(**d)


def write_records(path, run_meta: dict, records, with_traces=True):
    """JSON-lines file: one run_meta line, then one line per episode."""
    with open(path, "w") as fh:
        meta = dict(run_meta)
        meta["type"] = "run_meta"
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for rec in records:
            fh.write(rec.to_json(with_trace=with_traces) + "\n")


def read_records(path):
    """Returns (run_meta or None, list of EpisodeRecord)."""
    meta, records = None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            if d.get("type") == "run_meta":
                d.pop("type")
                meta = d
            elif d.get("type") == "episode":
                records.append(EpisodeRecord.from_json(line))
            else:
                raise ConfigError(f"unknown record type {d.get('type')!r}")
    return meta, records
