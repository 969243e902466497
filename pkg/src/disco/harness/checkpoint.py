"""Self-describing single-file checkpoints.

Layout (text file, three lines):

    DISCO-CKPT 1
    {canonical JSON header: arch, horizon, schedule, normalization, digest}
    <base64 of all parameter blobs, little-endian float64, row-major,
     weights and biases interleaved in layer order>

The header carries a SHA-256 of the raw blob, so truncated or corrupted
files fail loudly and nothing partial ever loads. Round-trips are bit-exact:
save(load(save(x))) equals save(x) byte for byte, and a loaded checkpoint's
denoiser outputs match the saved one's exactly.
"""

import base64
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..diffusion import NoiseSchedule, make_schedule
from ..errors import ConfigError
from ..nn import DenoiserParams
from .data import Normalizer

MAGIC = "DISCO-CKPT"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    params: DenoiserParams
    schedule: NoiseSchedule
    normalizer: Normalizer
    env_name: str
    obs_dim: int
    act_dim: int
    obs_horizon: int
    pred_horizon: int
    train_meta: dict

    @property
    def single_step(self) -> bool:
        return self.pred_horizon == 1


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def save_checkpoint(ck: Checkpoint, path):
    p = ck.params
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for w, b in zip(p.weights, p.biases) for arr in (w, b)
    )
    header = {
        "format_version": FORMAT_VERSION,
        "dtype": "<f8",
        "arch": {
            "layer_sizes": p.layer_sizes,
            "activation": p.activation,
            "embed_dim": p.embed_dim,
            "embed_max_period": p.embed_max_period,
            "arch_id": p.arch_id,
        },
        "env": ck.env_name,
        "obs_dim": ck.obs_dim,
        "act_dim": ck.act_dim,
        "obs_horizon": ck.obs_horizon,
        "pred_horizon": ck.pred_horizon,
        "schedule": {
            "steps": ck.schedule.steps,
            "beta_min": ck.schedule.beta_min,
            "beta_max": ck.schedule.beta_max,
        },
        "normalization": {
            "act_min": list(ck.normalizer.act_min),
            "act_max": list(ck.normalizer.act_max),
        },
        "train_meta": ck.train_meta,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(path, "w") as fh:
        fh.write(f"{MAGIC} {FORMAT_VERSION}\n")
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(base64.b64encode(blob).decode("ascii") + "\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        magic_line = fh.readline().strip()
        header_line = fh.readline()
        blob_line = fh.readline().strip()
    parts = magic_line.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    if int(parts[1]) != FORMAT_VERSION:
        raise ConfigError(
            f"{path}: format version {parts[1]} != supported {FORMAT_VERSION}"
        )
    try:
        header = json.loads(header_line)
        blob = base64.b64decode(blob_line, validate=True)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"{path}: corrupt checkpoint ({exc})") from exc
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise ConfigError(f"{path}: parameter blob digest mismatch")
    if header["dtype"] != "<f8":
        raise ConfigError(f"{path}: unsupported dtype {header['dtype']!r}")

    arch = header["arch"]
    sizes = arch["layer_sizes"]
    flat = np.frombuffer(blob, dtype="<f8")
    weights, biases, off = [], [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[off:off + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        off += fan_in * fan_out
        biases.append(flat[off:off + fan_out].copy())
        off += fan_out
    if off != flat.size:
        raise ConfigError(f"{path}: blob size does not match architecture")
    params = DenoiserParams(
        weights=tuple(weights), biases=tuple(biases),
        activation=arch["activation"], embed_dim=arch["embed_dim"],
        embed_max_period=arch["embed_max_period"], arch_id=arch["arch_id"],
    )
    sch = header["schedule"]
    norm = header["normalization"]
    return Checkpoint(
        params=params,
        schedule=make_schedule(sch["steps"], sch["beta_min"], sch["beta_max"]),
        normalizer=Normalizer(act_min=np.array(norm["act_min"]),
                              act_max=np.array(norm["act_max"])),
        env_name=header["env"],
        obs_dim=header["obs_dim"],
        act_dim=header["act_dim"],
        obs_horizon=header["obs_horizon"],
        pred_horizon=header["pred_horizon"],
        train_meta=header["train_meta"],
    )
