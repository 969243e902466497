"""Minibatch Adam training of the noise predictor."""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .. import nn
from .. import rng as rngmod
from ..diffusion import make_schedule, mse_loss_fn, noised_training_batch
from ..errors import ConfigError, NumericError
from .checkpoint import Checkpoint
from .data import DemoDataset, Normalizer, window_indices

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (256, 256, 256)
    activation: str = "relu"
    embed_dim: int = 64
    embed_max_period: float = 10000.0
    diffusion_steps: int = 100
    beta_min: float = 1e-3
    beta_max: float = 0.2
    obs_horizon: int = 6
    pred_horizon: int = 16
    batch_size: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-4  # cosine-decayed to this by the last step
    ema_decay: float = 0.999  # averaged weights are what ship; 0 disables
    epochs: int = 60
    single_step: bool = False

    def resolved(self) -> "TrainConfig":
        if self.single_step:
            return replace(self, obs_horizon=1, pred_horizon=1)
        return self


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_curve: list  # (step, loss) pairs
    initial_loss: float
    final_loss: float


def train(dataset: DemoDataset, config: TrainConfig, epochs: int, seed: int) -> TrainResult:
    """Train on sliding windows of the demo dataset; deterministic in seed.

    ``epochs`` overrides config.epochs when >= 0 (0 returns the initialized
    network untouched).
    """
    cfg = config.resolved()
    if epochs is None or epochs < 0:
        epochs = cfg.epochs
    if dataset.n_frames == 0:
        raise ConfigError("empty dataset")
    obs_idx, act_idx = window_indices(dataset, cfg.obs_horizon, cfg.pred_horizon)
    n_windows = obs_idx.shape[0]
    obs_dim = dataset.obs.shape[1]
    act_dim = dataset.act.shape[1]
    normalizer = Normalizer.fit(dataset.act)
    act_norm = normalizer.encode(dataset.act)

    in_dim = cfg.obs_horizon * obs_dim + cfg.pred_horizon * act_dim + cfg.embed_dim
    out_dim = cfg.pred_horizon * act_dim
    layer_sizes = [in_dim, *cfg.hidden, out_dim]
    params = nn.init_mlp(layer_sizes, rngmod.stream(seed, "init"),
                         activation=cfg.activation, embed_dim=cfg.embed_dim,
                         embed_max_period=cfg.embed_max_period)
    schedule = make_schedule(cfg.diffusion_steps, cfg.beta_min, cfg.beta_max)
    state = nn.AdamState.init(params, lr=cfg.lr)

    batch_rng = rngmod.stream(seed, "batches")
    noise_rng = rngmod.stream(seed, "noise")
    probe = rngmod.stream(seed, "probe").integers(0, n_windows,
                                                  size=min(2048, n_windows))

    def eval_loss(p):
        # same probe windows and draws before and after, so the ratio is fair
        xs, targets = noised_training_batch(
            dataset.obs[obs_idx[probe]], act_norm[act_idx[probe]],
            schedule, rngmod.stream(seed, "probe-draws"), p)
        pred = nn.mlp_forward(p, xs)
        return float(((pred - targets) ** 2).mean())

    initial_loss = eval_loss(params)
    steps_per_epoch = max(1, math.ceil(n_windows / cfg.batch_size))
    total_steps = epochs * steps_per_epoch
    curve = [(0, initial_loss)]
    ema = None
    for step in range(total_steps):
        batch = batch_rng.integers(0, n_windows, size=cfg.batch_size)
        xs, targets = noised_training_batch(
            dataset.obs[obs_idx[batch]], act_norm[act_idx[batch]],
            schedule, noise_rng, params)
        try:
            loss, grads = nn.gradient(params, xs, mse_loss_fn(targets))
        except NumericError as exc:
            raise NumericError(
                f"training diverged at step {step}: {exc}"
            ) from exc
        frac = step / max(1, total_steps - 1)
        lr_t = cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1 + math.cos(math.pi * frac))
        state = replace(state, lr=lr_t)
        params, state = nn.adam_step(params, grads, state)
        if cfg.ema_decay > 0:
            if ema is None:
                ema = [(w.copy(), b.copy())
                       for w, b in zip(params.weights, params.biases)]
            else:
                d = cfg.ema_decay
                for (ew, eb), (w, b) in zip(ema, zip(params.weights, params.biases)):
                    ew *= d
                    ew += (1 - d) * w
                    eb *= d
                    eb += (1 - d) * b
        if step % 200 == 0 or step == total_steps - 1:
            curve.append((step + 1, loss))
            log.info("step %d/%d loss %.5f", step + 1, total_steps, loss)

    if ema is not None:
        params = replace(params,
                         weights=tuple(w for w, _ in ema),
                         biases=tuple(b for _, b in ema))
    final_loss = eval_loss(params)
    curve.append((total_steps, final_loss))
    if total_steps > 0 and final_loss > 0.5 * initial_loss:
        log.warning("training barely moved: initial %.4f -> final %.4f",
                    initial_loss, final_loss)
    ck = Checkpoint(
        params=params, schedule=schedule, normalizer=normalizer,
        env_name=dataset.env_name, obs_dim=obs_dim, act_dim=act_dim,
        obs_horizon=cfg.obs_horizon, pred_horizon=cfg.pred_horizon,
        train_meta={
            "seed": seed, "epochs": epochs, "steps": total_steps,
            "batch_size": cfg.batch_size, "lr": cfg.lr,
            "n_windows": int(n_windows), "dataset_meta": dataset.meta,
            "initial_loss": initial_loss, "final_loss": final_loss,
            "single_step": cfg.single_step,
        },
    )
    return TrainResult(checkpoint=ck, loss_curve=curve,
                       initial_loss=initial_loss, final_loss=final_loss)
