"""DDPM machinery: noise schedule, forward q-sampling, the reverse posterior
step, the noise-prediction training loss, and autonomous sequence sampling.

Levels run k = 0..K with 0 meaning fully denoised. All per-level tables are
indexed directly by k (index 0 holds the clean-level sentinels: alpha_bar=1,
sigma=0), which keeps every formula one-based like the usual DDPM statement:

    forward:  x_k = sqrt(alpha_bar_k) x_0 + sqrt(1 - alpha_bar_k) eps
    reverse:  x_{k-1} = (x_k - eps_coef_k eps_hat) / sqrt(alpha_k) + sigma_k z

with eps_coef_k = (1 - alpha_k)/sqrt(1 - alpha_bar_k) and sigma_k the
posterior std sqrt(beta_k (1 - alpha_bar_{k-1}) / (1 - alpha_bar_k));
sigma_1 = 0, so the last step is deterministic.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels, nn
from .errors import ConfigError, DomainError, NumericError, ShapeError

DEFAULT_STEPS = 100
# Linear schedule sized for K=100: the classic (1e-4, 0.02) endpoints belong
# to K=1000 runs and leave alpha_bar_K ~ 0.36, nowhere near total noising.
DEFAULT_BETA = (1e-3, 0.2)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-level beta/alpha tables plus the derived reverse-step coefficients."""

    steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    scale: np.ndarray       # 1 / sqrt(alpha_k)
    eps_coef: np.ndarray    # (1 - alpha_k) / sqrt(1 - alpha_bar_k)
    sigma: np.ndarray       # posterior std; sigma[1] == 0
    sqrt_alpha_bar: np.ndarray
    sqrt_one_minus_alpha_bar: np.ndarray
    beta_min: float
    beta_max: float


def make_schedule(steps: int = DEFAULT_STEPS, beta_min: float = DEFAULT_BETA[0],
                  beta_max: float = DEFAULT_BETA[1]) -> NoiseSchedule:
    """Build a linearly spaced beta schedule with all derived tables."""
    if steps < 1:
        raise ConfigError(f"need at least one diffusion step, got {steps}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ConfigError(f"beta bounds must satisfy 0 < min <= max < 1, "
                          f"got ({beta_min}, {beta_max})")
    if steps > 1 and beta_min == beta_max:
        raise ConfigError("beta must strictly increase; widen the bounds")
    k = steps
    beta = np.zeros(k + 1)
    beta[1:] = np.linspace(beta_min, beta_max, k)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar[0] = 1.0  # clean level
    scale = np.ones(k + 1)
    scale[1:] = 1.0 / np.sqrt(alpha[1:])
    eps_coef = np.zeros(k + 1)
    eps_coef[1:] = (1.0 - alpha[1:]) / np.sqrt(1.0 - alpha_bar[1:])
    sigma = np.zeros(k + 1)
    sigma[1:] = np.sqrt(beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]))
    tables = dict(
        steps=k, beta=beta, alpha=alpha, alpha_bar=alpha_bar, scale=scale,
        eps_coef=eps_coef, sigma=sigma,
        sqrt_alpha_bar=np.sqrt(alpha_bar),
        sqrt_one_minus_alpha_bar=np.sqrt(1.0 - alpha_bar),
        beta_min=beta_min, beta_max=beta_max,
    )
    for name in ("beta", "alpha", "alpha_bar", "scale", "eps_coef", "sigma",
                 "sqrt_alpha_bar", "sqrt_one_minus_alpha_bar"):
        tables[name].setflags(write=False)
        if not np.isfinite(tables[name]).all():
            raise NumericError(f"schedule table {name} has non-finite entries")
    return NoiseSchedule(**tables)


@dataclass(frozen=True)
class ActionSequence:
    """An action sequence at some diffusion level.

    ``values`` is (P, A); row ``obs_horizon - 1`` aligns with environment
    frame ``frame_origin`` (the current action), earlier rows are the past,
    later rows the plan.
    """

    values: np.ndarray
    level: int
    frame_origin: int

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeError("action sequence must be a (P, A) matrix")
        if self.level < 0:
            raise DomainError("diffusion level must be >= 0")


def forward_diffuse(x0: np.ndarray, k: int, noise: np.ndarray,
                    schedule: NoiseSchedule) -> np.ndarray:
    """Noise a clean sample to level ``k``: the closed-form q-sample."""
    if not 0 <= k <= schedule.steps:
        raise DomainError(f"level {k} outside [0, {schedule.steps}]")
    if noise.shape != x0.shape:
        raise ShapeError(f"noise shape {noise.shape} != sample shape {x0.shape}")
    return schedule.sqrt_alpha_bar[k] * x0 + schedule.sqrt_one_minus_alpha_bar[k] * noise


def reverse_step(xk: np.ndarray, k: int, eps_pred: np.ndarray,
                 noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """One posterior step from level ``k`` to ``k - 1``."""
    if not 1 <= k <= schedule.steps:
        raise DomainError(f"reverse step needs level in [1, {schedule.steps}], got {k}")
    if eps_pred.shape != xk.shape or noise.shape != xk.shape:
        raise ShapeError("eps_pred/noise shape must match the sequence")
    return schedule.scale[k] * (xk - schedule.eps_coef[k] * eps_pred) \
        + schedule.sigma[k] * noise


def noised_training_batch(obs_windows: np.ndarray, actions: np.ndarray,
                          schedule: NoiseSchedule, rng, params: nn.DenoiserParams):
    """Draw per-item levels and noise; assemble denoiser inputs and targets.

    Returns (inputs (N, in_dim), targets (N, P*A)). Draw order is fixed:
    levels first, then the noise block.
    """
    if obs_windows.ndim != 3 or actions.ndim != 3:
        raise ShapeError("expected batched (N, O, obs) and (N, P, A) arrays")
    n = actions.shape[0]
    if n == 0:
        raise ConfigError("empty batch")
    ks = rng.integers(1, schedule.steps + 1, size=n)
    eps = rng.standard_normal(actions.shape)
    noisy = (schedule.sqrt_alpha_bar[ks][:, None, None] * actions
             + schedule.sqrt_one_minus_alpha_bar[ks][:, None, None] * eps)
    xs = nn.assemble_input(params, obs_windows, noisy, ks)
    return xs, eps.reshape(n, -1)


def mse_loss_fn(targets: np.ndarray):
    """Per-item mean-squared-error closure for nn.gradient."""
    def loss_fn(pred):
        d = pred - targets
        per_item = (d * d).mean(axis=1)
        return per_item, (2.0 / targets.shape[1]) * d
    return loss_fn


def ddpm_loss(params: nn.DenoiserParams, obs_windows: np.ndarray,
              actions: np.ndarray, schedule: NoiseSchedule, rng) -> float:
    """Noise-prediction MSE over a batch of (observation window, clean
    action sequence) pairs, each noised to a uniformly drawn level."""
    xs, targets = noised_training_batch(obs_windows, actions, schedule, rng, params)
    pred = nn.mlp_forward(params, xs)
    per_item = ((pred - targets) ** 2).mean(axis=1)
    bad = np.flatnonzero(~np.isfinite(per_item))
    if bad.size:
        raise NumericError(f"non-finite loss at batch index {bad[0]}")
    return float(per_item.mean())


@lru_cache(maxsize=8)
def _embed_table(embed_dim: int, max_period: float, steps: int) -> np.ndarray:
    table = nn.timestep_embed(np.arange(steps + 1), embed_dim, max_period)
    table = np.ascontiguousarray(table)
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class ReverseContext:
    """Packed net + embedding table bound to a schedule, built once per
    checkpoint so the per-plan kernel calls carry no setup cost."""

    params: nn.DenoiserParams
    schedule: NoiseSchedule
    packed: kernels.PackedNet
    embed: np.ndarray
    backend: str


def make_context(params: nn.DenoiserParams, schedule: NoiseSchedule,
                 backend=None) -> ReverseContext:
    return ReverseContext(
        params=params,
        schedule=schedule,
        packed=kernels.pack_net(params),
        embed=_embed_table(params.embed_dim, params.embed_max_period, schedule.steps),
        backend=backend or kernels.backend_name(),
    )


_EMPTY_ROW = np.empty(0)
_EMPTY_BLOCK = np.empty((0, 0))


def run_reverse(ctx: ReverseContext, obs_flat: np.ndarray, x_flat: np.ndarray,
                k_start: int, rng, n_inpaint: int = 0, region_len: int = 0,
                seed_region=None) -> np.ndarray:
    """Draw the noise blocks and run the fused reverse loop from ``k_start``.

    Canonical draw order: the step-noise block (k_start, len(x)), then, when
    inpainting, the inpaint-noise block (n_inpaint, region_len). Keeping the
    order fixed here is what makes runs reproducible across backends.
    """
    s = ctx.schedule
    if not 0 <= k_start <= s.steps:
        raise DomainError(f"start level {k_start} outside [0, {s.steps}]")
    if k_start == 0:
        return x_flat.copy()
    step_noise = rng.standard_normal((k_start, x_flat.size))
    if n_inpaint > 0:
        if seed_region is None or region_len <= 0 or n_inpaint > k_start:
            raise ConfigError("bad inpainting request")
        inpaint_noise = rng.standard_normal((n_inpaint, region_len))
        seed_region = np.ascontiguousarray(seed_region, dtype=np.float64)
    else:
        inpaint_noise = _EMPTY_BLOCK
        seed_region = _EMPTY_ROW
    out = kernels.reverse_diffuse(
        ctx.packed,
        np.ascontiguousarray(obs_flat, dtype=np.float64),
        np.ascontiguousarray(x_flat, dtype=np.float64),
        int(k_start), ctx.embed, s.scale, s.eps_coef, s.sigma,
        step_noise, s.sqrt_alpha_bar, s.sqrt_one_minus_alpha_bar,
        int(n_inpaint), int(region_len), seed_region, inpaint_noise,
        backend=ctx.backend,
    )
    if not np.isfinite(out).all():
        raise NumericError("reverse diffusion produced non-finite values")
    return out


def sample_sequence(params: nn.DenoiserParams, obs_window: np.ndarray,
                    schedule: NoiseSchedule, rng, seq_shape,
                    ctx: ReverseContext = None) -> np.ndarray:
    """Sample a clean action sequence from pure noise, conditioned on the
    observation window: K reverse steps from a standard-normal start."""
    if ctx is None:
        ctx = make_context(params, schedule)
    p, a = seq_shape
    x = rng.standard_normal(p * a)
    out = run_reverse(ctx, obs_window.ravel(), x, schedule.steps, rng)
    return out.reshape(p, a)
