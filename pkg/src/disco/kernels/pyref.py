"""Pure-numpy kernels: the reference implementation of the hot loops.

These mirror disco.kernels._native exactly (same math, same consumption of
pre-drawn noise) and are the fallback when the compiled extension is absent.
They are also the ground truth the native kernel is tested against.
"""

import numpy as np

BACKEND_NAME = "python"


def mlp_forward(net, x):
    """Forward through a packed net; ``x`` is the fully assembled input."""
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            if net.activation_id == 0:
                h = np.maximum(h, 0.0)
            else:
                u = 0.7978845608028654 * (h + 0.044715 * h**3)
                h = 0.5 * h * (1.0 + np.tanh(u))
    return h


def reverse_diffuse(net, obs_flat, x, k_start, embed, scale, eps_coef, sigma,
                    step_noise, sqrt_ab, sqrt_1mab, n_inpaint, region_len,
                    seed_region, inpaint_noise):
    """Run ``k_start`` reverse-diffusion steps on the flattened sequence ``x``.

    Per step (level k down to 1): predict the noise from
    concat(obs, x, embed[k]), apply the posterior update
    ``scale[k] * (x - eps_coef[k] * eps) + sigma[k] * z``, then, for the
    first ``n_inpaint`` steps, overwrite the first ``region_len`` entries
    with the clean seed region re-noised to the step's target level.
    All randomness comes in through ``step_noise`` / ``inpaint_noise``.
    """
    x = x.copy()
    for i, k in enumerate(range(k_start, 0, -1)):
        inp = np.concatenate([obs_flat, x, embed[k]])
        eps = mlp_forward(net, inp)
        x = scale[k] * (x - eps_coef[k] * eps) + sigma[k] * step_noise[i]
        if i < n_inpaint:
            lvl = k - 1
            x[:region_len] = (
                sqrt_ab[lvl] * seed_region + sqrt_1mab[lvl] * inpaint_noise[i]
            )
    return x
