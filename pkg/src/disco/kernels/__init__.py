"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The reverse-diffusion loop evaluates the denoiser MLP once per diffusion
level per plan; at the small matrix sizes used here the per-call overhead of
vectorized numpy dominates, so the loop is fused into a single Cython kernel
when the extension built. Backend selection happens once at import:

  * env var ``DISCO_KERNELS=native`` forces the compiled kernel (raises if
    it did not build), ``DISCO_KERNELS=python`` forces the numpy fallback;
  * default (``auto``): native when available, else python.

Both backends consume identical pre-drawn noise arrays, so a given seed
produces the same draws either way; outputs agree to floating-point
round-off (exact equality is only guaranteed within one backend, which is
all reproducibility of recorded episodes requires — records carry the
backend name).
"""

import os
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from . import pyref

try:
    from . import _native
except ImportError:  # extension not built
    _native = None

_choice = os.environ.get("DISCO_KERNELS", "auto").lower()
if _choice == "python":
    _impl = pyref
elif _choice == "native":
    if _native is None:
        raise ConfigError(
            "DISCO_KERNELS=native but the compiled kernel is not available; "
            "reinstall with a C compiler or unset DISCO_KERNELS"
        )
    _impl = _native
elif _choice == "auto":
    _impl = _native if _native is not None else pyref
else:
    raise ConfigError(f"DISCO_KERNELS must be auto|native|python, not {_choice!r}")


def backend_name() -> str:
    """Name of the active backend: 'native' or 'python'."""
    return _impl.BACKEND_NAME


def available_backends():
    return ("python", "native") if _native is not None else ("python",)


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return _impl
    if name == "python":
        return pyref
    if name == "native":
        if _native is None:
            raise ConfigError("native kernel backend not built")
        return _native
    raise ConfigError(f"unknown kernel backend {name!r}")


@dataclass(frozen=True)
class PackedNet:
    """MLP weights flattened for the kernels.

    ``weights``/``biases`` keep the (in, out) layout for numpy; ``wt_flat``
    holds each matrix transposed to (out, in) and raveled, which makes the
    compiled matvec a contiguous row dot.
    """

    weights: tuple
    biases: tuple
    wt_flat: np.ndarray
    b_flat: np.ndarray
    in_sizes: np.ndarray
    out_sizes: np.ndarray
    activation_id: int
    max_width: int
    input_dim: int
    output_dim: int


def pack_net(params) -> PackedNet:
    """Pack DenoiserParams once per checkpoint for repeated kernel calls."""
    weights = tuple(np.ascontiguousarray(w, dtype=np.float64) for w in params.weights)
    biases = tuple(np.ascontiguousarray(b, dtype=np.float64) for b in params.biases)
    wt_flat = np.concatenate([np.ascontiguousarray(w.T).ravel() for w in weights])
    b_flat = np.concatenate(biases)
    in_sizes = np.array([w.shape[0] for w in weights], dtype=np.int64)
    out_sizes = np.array([w.shape[1] for w in weights], dtype=np.int64)
    return PackedNet(
        weights=weights,
        biases=biases,
        wt_flat=wt_flat,
        b_flat=b_flat,
        in_sizes=in_sizes,
        out_sizes=out_sizes,
        activation_id=0 if params.activation == "relu" else 1,
        max_width=int(max(out_sizes.max(), in_sizes.max())),
        input_dim=int(in_sizes[0]),
        output_dim=int(out_sizes[-1]),
    )


def mlp_forward(net: PackedNet, x: np.ndarray, backend=None) -> np.ndarray:
    return get_backend(backend).mlp_forward(net, np.ascontiguousarray(x, dtype=np.float64))


def reverse_diffuse(net, obs_flat, x, k_start, embed, scale, eps_coef, sigma,
                    step_noise, sqrt_ab, sqrt_1mab, n_inpaint, region_len,
                    seed_region, inpaint_noise, backend=None):
    return get_backend(backend).reverse_diffuse(
        net, obs_flat, x, k_start, embed, scale, eps_coef, sigma,
        step_noise, sqrt_ab, sqrt_1mab, n_inpaint, region_len,
        seed_region, inpaint_noise,
    )
