"""Backend parity: the compiled kernels against the numpy reference."""

import numpy as np
import pytest

from disco import kernels, nn
from disco import diffusion as dd
from disco.rng import stream

needs_native = pytest.mark.skipif(
    "native" not in kernels.available_backends(),
    reason="compiled kernel not built")


def random_net(rng, sizes=(31, 40, 40, 12), activation="relu"):
    return nn.init_mlp(list(sizes), rng, activation=activation, embed_dim=6)


class TestPacking:
    def test_pyref_forward_bit_matches_nn(self):
        rng = np.random.default_rng(0)
        params = random_net(rng)
        pack = kernels.pack_net(params)
        for _ in range(10):
            x = rng.standard_normal(31)
            assert np.array_equal(kernels.mlp_forward(pack, x, backend="python"),
                                  nn.mlp_forward(params, x))

    @needs_native
    @pytest.mark.parametrize("activation", ["relu", "gelu"])
    def test_native_forward_close_to_reference(self, activation):
        rng = np.random.default_rng(1)
        params = random_net(rng, activation=activation)
        pack = kernels.pack_net(params)
        for _ in range(20):
            x = rng.standard_normal(31)
            a = kernels.mlp_forward(pack, x, backend="python")
            b = kernels.mlp_forward(pack, x, backend="native")
            np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-12)


class TestReverseLoopParity:
    @needs_native
    def test_full_loop_with_inpainting(self):
        rng = np.random.default_rng(2)
        horizon_rows, act = 6, 2
        obs_len = 9
        in_dim = obs_len + horizon_rows * act + 8
        params = nn.init_mlp([in_dim, 32, 32, horizon_rows * act], rng, embed_dim=8)
        s = dd.make_schedule(40, 0.005, 0.25)
        for trial in range(5):
            obs = rng.standard_normal(obs_len)
            x = rng.standard_normal(horizon_rows * act)
            k_start = int(rng.integers(5, 41))
            n_ip = int(rng.integers(0, k_start + 1))
            region = 2 * act
            seedr = rng.standard_normal(region)
            out = {}
            for backend in ("python", "native"):
                ctx = dd.make_context(params, s, backend=backend)
                out[backend] = dd.run_reverse(
                    ctx, obs, x, k_start, stream(trial, "par"),
                    n_inpaint=n_ip, region_len=region if n_ip else 0,
                    seed_region=seedr if n_ip else None)
            np.testing.assert_allclose(out["native"], out["python"],
                                       rtol=1e-9, atol=1e-11)

    @needs_native
    def test_backends_consume_identical_draws(self):
        # the rho=1 exact-inpaint identity must hold on both backends
        from disco import copilot as cp
        rng = np.random.default_rng(3)
        horizon = cp.HorizonConfig(obs_horizon=3, delay=2, replan=5)
        in_dim = 3 * 4 + 8 * 2 + 8
        params = nn.init_mlp([in_dim, 24, 8 * 2], rng, embed_dim=8)
        s = dd.make_schedule(30, 0.01, 0.2)
        obs = rng.standard_normal((3, 4))
        seed_vals = rng.uniform(-1, 1, (8, 2))
        cfg = cp.CopilotConfig(gamma_ratio=0.6, inpaint_ratio=1.0, horizon=horizon)
        for backend in kernels.available_backends():
            ctx = dd.make_context(params, s, backend=backend)
            seed = dd.ActionSequence(seed_vals, level=0, frame_origin=0)
            out = cp.disco_infer(params, obs, seed, cfg, s, stream(9, "id"), ctx=ctx)
            assert np.array_equal(out.values[:3], seed_vals[:3]), backend


class TestBackendSelection:
    def test_active_backend_reported(self):
        assert kernels.backend_name() in ("python", "native")

    def test_unknown_backend_rejected(self):
        from disco.errors import ConfigError
        with pytest.raises(ConfigError):
            kernels.get_backend("cuda")
