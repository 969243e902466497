"""Shared fixtures: tiny checkpoints for plumbing tests and cached trained
checkpoints for the acceptance suite.

Trained checkpoints are expensive (minutes), so they are built once and
cached on disk under .cache/ keyed by their training configuration; delete
the directory to force retraining after algorithm changes.
"""

import hashlib
import json
import pathlib

import pytest

from disco.harness.checkpoint import load_checkpoint, save_checkpoint
from disco.harness.data import collect_demos
from disco.harness.train import TrainConfig, train

CACHE_DIR = pathlib.Path(__file__).resolve().parent.parent / ".cache"

# one training recipe per checkpoint the acceptance suite needs
RECIPES = {
    "drive4_seq": dict(env="drive4", demos=200, demo_seed=1000,
                       train_seed=2000, epochs=300,
                       config=dict(hidden=(512, 512, 512))),
    "drive4_single": dict(env="drive4", demos=200, demo_seed=1000,
                          train_seed=2100, epochs=150,
                          config=dict(hidden=(256, 256, 256), single_step=True)),
    "reach2_seq": dict(env="reach2", demos=200, demo_seed=1200,
                       train_seed=2200, epochs=200,
                       config=dict(hidden=(384, 384, 384))),
}


def _recipe_digest(name: str) -> str:
    blob = json.dumps(RECIPES[name], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def trained_checkpoint(name: str):
    recipe = RECIPES[name]
    CACHE_DIR.mkdir(exist_ok=True)
    path = CACHE_DIR / f"{name}-{_recipe_digest(name)}.ckpt"
    if path.exists():
        return load_checkpoint(path)
    import time
    t0 = time.time()
    ds = collect_demos(recipe["env"], recipe["demos"], seed=recipe["demo_seed"])
    result = train(ds, TrainConfig(**recipe["config"]),
                   epochs=recipe["epochs"], seed=recipe["train_seed"])
    result.checkpoint.train_meta["wall_minutes"] = round(
        (time.time() - t0) / 60.0, 2)
    save_checkpoint(result.checkpoint, path)
    return result.checkpoint


@pytest.fixture(scope="session")
def drive4_seq_ckpt():
    return trained_checkpoint("drive4_seq")


@pytest.fixture(scope="session")
def drive4_single_ckpt():
    return trained_checkpoint("drive4_single")


@pytest.fixture(scope="session")
def reach2_seq_ckpt():
    return trained_checkpoint("reach2_seq")


@pytest.fixture(scope="session")
def tiny_seq_ckpt():
    """Untrained but structurally valid drive4 sequence checkpoint."""
    ds = collect_demos("drive4", 4, seed=50)
    return train(ds, TrainConfig(hidden=(16,)), epochs=0, seed=51).checkpoint
