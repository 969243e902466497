"""Operational shell: demo collection, training, evaluation, sweeps,
persistence, and the command-line interface."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint  # noqa: F401
from .data import DemoDataset, Normalizer, collect_demos  # noqa: F401
from .episodes import replay_record, run_episode, run_episodes  # noqa: F401
from .metrics import summarize  # noqa: F401
from .records import EpisodeRecord, read_records, write_records  # noqa: F401
from .sweep import SweepSpec, sweep  # noqa: F401
from .train import TrainConfig, train  # noqa: F401
