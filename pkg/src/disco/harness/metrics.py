"""Episode metrics with bootstrap confidence intervals."""

import numpy as np

from .. import rng as rngmod
from ..envs import CRASH, SUCCESS, TIMEOUT, WRONG_GOAL

N_BOOTSTRAP = 1000

RATE_KEYS = {
    "success_rate": SUCCESS,
    "wrong_rate": WRONG_GOAL,
    "crash_rate": CRASH,
    "timeout_rate": TIMEOUT,
}


def bootstrap_ci(values: np.ndarray, rng, n_resamples: int = N_BOOTSTRAP):
    """95% percentile bootstrap CI of the mean."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return (float("nan"), float("nan"))
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return (float(lo), float(hi))


def summarize(records, seed: int = 0) -> dict:
    """Success/wrong/crash/timeout rates, mean time, mean collisions, each
    with a bootstrap CI. Aborted live trials are excluded."""
    records = [r for r in records if r.outcome["result"] != "aborted"]
    n = len(records)
    out = {"n": n}
    if n == 0:
        return out
    results = [r.outcome["result"] for r in records]
    times = np.array([r.time_s for r in records])
    colls = np.array([r.outcome["collisions"] for r in records], dtype=float)
    stutters = np.array([r.stutters for r in records], dtype=float)
    rng = rngmod.stream(seed, "bootstrap")
    ci = {}
    for key, result in RATE_KEYS.items():
        flags = np.array([res == result for res in results], dtype=float)
        out[key] = float(flags.mean())
        ci[key] = bootstrap_ci(flags, rng)
    out["mean_time_s"] = float(times.mean())
    ci["mean_time_s"] = bootstrap_ci(times, rng)
    out["mean_collisions"] = float(colls.mean())
    ci["mean_collisions"] = bootstrap_ci(colls, rng)
    out["total_stutters"] = int(stutters.sum())
    out["ci95"] = ci
    return out


def cis_disjoint(a, b) -> bool:
    """True when two (lo, hi) intervals do not overlap."""
    return a[1] < b[0] or b[1] < a[0]
