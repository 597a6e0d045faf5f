"""Shared numeric helpers: guarded exponentials, seeded streams, intervals."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# exp() overflows a little above 709; clamp below that with margin.
EXP_LIMIT = 700.0

Z95 = 1.959963984540054


class ExponentOverflowError(ValueError):
    """An exponent left the representable range (|x| > 700)."""


def guarded_exp(x):
    """exp(x) with an explicit error once |x| exceeds the clamp limit."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > EXP_LIMIT):
        worst = float(np.max(np.abs(arr)))
        raise ExponentOverflowError(
            f"exponent magnitude {worst:.3g} exceeds clamp limit {EXP_LIMIT:g}"
        )
    out = np.exp(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def wilson_interval(k, n, z=Z95):
    """Wilson score interval for a binomial proportion k/n."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1.0 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def trial_rng(master_seed, index):
    """Independent per-trial generator, reproducible irrespective of worker count."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def run_indexed_trials(n_trials, seed, trial_fn, parallel=1):
    """Run trial_fn(rng, i) for i in range(n_trials); results ordered by index.

    Each trial gets its own RNG stream keyed by (seed, i), so the outcome list
    is byte-identical for any worker count.
    """
    results = [None] * n_trials
    if parallel <= 1:
        for i in range(n_trials):
            results[i] = trial_fn(trial_rng(seed, i), i)
        return results
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        futures = {pool.submit(trial_fn, trial_rng(seed, i), i): i for i in range(n_trials)}
        for fut, i in futures.items():
            results[i] = fut.result()
    return results


def fmt17(x):
    """Full-precision decimal rendering (17 significant digits)."""
    return format(float(x), ".17g")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
