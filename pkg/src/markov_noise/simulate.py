"""Trajectory-level Monte Carlo for stationary two-time statistics.

Trials start from ``X_0 ~ pi`` and run the jump chain: hold at ``w`` for an
Exp(``-q_ww``) time (inverse-CDF sampling), then jump to ``j`` with probability
``q_wj / -q_ww``.  All trials are advanced together as numpy arrays.

Randomness comes from counter-based Philox streams keyed by ``(seed, block)``
where a block is a fixed run of :data:`BLOCK_SIZE` consecutive trials, so results
do not depend on the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .chain_models import Chain
from .errors import InvalidParams, NegativeTime
from .noise import Observable

BLOCK_SIZE = 8192


@dataclass(frozen=True)
class TrajectoryEstimate:
    quantity: str
    t: float
    point_estimate: float
    std_error: float
    trials: int
    seed: int
    control_variate_mean: float | None = None

    def z_score(self, exact: float) -> float:
        diff = self.point_estimate - exact
        if self.std_error == 0.0:
            return 0.0 if abs(diff) <= 1e-12 else float("inf") * np.sign(diff)
        return diff / self.std_error

    def to_dict(self) -> dict:
        return asdict(self)


def _stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


class _JumpTables:
    def __init__(self, chain: Chain):
        Q = np.asarray(chain.generator, dtype=float)
        self.rate = -np.diag(Q).copy()
        jumps = np.where(np.eye(Q.shape[0], dtype=bool), 0.0, Q)
        with np.errstate(invalid="ignore", divide="ignore"):
            probs = jumps / self.rate[:, None]
        self.cum = np.cumsum(np.nan_to_num(probs), axis=1)
        self.cum[:, -1] = 1.0
        self.pi_cum = np.cumsum(chain.pi)
        self.pi_cum[-1] = 1.0


def _run_block(tables: _JumpTables, t: float, size: int, rng: np.random.Generator):
    start = np.searchsorted(tables.pi_cum, rng.random(size), side="right")
    state = start.copy()
    if t == 0:
        return start, state
    clock = np.zeros(size)
    active = np.arange(size)
    while active.size:
        s = state[active]
        hold = -np.log1p(-rng.random(active.size)) / tables.rate[s]
        clock[active] += hold
        moving = clock[active] <= t
        active = active[moving]
        if not active.size:
            break
        u = rng.random(active.size)
        rows = tables.cum[state[active]]
        state[active] = (rows <= u[:, None]).sum(axis=1)
    return start, state


def _threads(threads: int | None) -> int:
    return threads or int(os.environ.get("MARKOV_NOISE_THREADS", 0)) or os.cpu_count() or 1


def sample_endpoints(
    chain: Chain, t: float, trials: int, seed: int, threads: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Exact samples of ``(X_0, X_t)`` under stationarity, as index arrays."""
    if t < 0:
        raise NegativeTime("t must be nonnegative", t=t)
    if trials < 1:
        raise InvalidParams("trials must be >= 1", trials=trials)
    tables = _JumpTables(chain)
    sizes = [min(BLOCK_SIZE, trials - b * BLOCK_SIZE) for b in range(-(-trials // BLOCK_SIZE))]

    def work(b):
        return _run_block(tables, float(t), sizes[b], _stream(seed, b))

    n_threads = _threads(threads)
    if n_threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(b) for b in range(len(sizes))]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sample_endpoint(chain: Chain, t: float, seed: int) -> tuple:
    """One ``(X_0, X_t)`` pair as state labels."""
    start, end = sample_endpoints(chain, t, 1, seed, threads=1)
    return chain.states[int(start[0])], chain.states[int(end[0])]


def _summarise(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    mean = float(np.mean(samples))
    std = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    return mean, float(std / np.sqrt(n))


def estimate_cov(
    chain: Chain, f, t: float, trials: int, seed: int, threads: int | None = None
) -> TrajectoryEstimate:
    """``E[f(X_0) f(X_t)] - E_pi[f]^2`` with the exact stationary mean as control.

    Averages ``(f(X_0) - mu)(f(X_t) - mu)`` with ``mu = E_pi[f]``, which has the
    same expectation under stationarity and smaller variance.
    """
    values = f.values if isinstance(f, Observable) else np.asarray(f, dtype=float)
    mean = math.fsum(chain.pi * values)
    start, end = sample_endpoints(chain, t, trials, seed, threads)
    centred = values - mean
    est, se = _summarise(centred[start] * centred[end])
    return TrajectoryEstimate("covariance", float(t), est, se, trials, seed, mean)


def estimate_flip(
    chain: Chain, f, t: float, trials: int, seed: int, threads: int | None = None
) -> TrajectoryEstimate:
    values = f.values if isinstance(f, Observable) else np.asarray(f, dtype=float)
    start, end = sample_endpoints(chain, t, trials, seed, threads)
    est, se = _summarise((values[start] != values[end]).astype(float))
    return TrajectoryEstimate("flip_probability", float(t), est, se, trials, seed)


def estimate_return_prob(
    chain: Chain, t: float, trials: int, seed: int, threads: int | None = None
) -> TrajectoryEstimate:
    start, end = sample_endpoints(chain, t, trials, seed, threads)
    est, se = _summarise((start == end).astype(float))
    return TrajectoryEstimate("return_probability", float(t), est, se, trials, seed)
