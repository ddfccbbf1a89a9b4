"""
Seeded, chunked Gaussian sampling.

Draw budgets are cut into fixed chunks of ``CHUNK`` rows. Chunk ``k`` of stream
``s`` under root seed ``seed`` gets its own Philox generator keyed by
``SeedSequence(seed, spawn_key=(s, k))``, so the bits drawn for a chunk never
depend on which thread ran it or how many threads there were.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np
from numpy.typing import NDArray

from wdp_lti.matgauss import Gaussian, spd_sqrt

CHUNK = 1 << 16
THREADS_ENV = "WDP_LTI_THREADS"
U64_MAX = (1 << 64) - 1

T = TypeVar("T")


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= U64_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(n: int, chunk: int = CHUNK) -> list[int]:
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def thread_count() -> int:
    """Worker count from ``WDP_LTI_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if k < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0")
    return k or (os.cpu_count() or 1)


def map_chunks(fn: Callable[[int], T], n_chunks: int) -> list[T]:
    """Apply ``fn`` to chunk indices, in parallel if allowed; results come back in index order."""
    workers = min(thread_count(), n_chunks)
    if workers <= 1:
        return [fn(k) for k in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_chunks)))


def gaussian_factor(P: Gaussian) -> NDArray:
    """Symmetric factor ``L`` with ``L @ L.T == P.cov``."""
    if P.dim == 0:
        return np.zeros((0, 0))
    return spd_sqrt(P.cov)


def draw(P: Gaussian, size: int, rng: np.random.Generator, factor: NDArray | None = None) -> NDArray:
    L = gaussian_factor(P) if factor is None else factor
    z = rng.standard_normal((size, P.dim))
    return P.mean + z @ L.T


def sample(P: Gaussian, n: int, seed: int, stream: int = 0) -> NDArray:
    """``n`` independent draws from ``P`` as an ``(n, dim)`` array.

    Output is bit-identical for the same ``(P, n, seed, stream)`` regardless of
    ``WDP_LTI_THREADS``.
    """
    sizes = chunk_sizes(n)
    L = gaussian_factor(P)

    def one(k: int) -> NDArray:
        return draw(P, sizes[k], chunk_rng(seed, stream, k), L)

    return np.concatenate(map_chunks(one, len(sizes)), axis=0)


